#pragma once

#include "kmd/signal.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace kmd {

/// One Gabor atom chi_{tau,omega,theta}(t) =
///   (2/pi^3)^{1/4} sqrt(omega/alpha) cos(omega (t-tau) + theta) exp(-omega^2 (t-tau)^2 / alpha^2).
struct GaborAtom {
    double tau = 0.0;
    double omega = 1.0;
    double theta = 0.0;
    double alpha = 1.0;

    GaborAtom() = default;
    GaborAtom(double tau_, double omega_, double theta_, double alpha_)
        : tau(tau_), omega(omega_), theta(theta_), alpha(alpha_) {
        if (!(omega > 0) || !(alpha > 0)) throw SpecInvalid("GaborAtom: omega, alpha must be > 0");
    }
};

double gabor_eval(const GaborAtom& atom, double t);

/// Cosine/sine quadrature pair for one (tau, omega) cell:
///   chi_c(t) = (2/pi)^{1/4} sqrt(omega/alpha) cos(omega (t-tau)) exp(-omega^2 (t-tau)^2 / alpha^2)
/// and the sine analogue. Sampled on the mesh.
void gabor_pair(const TimeMesh& mesh, double tau, double omega, double alpha, Vector& chi_c,
                Vector& chi_s);

/// Time-frequency grid: uniform tau nodes, uniform or logarithmic omega nodes.
struct TFGrid {
    Vector tau_values;
    Vector omega_values;
    bool log_omega = false;

    static TFGrid linear(double tau0, double tau1, Index n_tau, double omega_min, double omega_max,
                         Index n_omega);
    static TFGrid logarithmic(double tau0, double tau1, Index n_tau, double omega_min,
                              double omega_max, Index n_omega);

    Index n_tau() const { return tau_values.size(); }
    Index n_omega() const { return omega_values.size(); }
    double omega_min() const { return omega_values(0); }
    double omega_max() const { return omega_values(omega_values.size() - 1); }
    double dtau() const { return tau_values(1) - tau_values(0); }

    /// Quadrature weight of node i (trapezoid: half weight on the boundary).
    double tau_weight(Index i) const;
    double omega_weight(Index j) const;
    double cell_weight(Index i, Index j) const { return tau_weight(i) * omega_weight(j); }

    /// Bin index whose node is nearest to omega, clamped into range.
    Index omega_bin(double omega) const;
};

/// Dense symmetric kernel matrix on a mesh. `weight` records the quadrature
/// mass absorbed during aggregation (1 for elementary kernels).
struct KernelMatrix {
    TimeMesh mesh;
    Matrix entries;
    double weight = 1.0;

    KernelMatrix() = default;
    KernelMatrix(TimeMesh m, Matrix e, double w = 1.0)
        : mesh(m), entries(std::move(e)), weight(w) {}

    Index n() const { return entries.rows(); }
};

/// Rank-2 kernel K_{tau,omega}(s,t) = chi_c(s)chi_c(t) + chi_s(s)chi_s(t).
KernelMatrix kernel_tau_omega(const TimeMesh& mesh, double tau, double omega, double alpha);

/// Cell subset of a TFGrid, as (tau index, omega index) pairs.
using CellSet = std::vector<std::pair<Index, Index>>;

/// Aggregated kernel K = sum_{cells} w_cell K_{tau,omega}; full grid when no
/// subset is given. Deterministic summation order (tau-major).
KernelMatrix kernel_aggregate(const TimeMesh& mesh, const TFGrid& grid, double alpha,
                              const std::optional<CellSet>& subset = std::nullopt);

/// Phase-based mode kernel K(s,t) = exp(-(t-s)^2/gamma^2) cos(theta(t) - theta(s)).
KernelMatrix kernel_phase(const TimeMesh& mesh, const Vector& theta_e, double gamma);

/// Solve (K_u + sigma^2 I) f = v. sigma = 0 falls back to an eigenvalue-cutoff
/// pseudo-inverse and throws NearSingular when the conditioning is hopeless.
SampledSignal solve_regularized(const KernelMatrix& K_u, double sigma, const SampledSignal& v);

}  // namespace kmd
