#pragma once

#include "kmd/kernels.hpp"

#include <string>
#include <vector>

namespace kmd {

/// A labeled additive family of kernels sharing one mesh, plus an optional
/// white-noise standard deviation.
struct KernelFamily {
    std::vector<std::string> labels;
    std::vector<KernelMatrix> kernels;
    double sigma = 0.0;

    void add(std::string label, KernelMatrix K);
    Index size() const { return static_cast<Index>(kernels.size()); }
    const TimeMesh& mesh() const { return kernels.front().mesh; }
};

/// Result of optimal recovery: one part w_i per kernel label plus the shared
/// representer f solving (sum_i K_i + sigma^2 I) f = v.
struct Decomposition {
    std::vector<std::string> labels;
    std::vector<SampledSignal> parts;        // w_i = K_i f
    Vector energies;                         // E(i) = f^T K_i f
    double noise_energy = 0.0;               // sigma^2 f^T f
    double total_energy = 0.0;               // v^T f
    SampledSignal representer;               // f

    const SampledSignal& part(const std::string& label) const;
};

/// w_i = K_i (sum_j K_j + sigma^2 I)^{-1} v, the conditional-mean / minmax recovery.
Decomposition optimal_recover(const KernelFamily& family, const SampledSignal& v);

/// Scalar field on a TF grid (also used for phase and frequency fields).
struct GridMap {
    TFGrid grid;
    Matrix values;  // n_tau x n_omega

    GridMap() = default;
    GridMap(TFGrid g, Matrix v) : grid(std::move(g)), values(std::move(v)) {}
    static GridMap zero(const TFGrid& g) {
        return GridMap(g, Matrix::Zero(g.n_tau(), g.n_omega()));
    }
};

using EnergyMap = GridMap;
using PhaseMap = GridMap;
using FreqMap = GridMap;

/// Alignment energy field E(tau,omega) = (<chi_c, f>)^2 + (<chi_s, f>)^2 with
/// the delta-t discrete inner product; uses the rank-2 structure, never a dense
/// kernel. `ip_weight` scales the inner products (dt by default; pass 1 for the
/// plain linear-algebra convention used by the conservation identity).
EnergyMap mode_energy_grid(const SampledSignal& f, const TFGrid& grid, double alpha,
                           double ip_weight);
EnergyMap mode_energy_grid(const SampledSignal& f, const TFGrid& grid, double alpha);

struct ConservationReport {
    double lhs = 0.0;  // v^T K^{-1} v
    double rhs = 0.0;  // sum of energies + noise term
    double gap = 0.0;  // relative gap
};

/// Checks E_tot = sum_i E(i) + sigma^2 f^T f for a labeled family decomposition.
ConservationReport energy_conservation_report(const KernelFamily& family, const SampledSignal& v,
                                              const Decomposition& d);

/// Checks v^T K^{-1} v = sum_cells w_cell E(tau,omega) + sigma^2 f^T f for the
/// aggregated time-frequency kernel, with f solving (K_u + sigma^2 I) f = v.
ConservationReport energy_conservation_report(const SampledSignal& v, const SampledSignal& f,
                                              const TFGrid& grid, double alpha, double sigma);

/// Windowed L2 alignment energy E_2 = (<chi, v>_dt)^2 restricted to
/// |t - tau| <= window_halfwidth * alpha / omega.
double l2_energy(const SampledSignal& v, const GaborAtom& atom, double window_halfwidth);

}  // namespace kmd
