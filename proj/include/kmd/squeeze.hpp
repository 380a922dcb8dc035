#pragma once

#include "kmd/recovery.hpp"

namespace kmd {

/// Gabor analysis against a fixed mesh: dt-weighted inner products
/// W_c = <chi_{tau,omega,c}, f>, W_s = <chi_{tau,omega,s}, f> with the Gaussian
/// window truncated at |t - tau| <= 6 alpha / omega.
class GaborAnalyzer {
  public:
    GaborAnalyzer(TimeMesh mesh, double alpha) : mesh_(mesh), alpha_(alpha) {
        if (!(alpha > 0)) throw SpecInvalid("GaborAnalyzer: alpha must be > 0");
    }

    double alpha() const { return alpha_; }
    const TimeMesh& mesh() const { return mesh_; }

    void eval(const Vector& f, double tau, double omega, double& wc, double& ws) const;

    /// theta_e(tau, omega) = phase(W_c - i W_s).
    double theta_e(const Vector& f, double tau, double omega) const;

    /// omega_e from the atan2 difference across two columns spaced probe_dt.
    double omega_e(const Vector& f, double tau, double omega, double probe_dt) const;

    /// E = W_c^2 + W_s^2 at one point.
    double energy(const Vector& f, double tau, double omega) const;

  private:
    TimeMesh mesh_;
    double alpha_;
};

struct WaveletMaps {
    GridMap Wc;
    GridMap Ws;
};

/// W_c, W_s over a full TF grid.
WaveletMaps wavelet_coeffs(const SampledSignal& f, const TFGrid& grid, double alpha);

/// theta_e = atan2(-W_s, W_c) in (-pi, pi]; NaN where both coefficients vanish.
PhaseMap phase_field(const GridMap& Wc, const GridMap& Ws);

/// omega_e(tau_k, omega) from successive tau columns; the last column copies
/// its predecessor. Range limited to |omega_e| <= pi / dtau.
FreqMap freq_field(const GridMap& Wc, const GridMap& Ws);

/// Max-pool transport: S(tau, omega) = max over source cells omega' with
/// omega_e(tau, omega') binned at omega (clamped into the grid).
EnergyMap maxpool_energy(const EnergyMap& E, const FreqMap& omega_e);

/// Sum transport S_E with bin mass E * d(omega') / delta.
EnergyMap synchro_energy(const EnergyMap& E, const FreqMap& omega_e, double delta);

/// A connected crest-following subset of the TF grid with one crest per tau column.
struct Ridge {
    int label = 0;
    CellSet cells;
    std::vector<std::pair<Index, Index>> crest;  // (tau index, omega index), tau-sorted
    std::vector<double> crest_omega;             // sub-bin crest frequency per crest entry
    double energy = 0.0;
    double mean_omega = 0.0;
};

/// Crest-tracked superlevel decomposition of S at threshold_frac * max S.
/// Tracking follows each peak through frequency crossings, so crossing modes
/// come out as separate ridges with disjoint cell sets.
std::vector<Ridge> extract_ridges(const EnergyMap& S, double threshold_frac, Index max_ridges);

/// First crossing-frequency network: aggregate K_{tau,omega} over each ridge's
/// cells and optimally recover.
Decomposition recover_by_partition(const SampledSignal& v, const std::vector<Ridge>& ridges,
                                   const TFGrid& grid, double alpha, double sigma);

/// Instantaneous-phase estimates theta_{i,e} on the signal mesh, one per ridge:
/// theta_e along the crest of S, unwrapped through crossing gaps by integrating
/// the crest frequency, and interpolated to the mesh. When the analyzed signal
/// f is given the phase is read at the sub-bin crest frequency.
std::vector<Vector> ridge_phases(const WaveletMaps& W, const EnergyMap& S,
                                 const std::vector<Ridge>& ridges, const TimeMesh& mesh,
                                 const SampledSignal* f = nullptr, double alpha = 25.0);

/// Second crossing-frequency network: squared-exponential phase kernels from
/// the given per-mode phases.
Decomposition recover_by_phase(const SampledSignal& v, const std::vector<Vector>& theta_list,
                               double gamma, double sigma);

}  // namespace kmd
