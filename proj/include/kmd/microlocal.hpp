#pragma once

#include "kmd/squeeze.hpp"

#include <optional>

namespace kmd {

/// Result of one windowed least-squares fit of phase-modulated polynomial
/// wavelets. Z is ordered [(0,c)..(d,c), (0,s)..(d,s)].
struct MicrolocalFit {
    Vector Z;
    double a = 0.0;       // sqrt(Z_{0,c}^2 + Z_{0,s}^2)
    double dtheta = 0.0;  // atan2(-Z_{0,s}, Z_{0,c}) in (-pi, pi]
};

/// Fits f against the basis cos(theta_e(t)) (t-tau)^n w(t), sin(theta_e(t)) (t-tau)^n w(t)
/// for n = 0..d with window w(t) = exp(-(window_scale (t-tau)/alpha)^2); the signal is
/// windowed by w internally. Support is truncated at |t - tau| <= 6 alpha / window_scale.
MicrolocalFit microlocal_fit(double tau, const Vector& theta_e, const SampledSignal& f,
                             double alpha, Index d, double window_scale);

/// Sweep-oriented fitting: binds one (theta_e, f) pair, precomputes the
/// modulated products once, then fits per tau from windowed moments.
/// fit() is safe to call concurrently for distinct tau.
class MicrolocalEngine {
  public:
    MicrolocalEngine(TimeMesh mesh, double alpha, Index d);

    void bind(const Vector& theta_e, const Vector& f);
    MicrolocalFit fit(double tau, double window_scale) const;

    double alpha() const { return alpha_; }
    Index degree() const { return d_; }

  private:
    TimeMesh mesh_;
    double alpha_;
    Index d_;
    Vector cc_, ss_, cs_, fc_, fs_;
};

/// d = 0 fit against the locally-linear phase (t - tau) * omega: returns the
/// pointwise amplitude and phase of the component at frequency omega.
MicrolocalFit pointwise_amp_phase(double tau, double omega, const SampledSignal& v, double alpha);

enum class EnergyWeighting {
    l2,    // f = v (fast path; exact in the high-noise limit)
    kinv,  // f = (K_u + sigma^2 I)^{-1} v
};

struct LowestFrequencyOptions {
    double threshold = 0.1;  // fraction of max S when relative; absolute floor otherwise
    bool threshold_is_absolute = false;
    EnergyWeighting weighting = EnergyWeighting::l2;
    double sigma = 0.01;  // only used by kinv weighting
    Index max_ridges = 8;
};

/// Crest frequency and phase of the lowest-frequency mode, sampled on the mesh.
struct LowestFrequency {
    Vector omega_low;  // instantaneous frequency along the crest
    Vector theta_low;  // unwrapped instantaneous phase along the crest
    double max_S = 0.0;  // maximum of the max-pool energy of this signal
};

std::optional<LowestFrequency> lowest_frequency(const SampledSignal& v, const TFGrid& grid,
                                                double alpha, const LowestFrequencyOptions& opt);
std::optional<LowestFrequency> lowest_frequency(const SampledSignal& v, const TFGrid& grid,
                                                double alpha, double threshold);

/// Per-(k,j) samples of estimated Fourier coefficients c_{k,j}(tau) = Z_{k,j}/Z_{1,c}.
struct CoeffHistogram {
    Index k_max = 15;
    double interval_width = 0.002;  // L
    double cutoff = 0.05;
    std::vector<std::vector<double>> cos_samples;  // index k-2 for k = 2..k_max
    std::vector<std::vector<double>> sin_samples;
};

/// Windowed Gram fits in the basis {cos(theta), cos(k theta), sin(k theta)} * w,
/// k = 2..k_max, every `stride`-th mesh point. Ill-conditioned taus are omitted.
CoeffHistogram waveform_coeffs(const Vector& theta_e, const SampledSignal& v, Index k_max,
                               double alpha, Index stride = 1);

/// Mean over the densest width-L interval, or 0 when that interval holds fewer
/// than cutoff * N samples. Ties resolve to the leftmost interval.
double aggregate_coeff(std::vector<double> samples, double L, double cutoff);

/// Aggregate every overtone and assemble the waveform cos(t) + sum c_k ... .
Waveform aggregate_coeffs(const CoeffHistogram& h);

}  // namespace kmd
