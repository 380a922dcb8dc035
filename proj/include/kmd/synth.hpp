#pragma once

#include "kmd/signal.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace kmd {

/// Closed-form mode description: amplitude a(t) and frequency omega(t) as
/// polynomial + cosine terms, phase as the exact antiderivative of omega.
///   a(t)     = sum_p amp_poly[p] t^p + sum_q amp_cos[q].c * cos(amp_cos[q].w t + amp_cos[q].b)
///   omega(t) = sum_p freq_poly[p] t^p
/// An optional smooth cutoff multiplies the amplitude by
/// s((cut_time - t)/cut_width) (or its mirror for cut_rising).
struct ModeSpec {
    struct CosTerm {
        double c = 0.0, w = 0.0, b = 0.0;
    };
    std::vector<double> amp_poly;
    std::vector<CosTerm> amp_cos;
    std::vector<double> freq_poly;
    double phase_offset = 0.0;
    Waveform waveform;
    bool has_cut = false;
    bool cut_rising = false;  // amplitude turns ON after cut_time instead of off
    double cut_time = 0.0;
    double cut_width = 0.05;

    double amplitude(double t) const;
    double omega(double t) const;
    double phase(double t) const;  // exact polynomial antiderivative + offset
};

struct TruthBundle {
    std::vector<ModeSpec> specs;
    std::vector<ModeEstimate> modes;  // sampled truth
    SampledSignal clean;              // sum of modes
    SampledSignal noise;
};

/// Deterministic standard-normal samples (mt19937_64 + std::normal_distribution).
Vector gaussian_noise(Index n, std::uint64_t seed);

/// Sum of modes plus seeded white noise. Throws SpecInvalid if any omega <= 0
/// on the mesh.
std::pair<SampledSignal, TruthBundle> gen_multimode(const std::vector<ModeSpec>& specs,
                                                    const TimeMesh& mesh, double noise_sigma,
                                                    std::uint64_t seed);

/// The four-part additive-GP example: two AM/FM tones with known phases, a
/// quadratic trend, and unit white noise on a 302-point mesh over [0,1].
struct KnownExample {
    SampledSignal v;
    std::vector<SampledSignal> parts;  // v1..v4
    Vector theta1, theta2;             // the known phases on the mesh
};
KnownExample gen_example_known(std::uint64_t seed);

/// Random base waveform: c_{k,j} = 0 w.p. 1/2, else N(0, 1/k^4), k in k_lo..k_hi.
Waveform gen_random_waveform(std::uint64_t seed, Index k_lo = 2, Index k_hi = 7);

/// Canned presets used across tests and the CLI:
///   three_tf       - 3 cosine chirps + noise 0.01 on [0,1] (time-frequency pipeline)
///   crossing_tf    - 3 cosine modes, crossing pair + vanishing mode, sigma 0.01, [0,1]
///   triangle3      - 3 triangle modes on [-1,1] (separated frequencies, no noise)
///   ekg3           - 3 EKG modes on [-1,1]
///   unknown3       - triangle + two random waveforms on [-1,1]
///   crossing_noise - Example-style: crossing pair + vanishing high mode, sigma 0.5
///   crossing_vanish_low - vanishing lowest mode + crossing upper pair, sigma 0.5
struct Preset {
    std::string name;
    TimeMesh mesh;
    std::vector<ModeSpec> specs;
    double sigma = 0.0;
    std::uint64_t default_seed = 0;
};

Preset make_preset(const std::string& name, Index n_points_override = 0);
std::vector<std::string> preset_names();

/// Numerically checks the separation hypotheses: amplitude floor, frequency
/// positivity, and the frequency-ratio band between modes.
struct HypothesisReport {
    double min_amplitude = 0.0;
    double min_omega = 0.0;
    double min_ratio_gap = 0.0;  // min over t, i != j of |log(omega_i/omega_j)|
    double overlap_fraction = 0.0;  // fraction of t with some ratio inside [1-eps, 1+eps]
    bool separated = false;
};
HypothesisReport check_hypotheses(const std::vector<ModeSpec>& specs, const TimeMesh& mesh,
                                  double eps = 0.3, double amp_floor = 1e-3);

}  // namespace kmd
