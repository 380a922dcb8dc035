#pragma once

#include "kmd/microlocal.hpp"

namespace kmd {

struct IterationConfig {
    double alpha_initial = 25.0;
    double alpha_final = 6.0;   // annealed to this in the final refinement loop
    double eps1 = 1e-8;         // discovery loop exit on sup |dtheta|
    double eps2 = 1e-8;         // final refinement exit
    double rate = 0.5;          // phase correction rate
    Index max_sweeps = 100;     // per repeat loop
    Index max_modes = 8;
    double threshold_frac = 0.1;  // detection floor, fraction of max S of the input signal
    Index sg_window = 0;          // Savitzky-Golay smoothing of theta per sweep; 0 disables
    Index sg_order = 3;
    Index k_max = 15;
    Index d = 2;
    Index coeff_stride = 1;        // tau stride for waveform coefficient estimation
    double coeff_interval = 0.002; // histogram interval width L
    double coeff_cutoff = 0.05;
    Index anneal_sweeps = 12;      // sweeps over which alpha descends in the final loop
    TFGrid grid;                   // detection grid; must be set by the caller
};

struct IterationDiagnostics {
    Index modes_found = 0;
    Index total_sweeps = 0;
    std::vector<double> sup_dtheta_history;
    bool converged = true;  // false when a repeat loop hit max_sweeps
};

struct IterationResult {
    std::vector<ModeEstimate> modes;
    IterationDiagnostics diagnostics;
};

/// Iterated micro-local KMD with a known base waveform: peel lowest-frequency
/// modes with interleaved amplitude/phase refinement, then a final refinement
/// loop with the alpha schedule. Modes come out in discovery order (ascending
/// base frequency). Throws NoModes when nothing is detected at all.
IterationResult iterate_kmd(const SampledSignal& v, const Waveform& waveform,
                            const IterationConfig& cfg);

/// Unknown-waveform variant: waveforms start as cos(t) and are re-learned from
/// overtone coefficient histograms every sweep, with a final re-estimation pass
/// on the fully peeled residuals.
IterationResult iterate_kmd_unknown(const SampledSignal& v, const IterationConfig& cfg);

/// Window scale (the frozen theta0-dot of a refinement loop): smoothed positive
/// slope of the current phase estimate.
Vector window_scale_from_phase(const Vector& theta, double dt);

/// One micro-local refinement sweep over all modes: rebuild each overtone-peeled
/// residual, update amplitudes, apply the rate-limited phase correction.
/// Returns sup |dtheta| over modes and mesh points. `scales` are the frozen
/// per-mode window-scale vectors. Shared by iterate_kmd and segmented_kmd.
double microlocal_sweep(const SampledSignal& v, std::vector<ModeEstimate>& modes,
                        const std::vector<Vector>& scales, double alpha, double rate, Index d,
                        Index sg_window = 0, Index sg_order = 3);

}  // namespace kmd
