#pragma once

#include "kmd/iterated.hpp"

namespace kmd {

/// A partially identified mode: amplitude/phase/frequency on a mesh interval.
/// Phase values are pointwise in (-pi, pi].
struct Segment {
    Index i1 = 0, i2 = 0;  // inclusive mesh index range
    Vector amplitude;
    Vector theta;
    Vector omega;

    Index length() const { return i2 - i1 + 1; }
    double phase_travel(double dt) const;  // trapezoid of omega over the domain
};

struct SegmentationRules {
    double eps0_frac = 0.05;      // detection floor as a fraction of max S(v)
    double eps1 = 0.2;            // cut: |log(omega2/omega1)|
    double eps2 = 0.2;            // cut: |log((dtheta/dt)/omega1)|
    double eps3 = 20.0 * kPi;     // minimum phase travel (10 periods)
    double extension_band = 0.1;  // relative band for the extension argmax
    double max_freq_tv = 0.5;     // discard rule: total variation / mean of omega
    double group_gap_log = 0.25;  // same-mode: |log| mismatch of extrapolated omega
    double group_amp_jump = 0.6;  // same-mode: relative mismatch of extrapolated amplitude
    double coverage = 0.9;        // completeness: covered fraction of the mesh
    Index scan_stride = 1;        // mesh stride of the lowest-frequency scan
};

struct SegmentState {
    std::vector<ModeEstimate> modes;
    std::vector<Segment> segments;  // free segments carried to the next iteration
};

/// Residual context v_tau: v minus full modes minus tau-localized segments
/// resynthesized with the Gaussian window exp(-(omega(tau)(t-tau)/alpha)^2).
class ResidualField {
  public:
    ResidualField(const SampledSignal& v, const SegmentState& state, const Waveform& waveform,
                  double alpha);

    Vector at(double tau) const;
    const TimeMesh& mesh() const { return mesh_; }

  private:
    TimeMesh mesh_;
    const SegmentState& state_;
    const Waveform& waveform_;
    double alpha_;
    Vector base_;  // v minus full modes
};

/// Lowest-frequency segment identification: peel, scan omega_low/a_low/theta_low,
/// cut into fragments, extend, filter by eps3, then group/join via mode_process.
/// detection_floor < 0 recomputes eps0_frac * max S(v).
SegmentState m_mode(const SampledSignal& v, const SegmentState& state, const Waveform& waveform,
                    const SegmentationRules& rules, const TFGrid& grid, double alpha,
                    double detection_floor = -1.0);

/// Maximal extension of a fragment left and right until the cut test fires.
Segment mode_extend(const ResidualField& field, const Segment& fragment, const Waveform& waveform,
                    const SegmentationRules& rules, const TFGrid& grid, double alpha);

/// Raw segment processing: discard intersection/noise artifacts, group segments
/// that extrapolate onto each other, join complete groups into modes.
SegmentState mode_process(const SegmentState& state, const SegmentationRules& rules,
                          const TimeMesh& mesh, const Waveform& waveform);

/// Full segmented iterated micro-local KMD (known waveform, Problem with
/// crossings, vanishing modes, and noise).
IterationResult segmented_kmd(const SampledSignal& v, const Waveform& waveform,
                              const IterationConfig& cfg, const SegmentationRules& rules);

}  // namespace kmd
