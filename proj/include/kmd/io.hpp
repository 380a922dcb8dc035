#pragma once

#include "kmd/microlocal.hpp"
#include "kmd/synth.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace kmd {

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Signal CSV: header "t,value", 17 significant digits (IEEE-754 round trip).
void write_signal_csv(const std::string& path, const SampledSignal& s);
SampledSignal read_signal_csv(const std::string& path);

/// Waveform JSON: {"cos":[...], "sin":[...], "tag": "..."}.
void write_waveform_json(const std::string& path, const Waveform& w);
Waveform read_waveform_json(const std::string& path);

/// Long-format map CSV: "tau,omega,value" rows.
void write_map_csv(const std::string& path, const GridMap& map, const std::string& value_name);

/// Decomposition JSON: label -> values array, plus energies.
void write_decomposition_json(const std::string& path, const Decomposition& d);

/// Ridges JSON: [{label, cells:[[i,j],...], crest:[{tau,omega},...]}].
void write_ridges_json(const std::string& path, const std::vector<Ridge>& ridges,
                       const TFGrid& grid);

/// Kernel matrix as binary row-major float64 with an 8-field header
/// (magic, n, t_start, t_end, n_points, weight, flags, reserved).
void write_kernel_binary(const std::string& path, const KernelMatrix& K);
KernelMatrix read_kernel_binary(const std::string& path);

/// Flat sectioned key-value run configuration. Unknown keys are rejected.
struct RunConfig {
    // [mesh]
    double t_start = -1.0;
    double t_end = 1.0;
    Index n_points = 10001;
    // [grid]
    Index n_tau = 101;
    Index n_omega = 101;
    double omega_min = 50.0;
    double omega_max = 450.0;
    bool log_omega = false;
    // [kernel]
    double alpha = 25.0;
    double alpha_final = 0.0;  // 0: keep alpha
    double gamma = 0.2;
    double sigma = 0.0;
    // [thresholds]
    double eps0 = 0.05;
    double eps1 = 0.2;
    double eps2 = 0.2;
    double eps3 = 20.0 * kPi;
    double threshold_frac = 0.1;
    double coeff_interval = 0.002;  // L
    double coeff_cutoff = 0.05;
    Index d = 2;
    double rate = 0.5;
    Index k_max = 15;
    // [iteration]
    double iter_eps1 = 1e-8;
    double iter_eps2 = 1e-8;
    Index max_sweeps = 100;
    Index max_modes = 8;
    Index coeff_stride = 1;
    Index sg_window = 0;
    Index sg_order = 3;
    // [segmentation]
    double extension_band = 0.1;
    double max_freq_tv = 0.5;
    double group_gap_log = 0.25;
    double group_amp_jump = 0.6;
    double coverage = 0.9;
    Index scan_stride = 1;
    // [run]
    std::string pipeline = "iterate";
    std::string preset = "triangle3";
    std::string waveform = "triangle";  // triangle | ekg | cosine | <path.json>
    std::uint64_t seed = 0;
    std::string output_dir = ".";
    bool l2_energy = true;
    Index threads = 0;  // 0: library default

    std::string serialize() const;
    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::string& path);
    void save(const std::string& path) const;
    /// FNV-1a hash of the canonical serialization.
    std::uint64_t hash() const;
};

/// Run metadata record (config hash, seed, thread count) as JSON.
void write_metadata_json(const std::string& path, const RunConfig& cfg, Index threads_used);

}  // namespace kmd
