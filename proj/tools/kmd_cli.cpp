// Batch front end: one subcommand per pipeline, config-driven, writing CSV/JSON
// results and error tables against truth bundles.

#include "kmd/io.hpp"
#include "kmd/segmentation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using namespace kmd;

struct CliOptions {
    std::string config_path;
    std::string preset;
    std::string input;
    std::string output_dir;
    std::uint64_t seed = 0;
    bool have_seed = false;
    bool l2_energy = false;
    bool have_l2 = false;
    Index threads = 0;
};

RunConfig effective_config(const CliOptions& opt) {
    RunConfig cfg;
    if (!opt.config_path.empty()) cfg = RunConfig::load(opt.config_path);
    if (!opt.preset.empty()) cfg.preset = opt.preset;
    if (!opt.output_dir.empty()) cfg.output_dir = opt.output_dir;
    if (opt.have_seed) cfg.seed = opt.seed;
    if (opt.have_l2) cfg.l2_energy = opt.l2_energy;
    if (opt.threads > 0) cfg.threads = opt.threads;
    return cfg;
}

Index apply_threads(const RunConfig& cfg) {
#ifdef _OPENMP
    if (cfg.threads > 0) omp_set_num_threads(static_cast<int>(cfg.threads));
    return cfg.threads > 0 ? cfg.threads : omp_get_max_threads();
#else
    return 1;
#endif
}

TFGrid grid_from(const RunConfig& cfg, const TimeMesh& mesh) {
    return cfg.log_omega ? TFGrid::logarithmic(mesh.t_start, mesh.t_end, cfg.n_tau, cfg.omega_min,
                                               cfg.omega_max, cfg.n_omega)
                         : TFGrid::linear(mesh.t_start, mesh.t_end, cfg.n_tau, cfg.omega_min,
                                          cfg.omega_max, cfg.n_omega);
}

IterationConfig iteration_config(const RunConfig& cfg, const TFGrid& grid) {
    IterationConfig it;
    it.alpha_initial = cfg.alpha;
    it.alpha_final = cfg.alpha_final > 0 ? cfg.alpha_final : cfg.alpha;
    it.eps1 = cfg.iter_eps1;
    it.eps2 = cfg.iter_eps2;
    it.rate = cfg.rate;
    it.max_sweeps = cfg.max_sweeps;
    it.max_modes = cfg.max_modes;
    it.threshold_frac = cfg.threshold_frac;
    it.sg_window = cfg.sg_window;
    it.sg_order = cfg.sg_order;
    it.k_max = cfg.k_max;
    it.d = cfg.d;
    it.coeff_stride = cfg.coeff_stride;
    it.coeff_interval = cfg.coeff_interval;
    it.coeff_cutoff = cfg.coeff_cutoff;
    it.grid = grid;
    return it;
}

SegmentationRules segmentation_rules(const RunConfig& cfg) {
    SegmentationRules r;
    r.eps0_frac = cfg.eps0;
    r.eps1 = cfg.eps1;
    r.eps2 = cfg.eps2;
    r.eps3 = cfg.eps3;
    r.extension_band = cfg.extension_band;
    r.max_freq_tv = cfg.max_freq_tv;
    r.group_gap_log = cfg.group_gap_log;
    r.group_amp_jump = cfg.group_amp_jump;
    r.coverage = cfg.coverage;
    r.scan_stride = cfg.scan_stride;
    return r;
}

Waveform waveform_from(const RunConfig& cfg) {
    if (cfg.waveform == "triangle") return make_triangle_waveform(cfg.k_max);
    if (cfg.waveform == "ekg") return make_ekg_waveform(cfg.k_max);
    if (cfg.waveform == "cosine") return Waveform::cosine();
    return read_waveform_json(cfg.waveform);
}

SampledSignal load_input(const CliOptions& opt, const RunConfig& cfg, TruthBundle* truth_out) {
    if (!opt.input.empty()) return read_signal_csv(opt.input);
    const Preset p = make_preset(cfg.preset, cfg.n_points);
    auto [v, truth] = gen_multimode(p.specs, p.mesh, p.sigma, cfg.seed ? cfg.seed : p.default_seed);
    if (truth_out) *truth_out = std::move(truth);
    return v;
}

void ensure_dir(const std::string& dir) {
    if (!dir.empty() && dir != ".") fs::create_directories(dir);
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
    return (fs::path(cfg.output_dir) / name).string();
}

void write_modes_json(const std::string& path, const std::vector<ModeEstimate>& modes,
                      const IterationDiagnostics& diag) {
    json j;
    j["modes"] = json::array();
    for (const ModeEstimate& m : modes) {
        json jm;
        jm["amplitude"] = std::vector<double>(m.amplitude.data(),
                                              m.amplitude.data() + m.amplitude.size());
        jm["phase"] = std::vector<double>(m.phase.data(), m.phase.data() + m.phase.size());
        jm["waveform"]["cos"] = std::vector<double>(
            m.waveform.cos_coeffs().data(), m.waveform.cos_coeffs().data() + m.waveform.k_max());
        jm["waveform"]["sin"] = std::vector<double>(
            m.waveform.sin_coeffs().data(),
            m.waveform.sin_coeffs().data() + std::max<Index>(m.waveform.k_max() - 1, 0));
        j["modes"].push_back(std::move(jm));
    }
    j["diagnostics"]["sweeps"] = diag.total_sweeps;
    j["diagnostics"]["sup_dtheta_history"] = diag.sup_dtheta_history;
    j["diagnostics"]["converged"] = diag.converged;
    std::ofstream out(path);
    out << j.dump() << '\n';
}

struct ErrorRow {
    double rel_l2, rel_linf, amp_rel_l2, phase_l2;
};

double rel_l2(const Vector& est, const Vector& truth, Index lo, Index hi) {
    double num = 0, den = 0;
    for (Index k = lo; k <= hi; ++k) {
        num += (est(k) - truth(k)) * (est(k) - truth(k));
        den += truth(k) * truth(k);
    }
    return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

double rel_linf(const Vector& est, const Vector& truth, Index lo, Index hi) {
    double num = 0, den = 0;
    for (Index k = lo; k <= hi; ++k) {
        num = std::max(num, std::abs(est(k) - truth(k)));
        den = std::max(den, std::abs(truth(k)));
    }
    return den > 0 ? num / den : num;
}

ErrorRow mode_errors(const ModeEstimate& est, const ModeEstimate& truth, Index lo, Index hi,
                     double dt) {
    ErrorRow row{};
    const Vector ve = evaluate_mode(est).values, vt = evaluate_mode(truth).values;
    row.rel_l2 = rel_l2(ve, vt, lo, hi);
    row.rel_linf = rel_linf(ve, vt, lo, hi);
    row.amp_rel_l2 = rel_l2(est.amplitude, truth.amplitude, lo, hi);
    // phase L2 with the 2 pi k ambiguity removed, over the active region
    double best = std::numeric_limits<double>::infinity();
    for (int shift = -2; shift <= 2; ++shift) {
        double acc = 0;
        Index cnt = 0;
        double koff = 0;
        {
            // base offset from the midpoint
            const Index mid = (lo + hi) / 2;
            koff = kTwoPi * std::round((est.phase(mid) - truth.phase(mid)) / kTwoPi) +
                   shift * kTwoPi;
        }
        for (Index k = lo; k <= hi; ++k) {
            if (truth.amplitude(k) <= 1e-6) continue;
            const double d = est.phase(k) - truth.phase(k) - koff;
            acc += d * d;
            ++cnt;
        }
        if (cnt > 0) best = std::min(best, std::sqrt(acc * dt));
    }
    row.phase_l2 = std::isfinite(best) ? best : 0.0;
    return row;
}

/// Greedy matching of estimated modes to truth by mean frequency.
std::vector<Index> match_modes(const std::vector<ModeEstimate>& est,
                               const std::vector<ModeEstimate>& truth) {
    auto mean_freq = [](const ModeEstimate& m) {
        const Index n = m.mesh.n_points;
        return (m.phase(n - 1) - m.phase(0)) / (m.mesh.t_end - m.mesh.t_start);
    };
    std::vector<Index> order(est.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        return mean_freq(est[static_cast<size_t>(a)]) < mean_freq(est[static_cast<size_t>(b)]);
    });
    std::vector<Index> truth_order(truth.size());
    std::iota(truth_order.begin(), truth_order.end(), 0);
    std::sort(truth_order.begin(), truth_order.end(), [&](Index a, Index b) {
        return mean_freq(truth[static_cast<size_t>(a)]) < mean_freq(truth[static_cast<size_t>(b)]);
    });
    std::vector<Index> match(est.size(), -1);
    for (size_t r = 0; r < std::min(order.size(), truth_order.size()); ++r)
        match[static_cast<size_t>(order[r])] = truth_order[r];
    return match;
}

void write_error_table(const std::string& path, const std::vector<ModeEstimate>& est,
                       const std::vector<ModeEstimate>& truth) {
    std::ofstream out(path);
    out << "mode,window,rel_l2,rel_linf,amp_rel_l2,phase_l2\n";
    const std::vector<Index> match = match_modes(est, truth);
    const TimeMesh& mesh = est.front().mesh;
    const Index n = mesh.n_points;
    const Index lo3 = n / 3, hi3 = n - 1 - n / 3;
    for (size_t i = 0; i < est.size(); ++i) {
        if (match[i] < 0) continue;
        const ModeEstimate& t = truth[static_cast<size_t>(match[i])];
        const ErrorRow full = mode_errors(est[i], t, 0, n - 1, mesh.dt());
        const ErrorRow interior = mode_errors(est[i], t, lo3, hi3, mesh.dt());
        out << i << ",full," << full.rel_l2 << ',' << full.rel_linf << ',' << full.amp_rel_l2
            << ',' << full.phase_l2 << '\n';
        out << i << ",interior_third," << interior.rel_l2 << ',' << interior.rel_linf << ','
            << interior.amp_rel_l2 << ',' << interior.phase_l2 << '\n';
    }
}

int cmd_synth(const CliOptions& opt) {
    RunConfig cfg = effective_config(opt);
    ensure_dir(cfg.output_dir);
    const Index threads = apply_threads(cfg);
    const Preset p = make_preset(cfg.preset, cfg.n_points);
    auto [v, truth] = gen_multimode(p.specs, p.mesh, p.sigma, cfg.seed ? cfg.seed : p.default_seed);
    write_signal_csv(out_path(cfg, "signal.csv"), v);
    json jt;
    jt["preset"] = p.name;
    jt["sigma"] = p.sigma;
    jt["modes"] = json::array();
    for (const ModeEstimate& m : truth.modes) {
        json jm;
        jm["amplitude"] = std::vector<double>(m.amplitude.data(),
                                              m.amplitude.data() + m.amplitude.size());
        jm["phase"] = std::vector<double>(m.phase.data(), m.phase.data() + m.phase.size());
        jt["modes"].push_back(std::move(jm));
    }
    std::ofstream(out_path(cfg, "truth.json")) << jt.dump() << '\n';
    write_metadata_json(out_path(cfg, "metadata.json"), cfg, threads);
    std::cout << "wrote " << out_path(cfg, "signal.csv") << " (" << v.mesh.n_points
              << " points)\n";
    return 0;
}

int cmd_energy(const CliOptions& opt) {
    RunConfig cfg = effective_config(opt);
    ensure_dir(cfg.output_dir);
    const Index threads = apply_threads(cfg);
    SampledSignal v = load_input(opt, cfg, nullptr);
    const TFGrid grid = grid_from(cfg, v.mesh);
    SampledSignal f = v;
    if (!cfg.l2_energy) {
        KernelMatrix Ku = kernel_aggregate(v.mesh, grid, cfg.alpha);
        f = solve_regularized(Ku, cfg.sigma, v);
        const ConservationReport rep =
            energy_conservation_report(v, f, grid, cfg.alpha, cfg.sigma);
        std::cout << "energy conservation: lhs=" << rep.lhs << " rhs=" << rep.rhs
                  << " gap=" << rep.gap << '\n';
    }
    EnergyMap E = mode_energy_grid(f, grid, cfg.alpha);
    write_map_csv(out_path(cfg, "energy.csv"), E, "E");
    write_metadata_json(out_path(cfg, "metadata.json"), cfg, threads);
    return 0;
}

int cmd_squeeze(const CliOptions& opt) {
    RunConfig cfg = effective_config(opt);
    ensure_dir(cfg.output_dir);
    const Index threads = apply_threads(cfg);
    SampledSignal v = load_input(opt, cfg, nullptr);
    const TFGrid grid = grid_from(cfg, v.mesh);
    SampledSignal f = v;
    if (!cfg.l2_energy) {
        KernelMatrix Ku = kernel_aggregate(v.mesh, grid, cfg.alpha);
        f = solve_regularized(Ku, cfg.sigma, v);
    }
    WaveletMaps W = wavelet_coeffs(f, grid, cfg.alpha);
    EnergyMap E(grid, (W.Wc.values.array().square() + W.Ws.values.array().square()).matrix());
    PhaseMap theta = phase_field(W.Wc, W.Ws);
    FreqMap omega_e = freq_field(W.Wc, W.Ws);
    EnergyMap S = maxpool_energy(E, omega_e);
    EnergyMap SE = synchro_energy(E, omega_e, grid.omega_values(1) - grid.omega_values(0));
    write_map_csv(out_path(cfg, "energy.csv"), E, "E");
    write_map_csv(out_path(cfg, "theta_e.csv"), theta, "theta_e");
    write_map_csv(out_path(cfg, "omega_e.csv"), omega_e, "omega_e");
    write_map_csv(out_path(cfg, "maxpool.csv"), S, "S");
    write_map_csv(out_path(cfg, "synchro.csv"), SE, "S_E");
    std::vector<Ridge> ridges = extract_ridges(S, cfg.threshold_frac, cfg.max_modes);
    write_ridges_json(out_path(cfg, "ridges.json"), ridges, grid);
    write_metadata_json(out_path(cfg, "metadata.json"), cfg, threads);
    std::cout << "ridges: " << ridges.size() << '\n';
    return 0;
}

int cmd_decompose(const CliOptions& opt, bool by_phase) {
    RunConfig cfg = effective_config(opt);
    ensure_dir(cfg.output_dir);
    const Index threads = apply_threads(cfg);
    TruthBundle truth;
    SampledSignal v = load_input(opt, cfg, &truth);
    const TFGrid grid = grid_from(cfg, v.mesh);
    SampledSignal f = v;
    if (!cfg.l2_energy) {
        KernelMatrix Ku = kernel_aggregate(v.mesh, grid, cfg.alpha);
        f = solve_regularized(Ku, cfg.sigma, v);
    }
    WaveletMaps W = wavelet_coeffs(f, grid, cfg.alpha);
    EnergyMap E(grid, (W.Wc.values.array().square() + W.Ws.values.array().square()).matrix());
    FreqMap omega_e = freq_field(W.Wc, W.Ws);
    EnergyMap S = maxpool_energy(E, omega_e);
    std::vector<Ridge> ridges = extract_ridges(S, cfg.threshold_frac, cfg.max_modes);
    Decomposition d = by_phase
                          ? recover_by_phase(v, ridge_phases(W, S, ridges, v.mesh), cfg.gamma,
                                             cfg.sigma)
                          : recover_by_partition(v, ridges, grid, cfg.alpha, cfg.sigma);
    write_decomposition_json(out_path(cfg, "decomposition.json"), d);
    write_ridges_json(out_path(cfg, "ridges.json"), ridges, grid);
    write_metadata_json(out_path(cfg, "metadata.json"), cfg, threads);
    std::cout << "recovered " << d.labels.size() << " modes; total energy " << d.total_energy
              << '\n';
    return 0;
}

int cmd_iterate(const CliOptions& opt, bool unknown) {
    RunConfig cfg = effective_config(opt);
    ensure_dir(cfg.output_dir);
    const Index threads = apply_threads(cfg);
    TruthBundle truth;
    SampledSignal v = load_input(opt, cfg, &truth);
    const TFGrid grid = grid_from(cfg, v.mesh);
    IterationConfig it = iteration_config(cfg, grid);
    IterationResult res = unknown ? iterate_kmd_unknown(v, it)
                                  : iterate_kmd(v, waveform_from(cfg), it);
    write_modes_json(out_path(cfg, "modes.json"), res.modes, res.diagnostics);
    if (!truth.modes.empty())
        write_error_table(out_path(cfg, "errors.csv"), res.modes, truth.modes);
    write_metadata_json(out_path(cfg, "metadata.json"), cfg, threads);
    std::cout << "modes: " << res.modes.size() << ", sweeps: " << res.diagnostics.total_sweeps
              << (res.diagnostics.converged ? "" : " (NonConvergent)") << '\n';
    return res.diagnostics.converged ? 0 : 3;
}

int cmd_segment(const CliOptions& opt) {
    RunConfig cfg = effective_config(opt);
    ensure_dir(cfg.output_dir);
    const Index threads = apply_threads(cfg);
    TruthBundle truth;
    SampledSignal v = load_input(opt, cfg, &truth);
    const TFGrid grid = grid_from(cfg, v.mesh);
    IterationConfig it = iteration_config(cfg, grid);
    SegmentationRules rules = segmentation_rules(cfg);
    IterationResult res = segmented_kmd(v, waveform_from(cfg), it, rules);
    write_modes_json(out_path(cfg, "modes.json"), res.modes, res.diagnostics);
    if (!truth.modes.empty())
        write_error_table(out_path(cfg, "errors.csv"), res.modes, truth.modes);
    write_metadata_json(out_path(cfg, "metadata.json"), cfg, threads);
    std::cout << "modes: " << res.modes.size() << ", sweeps: " << res.diagnostics.total_sweeps
              << (res.diagnostics.converged ? "" : " (NonConvergent)") << '\n';
    return res.diagnostics.converged ? 0 : 3;
}

int cmd_evaluate(const CliOptions& opt, const std::string& est_path,
                 const std::string& truth_path) {
    RunConfig cfg = effective_config(opt);
    ensure_dir(cfg.output_dir);
    json je = json::parse(std::ifstream(est_path));
    json jt = json::parse(std::ifstream(truth_path));
    auto parse_modes = [&](const json& j, const Waveform& w) {
        std::vector<ModeEstimate> modes;
        for (const json& jm : j.at("modes")) {
            std::vector<double> a = jm.at("amplitude").get<std::vector<double>>();
            std::vector<double> th = jm.at("phase").get<std::vector<double>>();
            const Index n = static_cast<Index>(a.size());
            TimeMesh mesh(cfg.t_start, cfg.t_end, n);
            Waveform wf = w;
            if (jm.contains("waveform")) {
                std::vector<double> c = jm["waveform"]["cos"].get<std::vector<double>>();
                std::vector<double> s = jm["waveform"]["sin"].get<std::vector<double>>();
                wf = Waveform(Eigen::Map<Vector>(c.data(), static_cast<Index>(c.size())),
                              Eigen::Map<Vector>(s.data(), static_cast<Index>(s.size())));
            }
            modes.emplace_back(mesh, Eigen::Map<Vector>(a.data(), static_cast<Index>(a.size())),
                               Eigen::Map<Vector>(th.data(), static_cast<Index>(th.size())), wf);
        }
        return modes;
    };
    const Waveform w = waveform_from(cfg);
    std::vector<ModeEstimate> est = parse_modes(je, w);
    std::vector<ModeEstimate> truth = parse_modes(jt, w);
    if (est.empty() || truth.empty()) throw IoError("evaluate: no modes");
    write_error_table(out_path(cfg, "errors.csv"), est, truth);
    std::cout << "wrote " << out_path(cfg, "errors.csv") << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kernel mode decomposition pipelines"};
    app.require_subcommand(1);

    CliOptions opt;
    std::string est_path, truth_path;
    bool by_phase = false;

    bool l2_on = false, l2_off = false;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config_path, "run configuration file");
        sub->add_option("--preset", opt.preset, "signal preset name");
        sub->add_option("--input", opt.input, "input signal CSV");
        sub->add_option("--output-dir", opt.output_dir, "output directory");
        sub->add_option("--seed", opt.seed, "noise seed");
        sub->add_flag("--l2-energy", l2_on, "use the windowed L2 energy fast path");
        sub->add_flag("--no-l2-energy", l2_off, "force the K-inverse energy weighting");
        sub->add_option("--threads", opt.threads, "worker thread count");
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a preset signal + truth bundle");
    add_common(synth);
    CLI::App* energy = app.add_subcommand("energy", "time-frequency alignment energy map");
    add_common(energy);
    CLI::App* squeeze = app.add_subcommand("squeeze", "squeezed energies, fields, and ridges");
    add_common(squeeze);
    CLI::App* decompose = app.add_subcommand("decompose", "crossing-frequency mode recovery");
    add_common(decompose);
    decompose->add_flag("--by-phase", by_phase, "use the phase-kernel network");
    CLI::App* iterate = app.add_subcommand("iterate", "iterated micro-local KMD (known waveform)");
    add_common(iterate);
    CLI::App* iterate_unknown =
        app.add_subcommand("iterate-unknown", "iterated micro-local KMD, waveforms learned");
    add_common(iterate_unknown);
    CLI::App* segment = app.add_subcommand("segment", "segmented iterated micro-local KMD");
    add_common(segment);
    CLI::App* evaluate = app.add_subcommand("evaluate", "error tables for estimates vs truth");
    add_common(evaluate);
    evaluate->add_option("--estimate", est_path, "estimated modes JSON")->required();
    evaluate->add_option("--truth", truth_path, "truth modes JSON")->required();

    CLI11_PARSE(app, argc, argv);

    CLI::App* active = app.get_subcommands().front();
    opt.have_seed = active->count("--seed") > 0;
    if (l2_on || l2_off) {
        opt.have_l2 = true;
        opt.l2_energy = l2_on && !l2_off;
    }

    try {
        if (synth->parsed()) return cmd_synth(opt);
        if (energy->parsed()) return cmd_energy(opt);
        if (squeeze->parsed()) return cmd_squeeze(opt);
        if (decompose->parsed()) return cmd_decompose(opt, by_phase);
        if (iterate->parsed()) return cmd_iterate(opt, false);
        if (iterate_unknown->parsed()) return cmd_iterate(opt, true);
        if (segment->parsed()) return cmd_segment(opt);
        if (evaluate->parsed()) return cmd_evaluate(opt, est_path, truth_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const SpecInvalid& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return 2;
    } catch (const NoModes& e) {
        std::cerr << "pipeline error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
