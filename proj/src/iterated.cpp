#include "kmd/iterated.hpp"

#include <algorithm>
#include <cmath>

namespace kmd {

Vector window_scale_from_phase(const Vector& theta, double dt) {
    const Index n = theta.size();
    Vector w(n);
    for (Index k = 0; k < n; ++k) {
        const Index k0 = std::max<Index>(0, k - 1), k1 = std::min<Index>(n - 1, k + 1);
        w(k) = (theta(k1) - theta(k0)) / (dt * static_cast<double>(k1 - k0));
    }
    const Index win = std::min<Index>(n | 1, 201);
    if (win >= 5 && win <= n) w = savitzky_golay(w, win, 2);
    for (Index k = 0; k < n; ++k) w(k) = std::max(w(k), 1.0);
    return w;
}

namespace {

Vector overtone_signal(const ModeEstimate& m) {
    Vector out(m.mesh.n_points);
    for (Index k = 0; k < m.mesh.n_points; ++k)
        out(k) = m.amplitude(k) * m.waveform.eval_overtones(m.phase(k));
    return out;
}

}  // namespace

double microlocal_sweep(const SampledSignal& v, std::vector<ModeEstimate>& modes,
                        const std::vector<Vector>& scales, double alpha, double rate, Index d,
                        Index sg_window, Index sg_order) {
    if (modes.size() != scales.size()) throw SpecInvalid("microlocal_sweep: scales mismatch");
    const Index n = v.mesh.n_points;
    double sup = 0.0;
    MicrolocalEngine engine(v.mesh, alpha, d);
    for (size_t j = 0; j < modes.size(); ++j) {
        ModeEstimate& mode = modes[j];
        Vector res = v.values - overtone_signal(mode);
        for (size_t k = 0; k < modes.size(); ++k)
            if (k != j) res -= evaluate_mode(modes[k]).values;

        engine.bind(mode.phase, res);
        Vector dth(n);
        const double c1 = mode.waveform.cos_coeff(1);
#pragma omp parallel for schedule(static)
        for (Index t = 0; t < n; ++t) {
            try {
                const MicrolocalFit fit = engine.fit(v.mesh.point(t), scales[j](t));
                mode.amplitude(t) = fit.a / c1;
                dth(t) = fit.dtheta;
            } catch (const IllConditioned&) {
                dth(t) = 0.0;  // keep the previous estimate at this tau
            }
        }
        sup = std::max(sup, dth.cwiseAbs().maxCoeff());
        mode.phase += rate * dth;
        if (sg_window >= 5 && sg_window < n)
            mode.phase = savitzky_golay(mode.phase, sg_window, sg_order);
    }
    return sup;
}

namespace {

void relearn_waveform(ModeEstimate& mode, const Vector& residual_with_mode,
                      const SampledSignal& v, const IterationConfig& cfg, double alpha) {
    CoeffHistogram h = waveform_coeffs(mode.phase, SampledSignal(v.mesh, residual_with_mode),
                                       cfg.k_max, alpha, cfg.coeff_stride);
    h.interval_width = cfg.coeff_interval;
    h.cutoff = cfg.coeff_cutoff;
    mode.waveform = aggregate_coeffs(h);
}

/// Residual keeping mode i in full (all other modes removed).
Vector residual_keeping(const SampledSignal& v, const std::vector<ModeEstimate>& modes, size_t i) {
    Vector res = v.values;
    for (size_t j = 0; j < modes.size(); ++j)
        if (j != i) res -= evaluate_mode(modes[j]).values;
    return res;
}

IterationResult run_iterated(const SampledSignal& v, const Waveform* known_waveform,
                             const IterationConfig& cfg) {
    if (!v.all_finite()) throw NonFinite("iterate_kmd: signal contains NaN/Inf");
    if (cfg.grid.n_tau() < 2) throw SpecInvalid("iterate_kmd: cfg.grid must be set");
    const bool unknown = known_waveform == nullptr;
    IterationResult result;
    std::vector<ModeEstimate> modes;
    std::vector<Vector> scales;
    const double dt = v.mesh.dt();

    // Detection floor fixed from the original signal's max-pool energy.
    LowestFrequencyOptions lf_opt;
    lf_opt.threshold = cfg.threshold_frac;
    auto first = lowest_frequency(v, cfg.grid, cfg.alpha_initial, lf_opt);
    if (!first) throw NoModes("iterate_kmd: no mode detected above threshold");
    lf_opt.threshold = cfg.threshold_frac * first->max_S;
    lf_opt.threshold_is_absolute = true;

    // Discovery: peel lowest-frequency modes.
    while (static_cast<Index>(modes.size()) < cfg.max_modes) {
        std::optional<LowestFrequency> lf;
        if (modes.empty()) {
            lf = first;
        } else {
            Vector res = v.values;
            for (const ModeEstimate& m : modes) res -= evaluate_mode(m).values;
            lf = lowest_frequency(SampledSignal(v.mesh, res), cfg.grid, cfg.alpha_initial, lf_opt);
        }
        if (!lf) break;

        modes.emplace_back(v.mesh, Vector::Zero(v.mesh.n_points), lf->theta_low,
                           unknown ? Waveform::cosine() : *known_waveform);
        scales.push_back(window_scale_from_phase(lf->theta_low, dt));

        for (Index s = 0; s < cfg.max_sweeps; ++s) {
            const double sup = microlocal_sweep(v, modes, scales, cfg.alpha_initial, cfg.rate,
                                                cfg.d, cfg.sg_window, cfg.sg_order);
            if (unknown)
                for (size_t i = 0; i < modes.size(); ++i)
                    relearn_waveform(modes[i], residual_keeping(v, modes, i), v, cfg,
                                     cfg.alpha_initial);
            result.diagnostics.sup_dtheta_history.push_back(sup);
            ++result.diagnostics.total_sweeps;
            if (sup < cfg.eps1) break;
            if (s + 1 == cfg.max_sweeps) result.diagnostics.converged = false;
        }
    }
    if (modes.empty()) throw NoModes("iterate_kmd: no mode detected above threshold");

    // Final refinement with the alpha schedule; window scales refrozen from the
    // current phase estimates.
    for (size_t i = 0; i < modes.size(); ++i)
        scales[i] = window_scale_from_phase(modes[i].phase, dt);
    const double alpha_final = cfg.alpha_final > 0 ? cfg.alpha_final : cfg.alpha_initial;
    for (Index s = 0; s < cfg.max_sweeps; ++s) {
        const double frac =
            cfg.anneal_sweeps > 0
                ? std::min(1.0, static_cast<double>(s) / static_cast<double>(cfg.anneal_sweeps))
                : 1.0;
        const double alpha = cfg.alpha_initial * std::pow(alpha_final / cfg.alpha_initial, frac);
        const double sup = microlocal_sweep(v, modes, scales, alpha, cfg.rate, cfg.d,
                                            cfg.sg_window, cfg.sg_order);
        if (unknown)
            for (size_t i = 0; i < modes.size(); ++i)
                relearn_waveform(modes[i], residual_keeping(v, modes, i), v, cfg, alpha);
        result.diagnostics.sup_dtheta_history.push_back(sup);
        ++result.diagnostics.total_sweeps;
        if (sup < cfg.eps2 && frac >= 1.0) break;
        if (s + 1 == cfg.max_sweeps) result.diagnostics.converged = false;
    }

    // Unknown waveforms: final coefficient pass on the fully peeled residuals.
    if (unknown)
        for (size_t i = 0; i < modes.size(); ++i)
            relearn_waveform(modes[i], residual_keeping(v, modes, i), v, cfg, alpha_final);

    result.diagnostics.modes_found = static_cast<Index>(modes.size());
    result.modes = std::move(modes);
    return result;
}

}  // namespace

IterationResult iterate_kmd(const SampledSignal& v, const Waveform& waveform,
                            const IterationConfig& cfg) {
    return run_iterated(v, &waveform, cfg);
}

IterationResult iterate_kmd_unknown(const SampledSignal& v, const IterationConfig& cfg) {
    return run_iterated(v, nullptr, cfg);
}

}  // namespace kmd
