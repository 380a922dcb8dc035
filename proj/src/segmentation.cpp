#include "kmd/segmentation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <numeric>

namespace kmd {

double Segment::phase_travel(double dt) const {
    if (omega.size() < 2) return 0.0;
    double acc = 0.0;
    for (Index k = 0; k + 1 < omega.size(); ++k) acc += 0.5 * (omega(k) + omega(k + 1)) * dt;
    return acc;
}

ResidualField::ResidualField(const SampledSignal& v, const SegmentState& state,
                             const Waveform& waveform, double alpha)
    : mesh_(v.mesh), state_(state), waveform_(waveform), alpha_(alpha), base_(v.values) {
    for (const ModeEstimate& m : state.modes) base_ -= evaluate_mode(m).values;
}

Vector ResidualField::at(double tau) const {
    Vector out = base_;
    const Index kt = mesh_.nearest(tau);
    for (const Segment& s : state_.segments) {
        if (kt < s.i1 || kt > s.i2) continue;
        const Index local = kt - s.i1;
        const double a = s.amplitude(local);
        const double om = s.omega(local);
        const double th = s.theta(local);
        const double half = 6.0 * alpha_ / om;
        const Index lo = mesh_.nearest(tau - half), hi = mesh_.nearest(tau + half);
        const double c = om / alpha_;
        for (Index k = lo; k <= hi; ++k) {
            const double u = mesh_.point(k) - tau;
            out(k) -= a * std::exp(-c * c * u * u) * waveform_.eval(u * om + th);
        }
    }
    return out;
}

namespace {

struct ScanPoint {
    bool defined = false;
    double omega = 0.0;
    double a = 0.0;
    double theta = 0.0;  // in (-pi, pi]
};

/// Lowest local maximum of the energy column above the floor, reported as the
/// transported frequency omega_e at that cell.
struct ColumnResult {
    bool found = false;
    double omega_e = 0.0;
};

ColumnResult lowest_column_peak(const GaborAnalyzer& an, const Vector& f, double tau,
                                const TFGrid& grid, double floor, double probe_dt) {
    const Index n_om = grid.n_omega();
    Vector E(n_om);
    for (Index j = 0; j < n_om; ++j) E(j) = an.energy(f, tau, grid.omega_values(j));

    ColumnResult best;
    for (Index j = 0; j < n_om; ++j) {
        if (E(j) < floor) continue;
        if (j > 0 && E(j - 1) > E(j)) continue;
        if (j + 1 < n_om && E(j + 1) > E(j)) continue;
        const double oe = an.omega_e(f, tau, grid.omega_values(j), probe_dt);
        if (!(oe > 0) || oe < 0.8 * grid.omega_min() || oe > 1.2 * grid.omega_max()) continue;
        if (!best.found || oe < best.omega_e) {
            best.found = true;
            best.omega_e = oe;
        }
    }
    return best;
}

/// Cut test between successive points per the phase/frequency continuity rule.
bool cut_between(double omega1, double theta1, double omega2, double theta2, double dt_step,
                 const SegmentationRules& rules) {
    if (!(omega1 > 0) || !(omega2 > 0)) return true;
    if (std::abs(std::log(omega2 / omega1)) > rules.eps1) return true;
    const double ratio = wrap_angle(theta2 - theta1) / dt_step;
    if (!(ratio > 0)) return true;
    return std::abs(std::log(ratio / omega1)) > rules.eps2;
}

/// Densify stride-sampled (a, theta, omega) values to full mesh resolution.
Segment densify(const TimeMesh& mesh, const std::vector<Index>& idx,
                const std::vector<double>& a, const std::vector<double>& th,
                const std::vector<double>& om) {
    Segment seg;
    seg.i1 = idx.front();
    seg.i2 = idx.back();
    const Index n = seg.length();
    if (idx.size() == 1) {
        seg.amplitude = Vector::Constant(1, a[0]);
        seg.theta = Vector::Constant(1, th[0]);
        seg.omega = Vector::Constant(1, om[0]);
        return seg;
    }
    Vector x(static_cast<Index>(idx.size())), av(x.size()), ov(x.size()), tv(x.size());
    for (Index k = 0; k < x.size(); ++k) {
        x(k) = mesh.point(idx[static_cast<size_t>(k)]);
        av(k) = a[static_cast<size_t>(k)];
        ov(k) = om[static_cast<size_t>(k)];
        tv(k) = th[static_cast<size_t>(k)];
    }
    Vector xq(n);
    for (Index k = 0; k < n; ++k) xq(k) = mesh.point(seg.i1 + k);
    seg.amplitude = pchip(x, av, xq);
    seg.omega = pchip(x, ov, xq);
    Vector unwrapped = unwrap_phase(tv);
    Vector dense_theta = pchip(x, unwrapped, xq);
    seg.theta.resize(n);
    for (Index k = 0; k < n; ++k) seg.theta(k) = wrap_angle(dense_theta(k));
    for (Index k = 0; k < n; ++k)
        if (!(seg.omega(k) > 0)) seg.omega(k) = std::max(1e-6, ov.minCoeff());
    return seg;
}

struct ExtendProbe {
    bool ok = false;
    double omega = 0.0, a = 0.0, theta = 0.0;
};

/// One extension step: band-limited argmax of the column energy, transported
/// frequency, then a d = 0 micro-local fit at that frequency.
ExtendProbe extend_probe(const GaborAnalyzer& an, const Vector& f, double tau, double omega1,
                         const SegmentationRules& rules, double c1, double om_floor,
                         double om_ceil) {
    ExtendProbe out;
    const double lo = std::max((1.0 - rules.extension_band) * omega1, om_floor);
    const double hi = std::min((1.0 + rules.extension_band) * omega1, om_ceil);
    if (!(hi > lo)) return out;
    const Index n_probe = 7;
    double best_e = -1.0, best_om = omega1;
    for (Index p = 0; p < n_probe; ++p) {
        const double om = lo + (hi - lo) * static_cast<double>(p) / (n_probe - 1);
        const double e = an.energy(f, tau, om);
        if (e > best_e) {
            best_e = e;
            best_om = om;
        }
    }
    const double oe = an.omega_e(f, tau, best_om, an.mesh().dt());
    if (!(oe > 0)) return out;
    SampledSignal fs(an.mesh(), f);
    try {
        const MicrolocalFit fit = pointwise_amp_phase(tau, oe, fs, an.alpha());
        out.ok = true;
        out.omega = oe;
        out.a = fit.a / c1;
        out.theta = fit.dtheta;
    } catch (const IllConditioned&) {
    }
    return out;
}

double mean_of(const Vector& v) { return v.sum() / static_cast<double>(v.size()); }

/// Linear extrapolation of the facing end of a segment's sampled quantity.
double extrapolate_end(const TimeMesh& mesh, const Segment& s, const Vector& q, bool right_end,
                       double t_target) {
    const Index n = q.size();
    const Index m = std::max<Index>(2, std::min<Index>(n, n / 10 + 2));
    const Index lo = right_end ? n - m : 0;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (Index k = lo; k < lo + m; ++k) {
        const double x = mesh.point(s.i1 + k);
        sx += x;
        sy += q(k);
        sxx += x * x;
        sxy += x * q(k);
    }
    const double dm = static_cast<double>(m);
    const double denom = dm * sxx - sx * sx;
    if (std::abs(denom) < 1e-30) return sy / dm;
    const double slope = (dm * sxy - sx * sy) / denom;
    const double intercept = (sy - slope * sx) / dm;
    return intercept + slope * t_target;
}

bool same_mode(const TimeMesh& mesh, const Segment& a, const Segment& b,
               const SegmentationRules& rules) {
    // require essentially disjoint domains, earlier first
    const Segment& first = a.i1 <= b.i1 ? a : b;
    const Segment& second = a.i1 <= b.i1 ? b : a;
    if (second.i1 <= first.i2) {
        const Index overlap = first.i2 - second.i1 + 1;
        if (overlap > std::max<Index>(2, std::min(first.length(), second.length()) / 50))
            return false;
    }
    const double t_target = mesh.point(second.i1);
    const double om_pred = extrapolate_end(mesh, first, first.omega, true, t_target);
    const double om_actual = second.omega(0);
    if (!(om_pred > 0) || std::abs(std::log(om_pred / om_actual)) > rules.group_gap_log)
        return false;
    const double a_pred = extrapolate_end(mesh, first, first.amplitude, true, t_target);
    const double a_actual = second.amplitude(0);
    const double a_ref = std::max({std::abs(a_pred), std::abs(a_actual), 1e-12});
    return std::abs(a_pred - a_actual) / a_ref <= rules.group_amp_jump;
}

ModeEstimate join_group(std::vector<Segment> group, const TimeMesh& mesh,
                        const Waveform& waveform) {
    std::sort(group.begin(), group.end(),
              [](const Segment& x, const Segment& y) { return x.i1 < y.i1; });

    // chain unwrapped phases across gaps by integrating interpolated omega
    std::vector<Vector> unwrapped;
    for (const Segment& s : group) unwrapped.push_back(unwrap_phase(s.theta));
    for (size_t g = 1; g < group.size(); ++g) {
        const Segment& prev = group[g - 1];
        const Segment& cur = group[g];
        const double t_prev = mesh.point(prev.i2), t_cur = mesh.point(cur.i1);
        const double om_prev = prev.omega(prev.omega.size() - 1), om_cur = cur.omega(0);
        const double pred = unwrapped[g - 1](unwrapped[g - 1].size() - 1) +
                            0.5 * (om_prev + om_cur) * (t_cur - t_prev);
        const double shift = kTwoPi * std::round((pred - unwrapped[g](0)) / kTwoPi);
        unwrapped[g].array() += shift;
    }

    std::vector<double> xs, as, ths;
    for (size_t g = 0; g < group.size(); ++g) {
        for (Index k = 0; k < group[g].length(); ++k) {
            const Index mk = group[g].i1 + k;
            if (!xs.empty() && mesh.point(mk) <= xs.back()) continue;  // trim overlaps
            xs.push_back(mesh.point(mk));
            as.push_back(group[g].amplitude(k));
            ths.push_back(unwrapped[g](k));
        }
    }
    Vector x = Eigen::Map<Vector>(xs.data(), static_cast<Index>(xs.size()));
    Vector av = Eigen::Map<Vector>(as.data(), static_cast<Index>(as.size()));
    Vector tv = Eigen::Map<Vector>(ths.data(), static_cast<Index>(ths.size()));

    const Vector tq = mesh.points();
    Vector amplitude = pchip(x, av, tq);
    Vector phase = pchip(x, tv, tq);

    // zero amplitude extrapolation outside the covered domain; keep it nonneg
    for (Index k = 0; k < mesh.n_points; ++k) {
        const double t = tq(k);
        if (t < xs.front() || t > xs.back()) amplitude(k) = 0.0;
        amplitude(k) = std::max(amplitude(k), 0.0);
    }
    return ModeEstimate(mesh, std::move(amplitude), std::move(phase), waveform);
}

}  // namespace

Segment mode_extend(const ResidualField& field, const Segment& fragment, const Waveform& waveform,
                    const SegmentationRules& rules, const TFGrid& grid, double alpha) {
    const TimeMesh& mesh = field.mesh();
    GaborAnalyzer an(mesh, alpha);
    const double dt = mesh.dt();
    const Index stride = std::max<Index>(1, rules.scan_stride);
    const double c1 = waveform.cos_coeff(1);

    std::deque<std::array<double, 3>> left, right;  // {a, theta, omega}
    Index i1 = fragment.i1, i2 = fragment.i2;

    for (int dir : {-1, +1}) {
        Index edge = dir < 0 ? i1 : i2;
        double omega1 = dir < 0 ? fragment.omega(0) : fragment.omega(fragment.omega.size() - 1);
        double theta1 = dir < 0 ? fragment.theta(0) : fragment.theta(fragment.theta.size() - 1);
        while (true) {
            const Index next = edge + dir * stride;
            if (next < 0 || next >= mesh.n_points) break;
            const double tau2 = mesh.point(next);
            const Vector vtau = field.at(tau2);
            const ExtendProbe p = extend_probe(an, vtau, tau2, omega1, rules, c1,
                                               0.8 * grid.omega_min(), 1.2 * grid.omega_max());
            if (!p.ok) break;
            const double dstep = static_cast<double>(dir * stride) * dt;
            if (cut_between(omega1, theta1, p.omega, p.theta, dstep, rules)) break;
            if (dir < 0)
                left.push_front({p.a, p.theta, p.omega});
            else
                right.push_back({p.a, p.theta, p.omega});
            edge = next;
            omega1 = p.omega;
            theta1 = p.theta;
        }
        if (dir < 0)
            i1 = edge;
        else
            i2 = edge;
    }

    if (left.empty() && right.empty()) return fragment;

    // merge stride samples with the fragment interior, then densify
    std::vector<Index> idx;
    std::vector<double> a, th, om;
    Index pos = i1;
    for (const auto& p : left) {
        idx.push_back(pos);
        a.push_back(p[0]);
        th.push_back(p[1]);
        om.push_back(p[2]);
        pos += stride;
    }
    for (Index k = 0; k < fragment.length(); ++k) {
        idx.push_back(fragment.i1 + k);
        a.push_back(fragment.amplitude(k));
        th.push_back(fragment.theta(k));
        om.push_back(fragment.omega(k));
    }
    pos = fragment.i2 + stride;
    for (const auto& p : right) {
        idx.push_back(pos);
        a.push_back(p[0]);
        th.push_back(p[1]);
        om.push_back(p[2]);
        pos += stride;
    }
    return densify(field.mesh(), idx, a, th, om);
}

SegmentState m_mode(const SampledSignal& v, const SegmentState& state, const Waveform& waveform,
                    const SegmentationRules& rules, const TFGrid& grid, double alpha,
                    double detection_floor) {
    const TimeMesh& mesh = v.mesh;
    GaborAnalyzer an(mesh, alpha);
    const double probe_dt = mesh.dt();

    if (detection_floor < 0) {
        LowestFrequencyOptions opt;
        opt.threshold = rules.eps0_frac;
        auto lf = lowest_frequency(v, grid, alpha, opt);
        detection_floor = lf ? rules.eps0_frac * lf->max_S : 0.0;
        if (!(detection_floor > 0)) {
            SegmentState out = state;
            out.segments.clear();
            return out;
        }
    }

    ResidualField field(v, state, waveform, alpha);
    const Index stride = std::max<Index>(1, rules.scan_stride);
    const Index n_scan = (mesh.n_points + stride - 1) / stride;
    const double c1 = waveform.cos_coeff(1);

    std::vector<ScanPoint> scan(static_cast<size_t>(n_scan));
#pragma omp parallel for schedule(dynamic, 16)
    for (Index r = 0; r < n_scan; ++r) {
        const Index k = r * stride;
        const double tau = mesh.point(k);
        const Vector vtau = field.at(tau);
        const ColumnResult col =
            lowest_column_peak(an, vtau, tau, grid, detection_floor, probe_dt);
        if (!col.found) continue;
        try {
            const MicrolocalFit fit =
                pointwise_amp_phase(tau, col.omega_e, SampledSignal(mesh, vtau), alpha);
            ScanPoint& sp = scan[static_cast<size_t>(r)];
            sp.defined = true;
            sp.omega = col.omega_e;
            sp.a = fit.a / c1;
            sp.theta = fit.dtheta;
        } catch (const IllConditioned&) {
        }
    }

    // nothing detected above threshold: drop the leftover segments and stop
    if (std::none_of(scan.begin(), scan.end(), [](const ScanPoint& s) { return s.defined; })) {
        SegmentState out;
        out.modes = state.modes;
        return out;
    }

    // cut into fragments over consecutive defined scan points
    std::vector<Segment> fragments;
    std::vector<Index> idx;
    std::vector<double> a, th, om;
    auto flush = [&]() {
        if (idx.size() >= 2) fragments.push_back(densify(mesh, idx, a, th, om));
        idx.clear();
        a.clear();
        th.clear();
        om.clear();
    };
    for (Index r = 0; r < n_scan; ++r) {
        const ScanPoint& sp = scan[static_cast<size_t>(r)];
        if (!sp.defined) {
            flush();
            continue;
        }
        if (!idx.empty()) {
            const double dstep = static_cast<double>(stride) * mesh.dt();
            if (cut_between(om.back(), th.back(), sp.omega, sp.theta, dstep, rules)) flush();
        }
        idx.push_back(r * stride);
        a.push_back(sp.a);
        th.push_back(sp.theta);
        om.push_back(sp.omega);
    }
    flush();

    // extend fragments, filter by the phase-travel threshold
    SegmentState with_new = state;
    for (const Segment& frag : fragments) {
        Segment ext = mode_extend(field, frag, waveform, rules, grid, alpha);
        if (ext.phase_travel(mesh.dt()) > rules.eps3) with_new.segments.push_back(std::move(ext));
    }

    return mode_process(with_new, rules, mesh, waveform);
}

SegmentState mode_process(const SegmentState& state, const SegmentationRules& rules,
                          const TimeMesh& mesh, const Waveform& waveform) {
    SegmentState out;
    out.modes = state.modes;

    // discard: noise or mode-intersection artifacts
    std::vector<Segment> kept;
    for (const Segment& s : state.segments) {
        if (s.phase_travel(mesh.dt()) <= rules.eps3) continue;
        double tv = 0.0;
        for (Index k = 0; k + 1 < s.omega.size(); ++k) tv += std::abs(s.omega(k + 1) - s.omega(k));
        if (tv / std::max(mean_of(s.omega), 1e-12) > rules.max_freq_tv) continue;
        kept.push_back(s);
    }

    // group segments that extrapolate onto each other
    std::vector<std::vector<Segment>> groups;
    std::sort(kept.begin(), kept.end(),
              [](const Segment& x, const Segment& y) { return x.i1 < y.i1; });
    for (const Segment& s : kept) {
        bool placed = false;
        for (auto& g : groups) {
            if (same_mode(mesh, g.back(), s, rules)) {
                g.push_back(s);
                placed = true;
                break;
            }
        }
        if (!placed) groups.push_back({s});
    }

    // complete groups become modes; the rest stay free segments
    for (auto& g : groups) {
        Index covered = 0;
        for (const Segment& s : g) covered += s.length();
        const double frac = static_cast<double>(covered) / static_cast<double>(mesh.n_points);
        if (frac >= rules.coverage) {
            out.modes.push_back(join_group(g, mesh, waveform));
        } else {
            for (Segment& s : g) out.segments.push_back(std::move(s));
        }
    }
    return out;
}

IterationResult segmented_kmd(const SampledSignal& v, const Waveform& waveform,
                              const IterationConfig& cfg, const SegmentationRules& rules) {
    if (!v.all_finite()) throw NonFinite("segmented_kmd: signal contains NaN/Inf");
    if (cfg.grid.n_tau() < 2) throw SpecInvalid("segmented_kmd: cfg.grid must be set");
    IterationResult result;

    LowestFrequencyOptions opt;
    opt.threshold = rules.eps0_frac;
    auto lf = lowest_frequency(v, cfg.grid, cfg.alpha_initial, opt);
    if (!lf) throw NoModes("segmented_kmd: no mode detected above threshold");
    const double floor = rules.eps0_frac * lf->max_S;

    SegmentState state;
    const Index max_outer = 12;
    for (Index outer = 0; outer < max_outer; ++outer) {
        SegmentState next = m_mode(v, state, waveform, rules, cfg.grid, cfg.alpha_initial, floor);
        const bool done =
            next.segments.empty() && next.modes.size() == state.modes.size();
        if (next.modes.size() > state.modes.size() && !next.modes.empty()) {
            std::vector<Vector> scales;
            for (const ModeEstimate& m : next.modes)
                scales.push_back(window_scale_from_phase(m.phase, v.mesh.dt()));
            for (Index s = 0; s < cfg.max_sweeps; ++s) {
                const double sup = microlocal_sweep(v, next.modes, scales, cfg.alpha_initial,
                                                    cfg.rate, cfg.d, cfg.sg_window, cfg.sg_order);
                result.diagnostics.sup_dtheta_history.push_back(sup);
                ++result.diagnostics.total_sweeps;
                if (sup < cfg.eps1) break;
                if (s + 1 == cfg.max_sweeps) result.diagnostics.converged = false;
            }
        }
        const bool stagnant = next.modes.size() == state.modes.size() &&
                              next.segments.size() == state.segments.size() && outer > 0;
        state = std::move(next);
        if (done) break;
        if (stagnant) {
            result.diagnostics.converged = false;
            break;
        }
        if (outer + 1 == max_outer) result.diagnostics.converged = false;
    }

    if (state.modes.empty()) throw NoModes("segmented_kmd: no complete mode recovered");
    result.diagnostics.modes_found = static_cast<Index>(state.modes.size());
    result.modes = std::move(state.modes);
    return result;
}

}  // namespace kmd
