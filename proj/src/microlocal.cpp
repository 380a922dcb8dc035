#include "kmd/microlocal.hpp"

#include <algorithm>
#include <cmath>

namespace kmd {

namespace {

/// Solve the symmetric Gram system with an LDLT condition guard; applies a
/// small ridge when requested instead of failing outright.
Vector solve_gram(Matrix A, const Vector& b, double cond_limit, bool ridge_rescue) {
    auto try_solve = [&](const Matrix& M, double& cond) -> std::optional<Vector> {
        Eigen::LDLT<Matrix> ldlt(M);
        if (ldlt.info() != Eigen::Success) return std::nullopt;
        const Vector d = ldlt.vectorD();
        const double dmax = d.cwiseAbs().maxCoeff();
        const double dmin = d.cwiseAbs().minCoeff();
        if (!(dmax > 0) || dmin <= 0) {
            cond = std::numeric_limits<double>::infinity();
            return std::nullopt;
        }
        cond = dmax / dmin;
        if (cond > cond_limit) return std::nullopt;
        return ldlt.solve(b);
    };
    double cond = 0.0;
    if (auto z = try_solve(A, cond)) return *z;
    if (ridge_rescue) {
        Matrix Ar = A;
        Ar.diagonal().array() += 1e-10 * A.trace();
        if (auto z = try_solve(Ar, cond)) return *z;
    }
    throw IllConditioned("microlocal: Gram condition estimate exceeds limit");
}

MicrolocalFit finalize_fit(Vector Z, Index d) {
    MicrolocalFit out;
    out.a = std::hypot(Z(0), Z(d + 1));
    out.dtheta = std::atan2(-Z(d + 1), Z(0));
    if (out.dtheta <= -kPi) out.dtheta += kTwoPi;
    out.Z = std::move(Z);
    return out;
}

}  // namespace

MicrolocalEngine::MicrolocalEngine(TimeMesh mesh, double alpha, Index d)
    : mesh_(mesh), alpha_(alpha), d_(d) {
    if (!(alpha > 0)) throw SpecInvalid("MicrolocalEngine: alpha must be > 0");
    if (d < 0) throw SpecInvalid("MicrolocalEngine: d must be >= 0");
}

void MicrolocalEngine::bind(const Vector& theta_e, const Vector& f) {
    if (theta_e.size() != mesh_.n_points || f.size() != mesh_.n_points)
        throw SpecInvalid("MicrolocalEngine: size mismatch");
    if (!theta_e.allFinite()) throw NonFinite("MicrolocalEngine: theta_e not finite");
    const Index n = mesh_.n_points;
    Vector C(n), S(n);
    for (Index k = 0; k < n; ++k) {
        C(k) = std::cos(theta_e(k));
        S(k) = std::sin(theta_e(k));
    }
    cc_ = C.cwiseProduct(C);
    ss_ = S.cwiseProduct(S);
    cs_ = C.cwiseProduct(S);
    fc_ = C.cwiseProduct(f);
    fs_ = S.cwiseProduct(f);
}

MicrolocalFit MicrolocalEngine::fit(double tau, double window_scale) const {
    if (!(window_scale > 0)) throw SpecInvalid("MicrolocalEngine: window_scale must be > 0");
    const double half = 6.0 * alpha_ / window_scale;
    const Index lo = mesh_.nearest(tau - half);
    const Index hi = mesh_.nearest(tau + half);
    const Index m = hi - lo + 1;
    const Index dim = 2 * d_ + 2;
    if (m < dim) throw IllConditioned("microlocal: window holds fewer points than the basis");

    // w = G^2, the product of the window factors carried by basis and data.
    Eigen::ArrayXd u = Eigen::ArrayXd::LinSpaced(m, mesh_.point(lo) - tau, mesh_.point(hi) - tau);
    const double c = window_scale / alpha_;
    Eigen::ArrayXd w = (-2.0 * (c * c) * u.square()).exp();

    const Index n_mom = 2 * d_ + 1;
    Vector Mcc(n_mom), Mss(n_mom), Mcs(n_mom), bc(d_ + 1), bs(d_ + 1);
    Eigen::ArrayXd wm = w;
    for (Index mom = 0; mom < n_mom; ++mom) {
        Mcc(mom) = (cc_.segment(lo, m).array() * wm).sum();
        Mss(mom) = (ss_.segment(lo, m).array() * wm).sum();
        Mcs(mom) = (cs_.segment(lo, m).array() * wm).sum();
        if (mom <= d_) {
            bc(mom) = (fc_.segment(lo, m).array() * wm).sum();
            bs(mom) = (fs_.segment(lo, m).array() * wm).sum();
        }
        if (mom + 1 < n_mom) wm *= u;
    }

    Matrix A(dim, dim);
    Vector b(dim);
    for (Index n1 = 0; n1 <= d_; ++n1) {
        b(n1) = bc(n1);
        b(d_ + 1 + n1) = bs(n1);
        for (Index n2 = 0; n2 <= d_; ++n2) {
            A(n1, n2) = Mcc(n1 + n2);
            A(d_ + 1 + n1, d_ + 1 + n2) = Mss(n1 + n2);
            A(n1, d_ + 1 + n2) = Mcs(n1 + n2);
            A(d_ + 1 + n1, n2) = Mcs(n1 + n2);
        }
    }

    // Normalizing by the zeroth moment keeps the condition estimate scale-free.
    const double scale = std::max(Mcc(0) + Mss(0), 1e-300);
    return finalize_fit(solve_gram(A / scale, b / scale, 1e12, false), d_);
}

MicrolocalFit microlocal_fit(double tau, const Vector& theta_e, const SampledSignal& f,
                             double alpha, Index d, double window_scale) {
    MicrolocalEngine engine(f.mesh, alpha, d);
    engine.bind(theta_e, f.values);
    return engine.fit(tau, window_scale);
}

MicrolocalFit pointwise_amp_phase(double tau, double omega, const SampledSignal& v, double alpha) {
    if (!(omega > 0)) throw SpecInvalid("pointwise_amp_phase: omega must be > 0");
    const TimeMesh& mesh = v.mesh;
    const double half = 6.0 * alpha / omega;
    const Index lo = mesh.nearest(tau - half);
    const Index hi = mesh.nearest(tau + half);
    const Index m = hi - lo + 1;
    if (m < 2) throw IllConditioned("pointwise_amp_phase: empty window");

    Eigen::ArrayXd u = Eigen::ArrayXd::LinSpaced(m, mesh.point(lo) - tau, mesh.point(hi) - tau);
    const double c = omega / alpha;
    Eigen::ArrayXd w = (-2.0 * (c * c) * u.square()).exp();

    const double cd = std::cos(omega * mesh.dt()), sd = std::sin(omega * mesh.dt());
    double cr = std::cos(omega * u(0)), sr = std::sin(omega * u(0));
    double mcc = 0, mss = 0, mcs = 0, rc = 0, rs = 0;
    const double* fp = v.values.data() + lo;
    const double* wp = w.data();
    for (Index k = 0; k < m; ++k) {
        const double wk = wp[k];
        const double fw = wk * fp[k];
        mcc += wk * cr * cr;
        mss += wk * sr * sr;
        mcs += wk * cr * sr;
        rc += fw * cr;
        rs += fw * sr;
        const double cn = cr * cd - sr * sd;
        sr = sr * cd + cr * sd;
        cr = cn;
    }
    Matrix A(2, 2);
    A << mcc, mcs, mcs, mss;
    Vector b(2);
    b << rc, rs;
    const double scale = std::max(mcc + mss, 1e-300);
    return finalize_fit(solve_gram(A / scale, b / scale, 1e12, false), 0);
}

namespace {

/// squeeze column machinery shared by lowest_frequency: E and omega_e along a
/// tau column at mesh resolution.
struct ColumnScan {
    Vector E;        // per grid omega node
    Vector omega_e;  // transported frequency per node
};

ColumnScan scan_column(const GaborAnalyzer& an, const Vector& f, double tau, const TFGrid& grid,
                       double probe_dt) {
    ColumnScan col;
    col.E.resize(grid.n_omega());
    col.omega_e.resize(grid.n_omega());
    for (Index j = 0; j < grid.n_omega(); ++j) {
        const double om = grid.omega_values(j);
        double wc1, ws1, wc2, ws2;
        an.eval(f, tau, om, wc1, ws1);
        an.eval(f, tau + probe_dt, om, wc2, ws2);
        col.E(j) = wc1 * wc1 + ws1 * ws1;
        col.omega_e(j) =
            std::atan2(wc2 * ws1 - ws2 * wc1, wc2 * wc1 + ws2 * ws1) / probe_dt;
    }
    return col;
}

}  // namespace

std::optional<LowestFrequency> lowest_frequency(const SampledSignal& v, const TFGrid& grid,
                                                double alpha, const LowestFrequencyOptions& opt) {
    SampledSignal f = v;
    if (opt.weighting == EnergyWeighting::kinv) {
        KernelMatrix Ku = kernel_aggregate(v.mesh, grid, alpha);
        f = solve_regularized(Ku, opt.sigma, v);
    }

    // Max-pool energy on the grid, with a fine probe for the frequency transport.
    const double probe_dt = v.mesh.dt();
    GaborAnalyzer an(v.mesh, alpha);
    EnergyMap S = EnergyMap::zero(grid);
    Matrix omega_e_map(grid.n_tau(), grid.n_omega());
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < grid.n_tau(); ++i) {
        ColumnScan col = scan_column(an, f.values, grid.tau_values(i), grid, probe_dt);
        omega_e_map.row(i) = col.omega_e.transpose();
        for (Index j = 0; j < grid.n_omega(); ++j) {
            const Index b = grid.omega_bin(col.omega_e(j));
            S.values(i, b) = std::max(S.values(i, b), col.E(j));
        }
    }

    const double smax = S.values.maxCoeff();
    const double floor = opt.threshold_is_absolute ? opt.threshold : opt.threshold * smax;
    if (!(smax > 0) || !(smax >= floor)) return std::nullopt;

    std::vector<Ridge> ridges;
    try {
        ridges = extract_ridges(S, std::min(0.999, std::max(1e-12, floor / smax)), opt.max_ridges);
    } catch (const NoRidge&) {
        return std::nullopt;
    }
    const Ridge* low = &ridges.front();
    for (const Ridge& r : ridges)
        if (r.mean_omega < low->mean_omega) low = &r;

    // Crest frequency on the grid columns of the ridge, then refined per mesh point.
    std::vector<double> taus, crest_om;
    for (const auto& [i, j] : low->crest) {
        taus.push_back(grid.tau_values(i));
        crest_om.push_back(omega_e_map(i, j) > 0 ? omega_e_map(i, j) : grid.omega_values(j));
    }
    if (taus.size() < 2) return std::nullopt;
    Vector tv = Eigen::Map<Vector>(taus.data(), static_cast<Index>(taus.size()));
    Vector ov = Eigen::Map<Vector>(crest_om.data(), static_cast<Index>(crest_om.size()));

    const Vector tq = v.mesh.points();
    Vector om_mesh = pchip(tv, ov, tq);
    const double om_lo = grid.omega_min(), om_hi = grid.omega_max();
    for (Index k = 0; k < om_mesh.size(); ++k)
        om_mesh(k) = std::clamp(om_mesh(k), om_lo, om_hi);

    LowestFrequency out;
    out.max_S = smax;
    out.omega_low.resize(v.mesh.n_points);
    out.theta_low.resize(v.mesh.n_points);
#pragma omp parallel for schedule(static)
    for (Index k = 0; k < v.mesh.n_points; ++k) {
        const double tau = tq(k);
        const double om = om_mesh(k);
        double wc1, ws1, wc2, ws2;
        an.eval(f.values, tau, om, wc1, ws1);
        an.eval(f.values, tau + probe_dt, om, wc2, ws2);
        const double oe = std::atan2(wc2 * ws1 - ws2 * wc1, wc2 * wc1 + ws2 * ws1) / probe_dt;
        out.omega_low(k) = oe > 0 ? oe : om;
        double th = std::atan2(-ws1, wc1);
        if (th <= -kPi) th += kTwoPi;
        out.theta_low(k) = th;
    }
    out.theta_low = unwrap_phase(out.theta_low);
    return out;
}

std::optional<LowestFrequency> lowest_frequency(const SampledSignal& v, const TFGrid& grid,
                                                double alpha, double threshold) {
    LowestFrequencyOptions opt;
    opt.threshold = threshold;
    return lowest_frequency(v, grid, alpha, opt);
}

CoeffHistogram waveform_coeffs(const Vector& theta_e, const SampledSignal& v, Index k_max,
                               double alpha, Index stride) {
    if (k_max < 2) throw SpecInvalid("waveform_coeffs: k_max must be >= 2");
    if (stride < 1) throw SpecInvalid("waveform_coeffs: stride must be >= 1");
    const TimeMesh& mesh = v.mesh;
    const Index n = mesh.n_points;
    if (theta_e.size() != n) throw SpecInvalid("waveform_coeffs: size mismatch");

    // cos(m theta), sin(m theta) tables for m = 0..2 k_max by angle recurrence.
    const Index n_mult = 2 * k_max + 1;
    Matrix Ct(n, n_mult), St(n, n_mult);
    for (Index k = 0; k < n; ++k) {
        const double c1 = std::cos(theta_e(k)), s1 = std::sin(theta_e(k));
        Ct(k, 0) = 1.0;
        St(k, 0) = 0.0;
        double cm = 1.0, sm = 0.0;
        for (Index m = 1; m < n_mult; ++m) {
            const double cn = cm * c1 - sm * s1;
            sm = sm * c1 + cm * s1;
            cm = cn;
            Ct(k, m) = cm;
            St(k, m) = sm;
        }
    }

    // Window scale from the current frequency estimate d theta / dt.
    Vector omega0(n);
    const double dt = mesh.dt();
    for (Index k = 0; k < n; ++k) {
        const Index k0 = std::max<Index>(0, k - 1), k1 = std::min<Index>(n - 1, k + 1);
        omega0(k) = std::max(1.0, (theta_e(k1) - theta_e(k0)) / (dt * static_cast<double>(k1 - k0)));
    }

    const Index dim = 2 * k_max - 1;
    const Index n_tau = (n + stride - 1) / stride;

    std::vector<std::vector<double>> cos_tmp(static_cast<size_t>(k_max - 1)),
        sin_tmp(static_cast<size_t>(k_max - 1));
    Matrix samples(n_tau, dim);  // row per tau: [valid flag packed via NaN]
    samples.setConstant(std::numeric_limits<double>::quiet_NaN());

#pragma omp parallel for schedule(static)
    for (Index r = 0; r < n_tau; ++r) {
        const Index k0 = r * stride;
        const double tau = mesh.point(k0);
        const double ws = omega0(k0);
        const double half = 6.0 * alpha / ws;
        const Index lo = mesh.nearest(tau - half);
        const Index hi = mesh.nearest(tau + half);
        const Index m = hi - lo + 1;
        if (m < dim) continue;

        Eigen::ArrayXd u =
            Eigen::ArrayXd::LinSpaced(m, mesh.point(lo) - tau, mesh.point(hi) - tau);
        const double c = ws / alpha;
        Eigen::ArrayXd w = (-2.0 * (c * c) * u.square()).exp();
        Eigen::ArrayXd wf = w * v.values.segment(lo, m).array();

        Vector Mc(n_mult), Ms(n_mult), Rc(k_max + 1), Rs(k_max + 1);
        for (Index mult = 0; mult < n_mult; ++mult) {
            Mc(mult) = (Ct.col(mult).segment(lo, m).array() * w).sum();
            Ms(mult) = (St.col(mult).segment(lo, m).array() * w).sum();
            if (mult >= 1 && mult <= k_max) {
                Rc(mult) = (Ct.col(mult).segment(lo, m).array() * wf).sum();
                Rs(mult) = (St.col(mult).segment(lo, m).array() * wf).sum();
            }
        }

        // Basis order: (1,c), (2,c)..(k_max,c), (2,s)..(k_max,s).
        auto cos_idx = [&](Index k) { return k - 1; };
        auto sin_idx = [&](Index k) { return k_max + k - 2; };
        auto ms_signed = [&](Index d_) { return d_ >= 0 ? Ms(d_) : -Ms(-d_); };

        Matrix A(dim, dim);
        Vector b(dim);
        for (Index ka = 1; ka <= k_max; ++ka) {
            if (ka >= 2) b(sin_idx(ka)) = Rs(ka);
            b(cos_idx(ka)) = Rc(ka);
            for (Index kb = 1; kb <= k_max; ++kb) {
                A(cos_idx(ka), cos_idx(kb)) = 0.5 * (Mc(std::abs(ka - kb)) + Mc(ka + kb));
                if (kb >= 2)
                    A(cos_idx(ka), sin_idx(kb)) = 0.5 * (Ms(ka + kb) - ms_signed(ka - kb));
                if (ka >= 2)
                    A(sin_idx(ka), cos_idx(kb)) = 0.5 * (Ms(ka + kb) - ms_signed(kb - ka));
                if (ka >= 2 && kb >= 2)
                    A(sin_idx(ka), sin_idx(kb)) = 0.5 * (Mc(std::abs(ka - kb)) - Mc(ka + kb));
            }
        }

        try {
            const double scale = std::max(A.trace() / static_cast<double>(dim), 1e-300);
            Vector Z = solve_gram(A / scale, b / scale, 1e10, true);
            const double z1 = Z(cos_idx(1));
            if (std::abs(z1) < 1e-12 * Z.cwiseAbs().maxCoeff()) continue;
            for (Index k = 2; k <= k_max; ++k) {
                samples(r, cos_idx(k)) = Z(cos_idx(k)) / z1;
                samples(r, sin_idx(k)) = Z(sin_idx(k)) / z1;
            }
        } catch (const IllConditioned&) {
            // tau omitted from the histogram
        }
    }

    CoeffHistogram h;
    h.k_max = k_max;
    h.cos_samples.resize(static_cast<size_t>(k_max - 1));
    h.sin_samples.resize(static_cast<size_t>(k_max - 1));
    for (Index r = 0; r < n_tau; ++r) {
        if (std::isnan(samples(r, 1))) continue;  // (2,c) column marks validity
        for (Index k = 2; k <= k_max; ++k) {
            h.cos_samples[static_cast<size_t>(k - 2)].push_back(samples(r, k - 1));
            h.sin_samples[static_cast<size_t>(k - 2)].push_back(samples(r, k_max + k - 2));
        }
    }
    return h;
}

double aggregate_coeff(std::vector<double> samples, double L, double cutoff) {
    if (samples.empty()) throw SpecInvalid("aggregate_coeff: empty histogram");
    std::sort(samples.begin(), samples.end());
    const size_t n = samples.size();
    size_t best_lo = 0, best_count = 0;
    size_t hi = 0;
    for (size_t lo = 0; lo < n; ++lo) {
        if (hi < lo) hi = lo;
        while (hi + 1 < n && samples[hi + 1] <= samples[lo] + L) ++hi;
        const size_t count = hi - lo + 1;
        if (count > best_count) {  // strict: ties keep the leftmost interval
            best_count = count;
            best_lo = lo;
        }
    }
    if (static_cast<double>(best_count) < cutoff * static_cast<double>(n)) return 0.0;
    double mean = 0.0;
    for (size_t i = best_lo; i < best_lo + best_count; ++i) mean += samples[i];
    return mean / static_cast<double>(best_count);
}

Waveform aggregate_coeffs(const CoeffHistogram& h) {
    Vector c = Vector::Zero(h.k_max), s = Vector::Zero(h.k_max - 1);
    c(0) = 1.0;
    for (Index k = 2; k <= h.k_max; ++k) {
        c(k - 1) = aggregate_coeff(h.cos_samples[static_cast<size_t>(k - 2)], h.interval_width,
                                   h.cutoff);
        s(k - 2) = aggregate_coeff(h.sin_samples[static_cast<size_t>(k - 2)], h.interval_width,
                                   h.cutoff);
    }
    return Waveform(c, s, Waveform::Tag::fourier);
}

}  // namespace kmd
