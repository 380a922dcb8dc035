#include "kmd/squeeze.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <map>
#include <cstdlib>
#include <limits>

namespace kmd {

namespace {

const double kGaborNorm1 = std::pow(2.0 / kPi, 0.25);

inline double to_half_open(double a) {
    // atan2 returns [-pi, pi]; fold the closed end onto +pi.
    return a <= -kPi ? a + kTwoPi : a;
}

}  // namespace

void GaborAnalyzer::eval(const Vector& f, double tau, double omega, double& wc,
                         double& ws) const {
    if (!(omega > 0)) throw SpecInvalid("GaborAnalyzer: omega must be > 0");
    const double half = 6.0 * alpha_ / omega;
    const Index lo = mesh_.nearest(tau - half);
    const Index hi = mesh_.nearest(tau + half);
    const Index m = hi - lo + 1;
    const double dt = mesh_.dt();
    const double amp = kGaborNorm1 * std::sqrt(omega / alpha_);
    const double c = omega * omega / (alpha_ * alpha_);

    // Gaussian factors via one vectorized exp; oscillation via rotation recurrence.
    Eigen::ArrayXd u =
        Eigen::ArrayXd::LinSpaced(m, mesh_.point(lo) - tau, mesh_.point(hi) - tau);
    Eigen::ArrayXd g = (-c * u.square()).exp();

    const double cd = std::cos(omega * dt), sd = std::sin(omega * dt);
    double cr = std::cos(omega * u(0)), sr = std::sin(omega * u(0));
    double ac = 0.0, as = 0.0;
    const double* fp = f.data() + lo;
    const double* gp = g.data();
    for (Index k = 0; k < m; ++k) {
        const double gf = gp[k] * fp[k];
        ac += gf * cr;
        as += gf * sr;
        const double cn = cr * cd - sr * sd;
        sr = sr * cd + cr * sd;
        cr = cn;
    }
    wc = amp * dt * ac;
    ws = amp * dt * as;
}

double GaborAnalyzer::theta_e(const Vector& f, double tau, double omega) const {
    double wc, ws;
    eval(f, tau, omega, wc, ws);
    return to_half_open(std::atan2(-ws, wc));
}

double GaborAnalyzer::omega_e(const Vector& f, double tau, double omega, double probe_dt) const {
    double wc1, ws1, wc2, ws2;
    eval(f, tau, omega, wc1, ws1);
    eval(f, tau + probe_dt, omega, wc2, ws2);
    double num = wc2 * ws1 - ws2 * wc1;
    if (num == 0.0) num = 0.0;
    return std::atan2(num, wc2 * wc1 + ws2 * ws1) / probe_dt;
}

double GaborAnalyzer::energy(const Vector& f, double tau, double omega) const {
    double wc, ws;
    eval(f, tau, omega, wc, ws);
    return wc * wc + ws * ws;
}

WaveletMaps wavelet_coeffs(const SampledSignal& f, const TFGrid& grid, double alpha) {
    WaveletMaps maps{GridMap::zero(grid), GridMap::zero(grid)};
    GaborAnalyzer an(f.mesh, alpha);
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < grid.n_tau(); ++i) {
        for (Index j = 0; j < grid.n_omega(); ++j) {
            double wc, ws;
            an.eval(f.values, grid.tau_values(i), grid.omega_values(j), wc, ws);
            maps.Wc.values(i, j) = wc;
            maps.Ws.values(i, j) = ws;
        }
    }
    return maps;
}

PhaseMap phase_field(const GridMap& Wc, const GridMap& Ws) {
    PhaseMap th = PhaseMap::zero(Wc.grid);
    for (Index i = 0; i < th.values.rows(); ++i)
        for (Index j = 0; j < th.values.cols(); ++j) {
            const double wc = Wc.values(i, j), ws = Ws.values(i, j);
            th.values(i, j) = (wc == 0.0 && ws == 0.0)
                                  ? std::numeric_limits<double>::quiet_NaN()
                                  : to_half_open(std::atan2(-ws, wc));
        }
    return th;
}

FreqMap freq_field(const GridMap& Wc, const GridMap& Ws) {
    const Index nt = Wc.values.rows();
    if (nt < 2) throw SpecInvalid("freq_field: need at least two tau columns");
    FreqMap om = FreqMap::zero(Wc.grid);
    const double dtau = Wc.grid.dtau();
    for (Index i = 0; i + 1 < nt; ++i)
        for (Index j = 0; j < Wc.values.cols(); ++j) {
            const double c1 = Wc.values(i, j), s1 = Ws.values(i, j);
            const double c2 = Wc.values(i + 1, j), s2 = Ws.values(i + 1, j);
            double num = c2 * s1 - s2 * c1;
            if (num == 0.0) num = 0.0;  // fold -0 onto +0: half turns map to +pi
            om.values(i, j) = std::atan2(num, c2 * c1 + s2 * s1) / dtau;
        }
    om.values.row(nt - 1) = om.values.row(nt - 2);
    return om;
}

EnergyMap maxpool_energy(const EnergyMap& E, const FreqMap& omega_e) {
    if (E.values.rows() != omega_e.values.rows() || E.values.cols() != omega_e.values.cols())
        throw SpecInvalid("maxpool_energy: maps must share the grid");
    EnergyMap S = EnergyMap::zero(E.grid);
    for (Index i = 0; i < E.values.rows(); ++i)
        for (Index j = 0; j < E.values.cols(); ++j) {
            const Index b = E.grid.omega_bin(omega_e.values(i, j));
            S.values(i, b) = std::max(S.values(i, b), E.values(i, j));
        }
    return S;
}

EnergyMap synchro_energy(const EnergyMap& E, const FreqMap& omega_e, double delta) {
    if (E.values.rows() != omega_e.values.rows() || E.values.cols() != omega_e.values.cols())
        throw SpecInvalid("synchro_energy: maps must share the grid");
    EnergyMap SE = EnergyMap::zero(E.grid);
    for (Index i = 0; i < E.values.rows(); ++i)
        for (Index j = 0; j < E.values.cols(); ++j) {
            const Index b = E.grid.omega_bin(omega_e.values(i, j));
            SE.values(i, b) += E.values(i, j) * E.grid.omega_weight(j) / delta;
        }
    return SE;
}

namespace {

/// One sub-bin local maximum of a map column.
struct ColumnPeak {
    Index j = 0;
    double omega = 0.0;
    double value = 0.0;
};

std::vector<ColumnPeak> column_peaks(const Matrix& V, const TFGrid& grid, Index i, double floor) {
    std::vector<ColumnPeak> peaks;
    const Index n = V.cols();
    for (Index j = 0; j < n; ++j) {
        if (V(i, j) < floor) continue;
        const double left = j > 0 ? V(i, j - 1) : -1.0;
        const double right = j + 1 < n ? V(i, j + 1) : -1.0;
        if (V(i, j) < left || V(i, j) <= right) continue;
        ColumnPeak p;
        p.j = j;
        p.value = V(i, j);
        p.omega = grid.omega_values(j);
        if (j > 0 && j + 1 < n) {
            const double denom = V(i, j - 1) - 2.0 * V(i, j) + V(i, j + 1);
            if (denom < -1e-300) {
                const double shift = 0.5 * (V(i, j - 1) - V(i, j + 1)) / denom;
                if (std::abs(shift) <= 1.0)
                    p.omega += shift * (grid.omega_values(j + 1) - grid.omega_values(j));
            }
        }
        peaks.push_back(p);
    }
    return peaks;
}

/// A crest curve in the making: assigned (column, omega, cell) samples.
struct Track {
    std::vector<std::tuple<Index, double, Index>> pts;  // (col, omega, cell j)
    Index miss = 0;
    Index coast = 0;          // consecutive columns without an accepted point
    size_t anchor = 0;        // regression restarts here after a crossing
    double frozen_slope = 0;  // slope carried through a coasting stretch
    bool closed = false;

    Index last_col() const { return std::get<0>(pts.back()); }
    double last_omega() const { return std::get<1>(pts.back()); }

    /// Regression slope (omega per column) over the trailing window, never
    /// reaching back past the anchor; a coasting track keeps its frozen slope
    /// until enough fresh points accumulate.
    double slope() const {
        const size_t avail = pts.size() - anchor;
        const size_t m = std::min<size_t>(avail, 25);
        if (m < 5) return frozen_slope;
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (size_t k = pts.size() - m; k < pts.size(); ++k) {
            const double x = static_cast<double>(std::get<0>(pts[k]));
            const double y = std::get<1>(pts[k]);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double n = static_cast<double>(m);
        const double den = n * sxx - sx * sx;
        return std::abs(den) > 1e-12 ? (n * sxy - sx * sy) / den : frozen_slope;
    }

    double predict(Index col) const {
        return last_omega() + slope() * static_cast<double>(col - last_col());
    }

    void accept(Index col, double omega, Index cell, double dw) {
        if (coast >= 5) {
            // back from a crossing blackout: restart the regression on the
            // frozen line so the bent approach cannot steer the continuation
            frozen_slope = slope();
            anchor = pts.size();
        }
        (void)dw;
        pts.emplace_back(col, omega, cell);
        coast = 0;
        miss = 0;
    }
};

}  // namespace

std::vector<Ridge> extract_ridges(const EnergyMap& S, double threshold_frac, Index max_ridges) {
    if (!(threshold_frac > 0.0 && threshold_frac < 1.0))
        throw SpecInvalid("extract_ridges: threshold_frac must be in (0,1)");
    const double smax = S.values.maxCoeff();
    if (!(smax > 0)) throw NoRidge("extract_ridges: superlevel set is empty");
    const double thr = threshold_frac * smax;
    const Index n_tau = S.values.rows(), n_om = S.values.cols();
    const double dw = (S.grid.omega_values(n_om - 1) - S.grid.omega_values(0)) /
                      static_cast<double>(n_om - 1);

    // Max-pool transport scatters a stripe's deposits over nearby bins; a box
    // smoothing along omega (two passes: triangular kernel) consolidates the
    // mass into smooth stripes whose local maxima are trackable peaks.
    Matrix Sd = S.values;
    for (int pass = 0; pass < 2; ++pass) {
        Matrix src = Sd;
        const Index r = 2;
        for (Index i = 0; i < n_tau; ++i)
            for (Index j = 0; j < n_om; ++j) {
                double acc = 0.0;
                Index cnt = 0;
                for (Index q = std::max<Index>(0, j - r); q <= std::min<Index>(n_om - 1, j + r);
                     ++q) {
                    acc += src(i, q);
                    ++cnt;
                }
                Sd(i, j) = acc / static_cast<double>(cnt);
            }
    }
    const double thr_sm = threshold_frac * Sd.maxCoeff();

    // Multi-track assignment over columns. A peak contested by several tracks
    // marks a crossing blob: every claimant coasts through on its frozen slope
    // rather than bending onto the merged crest.
    std::vector<Track> tracks;
    const Index max_miss = std::max<Index>(6, n_tau / 3);
    for (Index i = 0; i < n_tau; ++i) {
        const std::vector<ColumnPeak> peaks = column_peaks(Sd, S.grid, i, thr_sm);
        std::vector<int> choice(tracks.size(), -1);
        std::vector<int> claimants(peaks.size(), 0);
        for (size_t ti = 0; ti < tracks.size(); ++ti) {
            Track& t = tracks[ti];
            if (t.closed) continue;
            const double pred = t.predict(i);
            const double gate = std::max(3.5 * dw, 0.015 * pred);
            int best = -1;
            double bd = gate;
            for (size_t p = 0; p < peaks.size(); ++p) {
                const double d = std::abs(peaks[p].omega - pred);
                if (d < bd) {
                    bd = d;
                    best = static_cast<int>(p);
                }
            }
            choice[ti] = best;
            if (best >= 0) ++claimants[static_cast<size_t>(best)];
        }
        std::vector<bool> used(peaks.size(), false);
        for (size_t ti = 0; ti < tracks.size(); ++ti) {
            Track& t = tracks[ti];
            if (t.closed) continue;
            const int best = choice[ti];
            const double pred = t.predict(i);
            // a track that has been coasting must re-acquire strictly on its
            // own line; otherwise modest deviations are allowed
            const double accept_tol = t.coast >= 5
                                          ? 1.5 * dw
                                          : std::max(1.0 * dw, 0.005 * pred);
            const bool pulled =
                best >= 0 && std::abs(peaks[static_cast<size_t>(best)].omega - pred) >
                                 accept_tol &&
                t.pts.size() >= 8;
            if (best >= 0 && claimants[static_cast<size_t>(best)] == 1 && !pulled) {
                t.accept(i, peaks[static_cast<size_t>(best)].omega,
                         peaks[static_cast<size_t>(best)].j, dw);
                used[static_cast<size_t>(best)] = true;
            } else if (best >= 0) {
                used[static_cast<size_t>(best)] = true;  // contested: coast, no spawn here
                ++t.coast;
                if (++t.miss > max_miss) t.closed = true;
            } else {
                ++t.coast;
                if (++t.miss > max_miss) t.closed = true;
            }
        }
        for (size_t p = 0; p < peaks.size(); ++p)
            if (!used[p]) {
                Track t;
                t.pts.emplace_back(i, peaks[p].omega, peaks[p].j);
                tracks.push_back(std::move(t));
            }
    }

    // Suppress duplicates that followed the same stripe: if the shorter of two
    // tracks shares most of its columns with the other at nearby frequencies,
    // drop it.
    std::sort(tracks.begin(), tracks.end(),
              [](const Track& a, const Track& b) { return a.pts.size() > b.pts.size(); });
    std::vector<bool> dead(tracks.size(), false);
    for (size_t a = 0; a < tracks.size(); ++a) {
        if (dead[a]) continue;
        std::map<Index, double> by_col;
        for (const auto& [c, om, j] : tracks[a].pts) by_col[c] = om;
        for (size_t b = a + 1; b < tracks.size(); ++b) {
            if (dead[b]) continue;
            size_t shared = 0;
            for (const auto& [c, om, j] : tracks[b].pts) {
                auto it = by_col.find(c);
                if (it != by_col.end() && std::abs(it->second - om) <= 3.0 * dw) ++shared;
            }
            if (shared * 5 >= tracks[b].pts.size() * 3) dead[b] = true;
        }
    }

    // Merge fragments whose trend lines continue each other across a crossing.
    auto trend = [&](const Track& t) {
        auto ls = [](const std::vector<double>& x, const std::vector<double>& y) {
            double sx = 0, sy = 0, sxx = 0, sxy = 0;
            const double n = static_cast<double>(x.size());
            for (size_t k = 0; k < x.size(); ++k) {
                sx += x[k];
                sy += y[k];
                sxx += x[k] * x[k];
                sxy += x[k] * y[k];
            }
            const double den = n * sxx - sx * sx;
            const double slope = std::abs(den) > 1e-12 ? (n * sxy - sx * sy) / den : 0.0;
            return std::pair<double, double>((sy - slope * sx) / n, slope);
        };
        std::vector<double> xs, ys;
        for (const auto& [c, om, j] : t.pts) {
            xs.push_back(static_cast<double>(c));
            ys.push_back(om);
        }
        auto [icpt, slope] = ls(xs, ys);
        // trim bent samples near crossings, then refit
        std::vector<double> res(xs.size());
        for (size_t k = 0; k < xs.size(); ++k) res[k] = std::abs(ys[k] - icpt - slope * xs[k]);
        std::vector<double> srt = res;
        std::sort(srt.begin(), srt.end());
        const double med = srt[srt.size() / 2];
        if (med > 0) {
            std::vector<double> xk, yk;
            for (size_t k = 0; k < xs.size(); ++k)
                if (res[k] <= 2.0 * med) {
                    xk.push_back(xs[k]);
                    yk.push_back(ys[k]);
                }
            if (xk.size() >= 5) std::tie(icpt, slope) = ls(xk, yk);
        }
        return std::pair<double, double>(icpt, slope);
    };
    std::vector<Track> frags;
    for (size_t a = 0; a < tracks.size(); ++a)
        if (!dead[a] && tracks[a].pts.size() >= 3) frags.push_back(std::move(tracks[a]));
    for (bool merged = true; merged;) {
        merged = false;
        for (size_t a = 0; a < frags.size() && !merged; ++a)
            for (size_t b = a + 1; b < frags.size() && !merged; ++b) {
                Track& first =
                    std::get<0>(frags[a].pts.front()) <= std::get<0>(frags[b].pts.front())
                        ? frags[a]
                        : frags[b];
                Track& second = &first == &frags[a] ? frags[b] : frags[a];
                const Index gap =
                    std::get<0>(second.pts.front()) - std::get<0>(first.pts.back());
                if (gap < -4 || gap > n_tau / 3) continue;
                const auto [i1, s1] = trend(first);
                const auto [i2, s2] = trend(second);
                bool ok = true;
                for (const Index c : {std::get<0>(first.pts.back()),
                                      std::get<0>(second.pts.front())}) {
                    const double v1 = i1 + s1 * static_cast<double>(c);
                    const double v2 = i2 + s2 * static_cast<double>(c);
                    if (!(v1 > 0) || !(v2 > 0) || std::abs(std::log(v1 / v2)) > 0.06) ok = false;
                }
                if (!ok) continue;
                const Index first_end = std::get<0>(first.pts.back());
                for (const auto& pt : second.pts)
                    if (std::get<0>(pt) > first_end) first.pts.push_back(pt);
                Track& gone = second;
                frags.erase(frags.begin() + (&gone - frags.data()));
                merged = true;
            }
    }

    // Build ridges: crest = argmax of the original map near the track; cells =
    // superlevel cells assigned to the nearest crest (disjoint by construction).
    std::vector<Ridge> ridges(frags.size());
    for (size_t r = 0; r < frags.size(); ++r) {
        Ridge& ridge = ridges[r];
        std::vector<std::tuple<Index, Index, double>> entries;
        for (const auto& [c, om, j] : frags[r].pts) {
            Index best = j;
            for (Index q = std::max<Index>(0, j - 3); q <= std::min<Index>(n_om - 1, j + 3); ++q)
                if (S.values(c, q) > S.values(c, best)) best = q;
            entries.emplace_back(c, best, om);
        }
        std::sort(entries.begin(), entries.end());
        entries.erase(std::unique(entries.begin(), entries.end(),
                                  [](const auto& a, const auto& b) {
                                      return std::get<0>(a) == std::get<0>(b);
                                  }),
                      entries.end());
        for (const auto& [c, best, om] : entries) {
            ridge.crest.emplace_back(c, best);
            ridge.crest_omega.push_back(om);
        }
    }
    // nearest-crest cell assignment over the superlevel set
    for (Index i = 0; i < n_tau; ++i) {
        // interpolate each ridge's crest omega at this column
        std::vector<double> crest_om(frags.size(), std::numeric_limits<double>::quiet_NaN());
        for (size_t r = 0; r < frags.size(); ++r) {
            const auto& pts = frags[r].pts;
            if (i < std::get<0>(pts.front()) || i > std::get<0>(pts.back())) continue;
            double prev_c = std::get<0>(pts.front()), prev_o = std::get<1>(pts.front());
            for (const auto& [c, om, j] : pts) {
                if (c >= i) {
                    crest_om[r] = c == i || c == prev_c
                                      ? om
                                      : prev_o + (om - prev_o) * (static_cast<double>(i) - prev_c) /
                                            (static_cast<double>(c) - prev_c);
                    break;
                }
                prev_c = static_cast<double>(c);
                prev_o = om;
            }
        }
        for (Index j = 0; j < n_om; ++j) {
            if (S.values(i, j) < thr && Sd(i, j) < thr_sm) continue;
            int best = -1;
            double bd = std::numeric_limits<double>::infinity();
            for (size_t r = 0; r < frags.size(); ++r) {
                if (std::isnan(crest_om[r])) continue;
                const double d = std::abs(S.grid.omega_values(j) - crest_om[r]);
                if (d < bd) {
                    bd = d;
                    best = static_cast<int>(r);
                }
            }
            if (best >= 0 && bd <= std::max(6.0 * dw, 0.1 * S.grid.omega_values(j))) {
                ridges[static_cast<size_t>(best)].cells.emplace_back(i, j);
                ridges[static_cast<size_t>(best)].energy += S.values(i, j);
                ridges[static_cast<size_t>(best)].mean_omega += S.grid.omega_values(j);
            }
        }
    }
    for (Ridge& r : ridges)
        if (!r.cells.empty()) r.mean_omega /= static_cast<double>(r.cells.size());

    if (std::getenv("KMD_RIDGE_DEBUG")) {
        for (const Ridge& r : ridges)
            if (!r.crest.empty())
                std::fprintf(stderr,
                             "[ridges] cols [%ld, %ld] cells %zu energy %.3g crest om %.0f..%.0f\n",
                             static_cast<long>(r.crest.front().first),
                             static_cast<long>(r.crest.back().first), r.cells.size(), r.energy,
                             S.grid.omega_values(r.crest.front().second),
                             S.grid.omega_values(r.crest.back().second));
    }

    // final filters: relative energy, span, and peak height
    double top_energy = 0.0;
    Index top_span = 0;
    for (const Ridge& r : ridges) {
        if (r.crest.empty()) continue;
        top_energy = std::max(top_energy, r.energy);
        top_span = std::max<Index>(top_span, r.crest.back().first - r.crest.front().first + 1);
    }
    const Index min_span = std::max<Index>(3, n_tau / 50);
    std::vector<Ridge> kept;
    for (Ridge& r : ridges) {
        if (r.crest.empty() || r.cells.empty()) continue;
        const Index span = r.crest.back().first - r.crest.front().first + 1;
        double peak = 0.0;
        for (const auto& [i, j] : r.cells) peak = std::max(peak, S.values(i, j));
        if (r.energy >= 0.02 * top_energy && span >= min_span && span >= top_span / 5 &&
            peak >= 1.5 * thr)
            kept.push_back(std::move(r));
    }
    std::sort(kept.begin(), kept.end(), [](const Ridge& a, const Ridge& b) {
        if (a.energy != b.energy) return a.energy > b.energy;
        return a.mean_omega < b.mean_omega;
    });
    if (static_cast<Index>(kept.size()) > max_ridges) kept.resize(static_cast<size_t>(max_ridges));
    if (kept.empty()) throw NoRidge("extract_ridges: no ridge above threshold");
    for (size_t k = 0; k < kept.size(); ++k) kept[k].label = static_cast<int>(k);
    return kept;
}
Decomposition recover_by_partition(const SampledSignal& v, const std::vector<Ridge>& ridges,
                                   const TFGrid& grid, double alpha, double sigma) {
    if (ridges.empty()) throw SpecInvalid("recover_by_partition: no ridges");

    // The ridges guide a partition A(i) of the whole time-frequency domain:
    // each cell joins the ridge whose crest (constant-extended in tau) is
    // nearest in omega, so the per-mode kernels sum exactly to K_u.
    const Index nt = grid.n_tau(), nw = grid.n_omega();
    Matrix crest_omega(static_cast<Index>(ridges.size()), nt);
    for (size_t r = 0; r < ridges.size(); ++r) {
        Vector col = Vector::Constant(nt, std::numeric_limits<double>::quiet_NaN());
        for (const auto& [i, j] : ridges[r].crest) col(i) = grid.omega_values(j);
        // fill gaps and extend by the nearest defined value
        Index first = -1, last = -1;
        for (Index i = 0; i < nt; ++i)
            if (!std::isnan(col(i))) {
                if (first < 0) first = i;
                last = i;
            }
        if (first < 0) throw SpecInvalid("recover_by_partition: ridge without crest");
        for (Index i = 0; i < nt; ++i) {
            if (std::isnan(col(i))) {
                if (i < first)
                    col(i) = col(first);
                else if (i > last)
                    col(i) = col(last);
                else {
                    Index prev = i - 1;
                    Index next = i + 1;
                    while (std::isnan(col(next))) ++next;
                    col(i) = col(prev) + (col(next) - col(prev)) / static_cast<double>(next - prev);
                }
            }
        }
        crest_omega.row(static_cast<Index>(r)) = col.transpose();
    }

    std::vector<CellSet> assigned(ridges.size());
    for (Index i = 0; i < nt; ++i)
        for (Index j = 0; j < nw; ++j) {
            size_t best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (size_t r = 0; r < ridges.size(); ++r) {
                const double d = std::abs(grid.omega_values(j) - crest_omega(static_cast<Index>(r), i));
                if (d < bd) {
                    bd = d;
                    best = r;
                }
            }
            assigned[best].emplace_back(i, j);
        }

    KernelFamily family;
    family.sigma = sigma;
    for (size_t r = 0; r < ridges.size(); ++r)
        family.add("mode" + std::to_string(ridges[r].label),
                   kernel_aggregate(v.mesh, grid, alpha, assigned[r]));
    return optimal_recover(family, v);
}

std::vector<Vector> ridge_phases(const WaveletMaps& W, const EnergyMap& S,
                                 const std::vector<Ridge>& ridges, const TimeMesh& mesh,
                                 const SampledSignal* f, double alpha) {
    std::vector<Vector> out;
    const Vector tq = mesh.points();
    std::optional<GaborAnalyzer> an;
    if (f != nullptr) an.emplace(mesh, alpha);
    for (const Ridge& r : ridges) {
        if (r.crest.size() < 2) throw NoRidge("ridge_phases: ridge spans fewer than two columns");

        // measured phase and sub-bin frequency along the crest; with the signal
        // available the phase is evaluated at the sub-bin crest frequency
        const size_t m = r.crest.size();
        std::vector<double> taus(m), phases(m), omegas(m);
        for (size_t k = 0; k < m; ++k) {
            const auto& [i, j] = r.crest[k];
            taus[k] = S.grid.tau_values(i);
            omegas[k] = r.crest_omega.size() == m ? r.crest_omega[k] : S.grid.omega_values(j);
            if (an) {
                phases[k] = an->theta_e(f->values, taus[k], omegas[k]);
            } else {
                phases[k] = to_half_open(std::atan2(-W.Ws.values(i, j), W.Wc.values(i, j)));
            }
        }

        // unwrap with the frequency integral resolving the 2 pi k count, and
        // densify coasted gaps with the integral itself (the measured phases at
        // the gap ends pin the constant; the mismatch is spread linearly)
        std::vector<double> xs, ys;
        xs.push_back(taus[0]);
        ys.push_back(phases[0]);
        for (size_t k = 1; k < m; ++k) {
            const double dt_gap = taus[k] - taus[k - 1];
            const double travel = 0.5 * (omegas[k - 1] + omegas[k]) * dt_gap;
            const double inc = travel + wrap_angle(phases[k] - phases[k - 1] - travel);
            const double theta_prev = ys.back();
            // synthetic interior samples across multi-column gaps
            const Index steps = static_cast<Index>(std::round(dt_gap / S.grid.dtau()));
            if (steps > 2) {
                const double mismatch = inc - travel;
                for (Index q = 1; q < steps; ++q) {
                    const double frac = static_cast<double>(q) / static_cast<double>(steps);
                    const double om_q = omegas[k - 1] + (omegas[k] - omegas[k - 1]) * frac;
                    const double partial =
                        0.5 * (omegas[k - 1] + om_q) * (frac * dt_gap);
                    xs.push_back(taus[k - 1] + frac * dt_gap);
                    ys.push_back(theta_prev + partial + mismatch * frac);
                }
            }
            xs.push_back(taus[k]);
            ys.push_back(theta_prev + inc);
        }

        Vector tv = Eigen::Map<Vector>(xs.data(), static_cast<Index>(xs.size()));
        Vector ph = Eigen::Map<Vector>(ys.data(), static_cast<Index>(ys.size()));
        out.push_back(pchip(tv, ph, tq));
    }
    return out;
}

Decomposition recover_by_phase(const SampledSignal& v, const std::vector<Vector>& theta_list,
                               double gamma, double sigma) {
    if (theta_list.empty()) throw SpecInvalid("recover_by_phase: no phases given");
    KernelFamily family;
    family.sigma = sigma;
    for (size_t i = 0; i < theta_list.size(); ++i) {
        if (!theta_list[i].allFinite()) throw NonFinite("recover_by_phase: phase not finite");
        family.add("mode" + std::to_string(i), kernel_phase(v.mesh, theta_list[i], gamma));
    }
    return optimal_recover(family, v);
}

}  // namespace kmd
