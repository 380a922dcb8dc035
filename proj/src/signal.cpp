#include "kmd/signal.hpp"

#include <algorithm>

namespace kmd {

Waveform::Waveform(Vector cos_coeffs, Vector sin_coeffs, Tag tag)
    : cos_(std::move(cos_coeffs)), sin_(std::move(sin_coeffs)), tag_(tag) {
    if (cos_.size() < 1) throw SpecInvalid("Waveform: need at least c_{1,c}");
    if (sin_.size() != cos_.size() - 1)
        throw SpecInvalid("Waveform: sin_coeffs must cover k = 2..k_max");
    if (std::abs(cos_(0) - 1.0) > 1e-12)
        throw SpecInvalid("Waveform: normalization requires c_{1,c} = 1");
}

Waveform Waveform::cosine() {
    Vector c(1);
    c << 1.0;
    return Waveform(c, Vector(0), Tag::fourier);
}

double Waveform::eval_fourier(double t) const {
    // Horner-free recurrence: cos(kt), sin(kt) by angle addition.
    const double c1 = std::cos(t), s1 = std::sin(t);
    double ck = c1, sk = s1;
    double y = cos_(0) * c1;
    for (Index k = 2; k <= k_max(); ++k) {
        const double cn = ck * c1 - sk * s1;
        const double sn = sk * c1 + ck * s1;
        ck = cn;
        sk = sn;
        y += cos_(k - 1) * ck + sin_(k - 2) * sk;
    }
    return y;
}

double Waveform::eval_closed_form(double t) const {
    if (tag_ == Tag::triangle) {
        // Apex at 0, c_{1,c}=1 scaling: peak value pi^2/8.
        const double w = std::abs(wrap_angle(t));
        return (kPi * kPi / 8.0) * (1.0 - 2.0 * w / kPi);
    }
    // EKG: normalized closed form with the stored shift/scale.
    double u = std::fmod(t + ekg_shift_, kTwoPi);
    if (u < 0) u += kTwoPi;
    return (ekg_raw(u) - ekg_mean_) * ekg_scale_;
}

double Waveform::eval(double t) const {
    if (tag_ == Tag::fourier) return eval_fourier(t);
    return eval_closed_form(t);
}

Vector Waveform::eval(const Vector& t) const {
    Vector out(t.size());
    for (Index i = 0; i < t.size(); ++i) out(i) = eval(t(i));
    return out;
}

Vector Waveform::eval_overtones(const Vector& t) const {
    Vector out(t.size());
    for (Index i = 0; i < t.size(); ++i) out(i) = eval_overtones(t(i));
    return out;
}

double Waveform::rel_l2_distance(const Waveform& a, const Waveform& b, Index n_quad) {
    double num = 0.0, den = 0.0;
    const double h = kTwoPi / static_cast<double>(n_quad);
    for (Index i = 0; i < n_quad; ++i) {
        const double t = static_cast<double>(i) * h;
        const double ya = a.eval(t), yb = b.eval(t);
        num += (ya - yb) * (ya - yb);
        den += yb * yb;
    }
    return std::sqrt(num / den);
}

Waveform make_triangle_waveform(Index k_max) {
    if (k_max < 1) throw SpecInvalid("make_triangle_waveform: k_max >= 1 required");
    Vector c = Vector::Zero(k_max);
    for (Index k = 1; k <= k_max; k += 2) c(k - 1) = 1.0 / static_cast<double>(k * k);
    Waveform w(c, Vector::Zero(std::max<Index>(k_max - 1, 0)), Waveform::Tag::triangle);
    return w;
}

double ekg_raw(double t) {
    // Defined on [0, 2pi): a central spike and two small cos^2 lobes.
    const double d = t - kPi;
    if (std::abs(d) < 0.3) return 0.3 - std::abs(d);
    if (std::abs(d + 1.0) < 0.3) {
        const double c = std::cos((kPi / 0.6) * (d + 1.0));
        return 0.03 * c * c;
    }
    if (std::abs(d - 1.0) < 0.3) {
        const double c = std::cos((kPi / 0.6) * (d - 1.0));
        return 0.03 * c * c;
    }
    return 0.0;
}

Waveform make_ekg_waveform(Index k_max) {
    if (k_max < 1) throw SpecInvalid("make_ekg_waveform: k_max >= 1 required");
    const Index n = 1 << 16;
    const double h = kTwoPi / static_cast<double>(n);

    double mean = 0.0;
    for (Index i = 0; i < n; ++i) mean += ekg_raw(static_cast<double>(i) * h);
    mean /= static_cast<double>(n);

    double norm2 = 0.0;
    for (Index i = 0; i < n; ++i) {
        const double y = ekg_raw(static_cast<double>(i) * h) - mean;
        norm2 += y * y * h;
    }
    const double inv_norm = 1.0 / std::sqrt(norm2);

    // Fourier coefficients of the mean-free, unit-norm waveform.
    Vector ac = Vector::Zero(k_max + 1), as = Vector::Zero(k_max + 1);
    for (Index i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * h;
        const double y = (ekg_raw(t) - mean) * inv_norm;
        for (Index k = 1; k <= k_max; ++k) {
            ac(k) += y * std::cos(k * t);
            as(k) += y * std::sin(k * t);
        }
    }
    ac *= h / kPi;
    as *= h / kPi;

    // Shift t -> t + b so the first sine coefficient vanishes and c_{1,c} > 0,
    // then scale everything by 1/c_{1,c}.
    const double b = std::atan2(as(1), ac(1));
    Vector cc(k_max), cs(std::max<Index>(k_max - 1, 0));
    for (Index k = 1; k <= k_max; ++k) {
        const double cb = std::cos(k * b), sb = std::sin(k * b);
        const double ck = ac(k) * cb + as(k) * sb;
        const double sk = -ac(k) * sb + as(k) * cb;
        cc(k - 1) = ck;
        if (k >= 2) cs(k - 2) = sk;
    }
    const double c1 = cc(0);
    cc /= c1;
    cs /= c1;
    cc(0) = 1.0;

    Waveform w(cc, cs, Waveform::Tag::ekg);
    w.ekg_shift_ = b;
    w.ekg_mean_ = mean;
    w.ekg_scale_ = inv_norm / c1;
    return w;
}

SampledSignal evaluate_mode(const ModeEstimate& m) {
    Vector v(m.mesh.n_points);
    for (Index k = 0; k < m.mesh.n_points; ++k)
        v(k) = m.amplitude(k) * m.waveform.eval(m.phase(k));
    return SampledSignal(m.mesh, std::move(v));
}

Vector savitzky_golay(const Vector& y, Index window, Index order) {
    if (window % 2 == 0 || window < 3) throw SpecInvalid("savitzky_golay: window must be odd >= 3");
    if (order >= window) throw SpecInvalid("savitzky_golay: order must be < window");
    const Index n = y.size();
    if (n < window) return y;

    const Index half = window / 2;
    // Central convolution weights from the pseudo-inverse of the Vandermonde system.
    Matrix V(window, order + 1);
    for (Index i = 0; i < window; ++i) {
        double p = 1.0;
        for (Index j = 0; j <= order; ++j) {
            V(i, j) = p;
            p *= static_cast<double>(i - half);
        }
    }
    const Matrix VtVinv = (V.transpose() * V).ldlt().solve(Matrix::Identity(order + 1, order + 1));
    Vector out(n);
    for (Index i = 0; i < n; ++i) {
        const Index lo = std::max<Index>(0, i - half);
        const Index hi = std::min<Index>(n - 1, i + half);
        if (i - half >= 0 && i + half < n) {
            // interior: evaluate the fit at the window center
            const Vector w = V * (VtVinv * V.row(half).transpose());
            out(i) = w.dot(y.segment(i - half, window));
        } else {
            // boundary: fit over the truncated window, evaluate at i
            const Index m = hi - lo + 1;
            Matrix Vb(m, order + 1);
            for (Index r = 0; r < m; ++r) {
                double p = 1.0;
                for (Index j = 0; j <= order; ++j) {
                    Vb(r, j) = p;
                    p *= static_cast<double>(lo + r - i);
                }
            }
            const Vector coef = (Vb.transpose() * Vb).ldlt().solve(Vb.transpose() * y.segment(lo, m));
            out(i) = coef(0);
        }
    }
    return out;
}

Vector unwrap_phase(const Vector& wrapped) {
    Vector out(wrapped.size());
    if (wrapped.size() == 0) return out;
    out(0) = wrapped(0);
    for (Index k = 1; k < wrapped.size(); ++k)
        out(k) = out(k - 1) + wrap_angle(wrapped(k) - wrapped(k - 1));
    return out;
}

Vector pchip(const Vector& x, const Vector& y, const Vector& xq) {
    const Index n = x.size();
    if (n != y.size() || n < 2) throw SpecInvalid("pchip: need matching x,y with >= 2 samples");

    Vector h(n - 1), delta(n - 1);
    for (Index i = 0; i + 1 < n; ++i) {
        h(i) = x(i + 1) - x(i);
        if (!(h(i) > 0)) throw SpecInvalid("pchip: x must be strictly increasing");
        delta(i) = (y(i + 1) - y(i)) / h(i);
    }

    // Fritsch-Carlson slopes.
    Vector d(n);
    d(0) = delta(0);
    d(n - 1) = delta(n - 2);
    for (Index i = 1; i + 1 < n; ++i) {
        if (delta(i - 1) * delta(i) <= 0.0) {
            d(i) = 0.0;
        } else {
            const double w1 = 2.0 * h(i) + h(i - 1);
            const double w2 = h(i) + 2.0 * h(i - 1);
            d(i) = (w1 + w2) / (w1 / delta(i - 1) + w2 / delta(i));
        }
    }

    Vector out(xq.size());
    for (Index q = 0; q < xq.size(); ++q) {
        const double t = xq(q);
        if (t <= x(0)) {
            out(q) = y(0) + d(0) * (t - x(0));
            continue;
        }
        if (t >= x(n - 1)) {
            out(q) = y(n - 1) + d(n - 1) * (t - x(n - 1));
            continue;
        }
        Index i = static_cast<Index>(
            std::upper_bound(x.data(), x.data() + n, t) - x.data());
        i = std::min(std::max<Index>(i - 1, 0), n - 2);
        const double s = t - x(i);
        const double c2 = (3.0 * delta(i) - 2.0 * d(i) - d(i + 1)) / h(i);
        const double c3 = (d(i) - 2.0 * delta(i) + d(i + 1)) / (h(i) * h(i));
        out(q) = y(i) + s * (d(i) + s * (c2 + s * c3));
    }
    return out;
}

}  // namespace kmd
