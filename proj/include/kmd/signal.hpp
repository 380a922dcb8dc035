#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace kmd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kTwoPi = 2.0 * kPi;

struct NonFinite : std::runtime_error {
    explicit NonFinite(const std::string& what) : std::runtime_error(what) {}
};
struct NearSingular : std::runtime_error {
    explicit NearSingular(const std::string& what) : std::runtime_error(what) {}
};
struct IllConditioned : std::runtime_error {
    explicit IllConditioned(const std::string& what) : std::runtime_error(what) {}
};
struct NoRidge : std::runtime_error {
    explicit NoRidge(const std::string& what) : std::runtime_error(what) {}
};
struct NoModes : std::runtime_error {
    explicit NoModes(const std::string& what) : std::runtime_error(what) {}
};
struct SpecInvalid : std::runtime_error {
    explicit SpecInvalid(const std::string& what) : std::runtime_error(what) {}
};

/// Wrap an angle to (-pi, pi].
inline double wrap_angle(double a) {
    a = std::remainder(a, kTwoPi);
    if (a <= -kPi) a += kTwoPi;
    return a;
}

/// Uniform time mesh t_k = t_start + k*dt, k = 0..n_points-1.
struct TimeMesh {
    double t_start = 0.0;
    double t_end = 1.0;
    Index n_points = 2;

    TimeMesh() = default;
    TimeMesh(double a, double b, Index n) : t_start(a), t_end(b), n_points(n) {
        if (n_points < 2) throw SpecInvalid("TimeMesh: n_points must be >= 2");
        if (!(t_end > t_start)) throw SpecInvalid("TimeMesh: t_end must exceed t_start");
    }

    double dt() const { return (t_end - t_start) / static_cast<double>(n_points - 1); }
    double point(Index k) const { return t_start + static_cast<double>(k) * dt(); }
    Vector points() const { return Vector::LinSpaced(n_points, t_start, t_end); }

    /// Index of the mesh point closest to t, clamped to the mesh.
    Index nearest(double t) const {
        double x = std::round((t - t_start) / dt());
        if (x < 0) x = 0;
        if (x > static_cast<double>(n_points - 1)) x = static_cast<double>(n_points - 1);
        return static_cast<Index>(x);
    }

    bool operator==(const TimeMesh& o) const {
        return t_start == o.t_start && t_end == o.t_end && n_points == o.n_points;
    }
};

/// Real values sampled on a uniform mesh. The observation v, residuals, and
/// recovered parts all live here.
struct SampledSignal {
    TimeMesh mesh;
    Vector values;

    SampledSignal() = default;
    SampledSignal(TimeMesh m, Vector v) : mesh(m), values(std::move(v)) {
        if (values.size() != mesh.n_points)
            throw SpecInvalid("SampledSignal: values length must equal mesh.n_points");
    }

    static SampledSignal zero(TimeMesh m) { return SampledSignal(m, Vector::Zero(m.n_points)); }

    bool all_finite() const { return values.allFinite(); }
};

/// 2*pi-periodic base waveform y(t) = c_{1,c} cos t + sum_{k>=2} c_{k,c} cos kt + c_{k,s} sin kt,
/// scaled and shifted so c_{1,c} = 1 and c_{1,s} = 0. Triangle and EKG waveforms keep a
/// closed-form evaluator; generic ones evaluate the truncated Fourier series.
class Waveform {
  public:
    enum class Tag { fourier, triangle, ekg };

    Waveform() : Waveform(cosine()) {}
    Waveform(Vector cos_coeffs, Vector sin_coeffs, Tag tag = Tag::fourier);

    /// Pure cosine: no overtones.
    static Waveform cosine();

    Tag tag() const { return tag_; }
    Index k_max() const { return cos_.size(); }
    /// c_{k,c}; k in 1..k_max.
    double cos_coeff(Index k) const { return cos_(k - 1); }
    /// c_{k,s}; k in 2..k_max (c_{1,s} = 0 by normalization).
    double sin_coeff(Index k) const { return k >= 2 ? sin_(k - 2) : 0.0; }
    const Vector& cos_coeffs() const { return cos_; }
    const Vector& sin_coeffs() const { return sin_; }

    double eval(double t) const;
    /// Overtone part ybar(t) = y(t) - c_{1,c} cos(t).
    double eval_overtones(double t) const { return eval(t) - cos_(0) * std::cos(t); }

    Vector eval(const Vector& t) const;
    Vector eval_overtones(const Vector& t) const;

    /// Fourier-series value truncated at k_max, regardless of tag.
    double eval_fourier(double t) const;

    /// Relative L2([0,2pi)) distance between two waveforms, by quadrature.
    static double rel_l2_distance(const Waveform& a, const Waveform& b, Index n_quad = 1 << 14);

  private:
    Vector cos_;  // k = 1..k_max
    Vector sin_;  // k = 2..k_max
    Tag tag_ = Tag::fourier;
    // Closed-form EKG evaluation state: y(t) = (ekg_raw(t + shift) - mean) * scale.
    double ekg_shift_ = 0.0;
    double ekg_mean_ = 0.0;
    double ekg_scale_ = 1.0;

    friend Waveform make_triangle_waveform(Index);
    friend Waveform make_ekg_waveform(Index);
    double eval_closed_form(double t) const;
};

/// Triangle wave with apex at t = 0, normalized so c_{1,c} = 1: the surviving
/// coefficients are c_{k,c} = 1/k^2 for odd k.
Waveform make_triangle_waveform(Index k_max = 15);

/// EKG-like waveform: piecewise definition on [0,2pi), mean-subtracted,
/// L2([0,2pi))-normalized, then shifted/scaled so c_{1,s} = 0 and c_{1,c} = 1.
Waveform make_ekg_waveform(Index k_max = 15);

/// Raw EKG bump shape before normalization (0.3 - |t-pi| spike plus two cos^2 side lobes).
double ekg_raw(double t);

/// One recovered (or true) mode: v(t_k) = amplitude[k] * y(phase[k]).
struct ModeEstimate {
    TimeMesh mesh;
    Vector amplitude;
    Vector phase;
    Waveform waveform;

    ModeEstimate() = default;
    ModeEstimate(TimeMesh m, Vector a, Vector th, Waveform w)
        : mesh(m), amplitude(std::move(a)), phase(std::move(th)), waveform(std::move(w)) {
        if (amplitude.size() != mesh.n_points || phase.size() != mesh.n_points)
            throw SpecInvalid("ModeEstimate: amplitude/phase length mismatch");
    }
};

SampledSignal evaluate_mode(const ModeEstimate& m);

/// Savitzky-Golay smoothing (least-squares local polynomial). Window must be odd.
Vector savitzky_golay(const Vector& y, Index window, Index order);

/// Unwrap a sequence of angles: cumulative sum of wrapped increments,
/// anchored at the first element.
Vector unwrap_phase(const Vector& wrapped);

/// Monotone (Fritsch-Carlson) piecewise-cubic interpolation of (x,y) samples,
/// evaluated at xq. x must be strictly increasing.
Vector pchip(const Vector& x, const Vector& y, const Vector& xq);

}  // namespace kmd
