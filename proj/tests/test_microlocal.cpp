#include "kmd/microlocal.hpp"
#include "kmd/synth.hpp"

#include <doctest.h>

#include <random>

using namespace kmd;

namespace {

Vector chirp_phase(const TimeMesh& mesh, double w0, double w1) {
    Vector th(mesh.n_points);
    for (Index k = 0; k < mesh.n_points; ++k) {
        const double t = mesh.point(k);
        th(k) = w0 * t + 0.5 * w1 * t * t;
    }
    return th;
}

}  // namespace

TEST_CASE("microlocal_fit exact basis members") {
    const TimeMesh mesh(-1.0, 1.0, 8001);
    const double alpha = 15.0;
    const Vector theta = chirp_phase(mesh, 120.0, 10.0);

    SUBCASE("f = cos(theta) is fit exactly at d = 0") {
        Vector f(mesh.n_points);
        for (Index k = 0; k < mesh.n_points; ++k) f(k) = std::cos(theta(k));
        const MicrolocalFit fit =
            microlocal_fit(0.1, theta, SampledSignal(mesh, f), alpha, 0, 120.0);
        CHECK(fit.a == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(std::abs(fit.dtheta) <= 1e-6);
        CHECK(fit.Z(0) == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(std::abs(fit.Z(1)) <= 1e-6);
    }

    SUBCASE("constant phase shift is recovered") {
        Vector f(mesh.n_points);
        for (Index k = 0; k < mesh.n_points; ++k) f(k) = std::cos(theta(k) + 0.2);
        const MicrolocalFit fit =
            microlocal_fit(0.0, theta, SampledSignal(mesh, f), alpha, 2, 120.0);
        CHECK(fit.dtheta == doctest::Approx(0.2).epsilon(5e-3));
        CHECK(fit.a == doctest::Approx(1.0).epsilon(1e-3));
    }

    SUBCASE("linear amplitude at d = 2 recovers the center value") {
        Vector f(mesh.n_points);
        for (Index k = 0; k < mesh.n_points; ++k)
            f(k) = (2.0 + mesh.point(k)) * std::cos(theta(k));
        const MicrolocalFit fit =
            microlocal_fit(0.0, theta, SampledSignal(mesh, f), alpha, 2, 120.0);
        CHECK(fit.a == doctest::Approx(2.0).epsilon(1e-3));
    }

    SUBCASE("direct windowed least-squares oracle at d = 2") {
        // dense basis construction + normal equations, solved independently
        std::mt19937_64 rng(17);
        std::normal_distribution<double> normal(0.0, 1.0);
        Vector f(mesh.n_points);
        for (Index k = 0; k < mesh.n_points; ++k)
            f(k) = (1.5 + 0.4 * mesh.point(k)) * std::cos(theta(k) + 0.1) +
                   0.05 * normal(rng);
        const double tau = 0.2, ws = 120.0;
        const Index d = 2;

        Matrix B(mesh.n_points, 2 * d + 2);
        Vector w(mesh.n_points);
        for (Index k = 0; k < mesh.n_points; ++k) {
            const double u = mesh.point(k) - tau;
            const double g = std::exp(-(ws * u / alpha) * (ws * u / alpha));
            w(k) = g;
            double p = 1.0;
            for (Index n = 0; n <= d; ++n) {
                B(k, n) = std::cos(theta(k)) * p * g;
                B(k, d + 1 + n) = std::sin(theta(k)) * p * g;
                p *= u;
            }
        }
        const Vector fw = w.cwiseProduct(f);
        const Matrix A = B.transpose() * B;
        const Vector b = B.transpose() * fw;
        const Vector Z_oracle = A.ldlt().solve(b);

        const MicrolocalFit fit = microlocal_fit(tau, theta, SampledSignal(mesh, f), alpha, d, ws);
        // the implementation truncates the window at 6 alpha / ws; the oracle
        // integrates everything, so agreement is to the Gaussian tail
        CHECK((fit.Z - Z_oracle).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("microlocal_fit equivariance and residual orthogonality") {
    const TimeMesh mesh(-1.0, 1.0, 6001);
    const double alpha = 12.0;
    const Vector theta = chirp_phase(mesh, 90.0, 25.0);
    Vector f(mesh.n_points);
    for (Index k = 0; k < mesh.n_points; ++k)
        f(k) = (1.0 + 0.5 * mesh.point(k) * mesh.point(k)) * std::cos(theta(k) + 0.05);

    const MicrolocalFit fit = microlocal_fit(0.3, theta, SampledSignal(mesh, f), alpha, 2, 90.0);

    SUBCASE("scaling f scales Z and a, leaves dtheta") {
        const double lambda = 2.5;
        const MicrolocalFit fit2 =
            microlocal_fit(0.3, theta, SampledSignal(mesh, lambda * f), alpha, 2, 90.0);
        CHECK((fit2.Z - lambda * fit.Z).cwiseAbs().maxCoeff() <= 1e-9 * fit.Z.cwiseAbs().maxCoeff() * lambda);
        CHECK(fit2.a == doctest::Approx(lambda * fit.a).epsilon(1e-10));
        CHECK(fit2.dtheta == doctest::Approx(fit.dtheta).epsilon(1e-10));
    }

    SUBCASE("normal equations: basis orthogonal to the fit residual") {
        const double tau = 0.3, ws = 90.0;
        const Index d = 2;
        Vector w(mesh.n_points), ftau(mesh.n_points);
        Matrix B(mesh.n_points, 2 * d + 2);
        for (Index k = 0; k < mesh.n_points; ++k) {
            const double u = mesh.point(k) - tau;
            const double g = std::exp(-(ws * u / alpha) * (ws * u / alpha));
            // basis truncated like the implementation window
            const double gt = std::abs(u) <= 6.0 * alpha / ws ? g : 0.0;
            w(k) = gt;
            ftau(k) = gt * f(k);
            double p = 1.0;
            for (Index n = 0; n <= d; ++n) {
                B(k, n) = std::cos(theta(k)) * p * gt;
                B(k, d + 1 + n) = std::sin(theta(k)) * p * gt;
                p *= u;
            }
        }
        const Vector resid = ftau - B * fit.Z;
        const Vector g = B.transpose() * resid;
        CHECK(g.cwiseAbs().maxCoeff() <= 1e-8 * ftau.norm());
    }
}

TEST_CASE("microlocal_fit d = 2 reproduces the exact model form") {
    const TimeMesh mesh(-1.0, 1.0, 8001);
    const double alpha = 10.0, ws = 150.0;
    const Vector theta = chirp_phase(mesh, 150.0, -20.0);
    // quadratic amplitude about tau: exact member of the d = 2 model
    const double tau = -0.2;
    Vector f(mesh.n_points);
    for (Index k = 0; k < mesh.n_points; ++k) {
        const double u = mesh.point(k) - tau;
        f(k) = (1.2 + 0.7 * u - 0.9 * u * u) * std::cos(theta(k));
    }
    const MicrolocalFit fit = microlocal_fit(tau, theta, SampledSignal(mesh, f), alpha, 2, ws);
    CHECK(fit.Z(0) == doctest::Approx(1.2).epsilon(1e-8));
    CHECK(fit.Z(1) == doctest::Approx(0.7).epsilon(1e-6));
    CHECK(fit.Z(2) == doctest::Approx(-0.9).epsilon(1e-5));
    CHECK(std::abs(fit.dtheta) <= 1e-8);
}

TEST_CASE("pointwise_amp_phase") {
    const TimeMesh mesh(-1.0, 1.0, 8001);
    const double alpha = 15.0;

    SUBCASE("tone centered at tau has zero local phase") {
        const double tau0 = 0.25;
        Vector v(mesh.n_points);
        for (Index k = 0; k < mesh.n_points; ++k)
            v(k) = 3.0 * std::cos(70.0 * (mesh.point(k) - tau0));
        const MicrolocalFit fit = pointwise_amp_phase(tau0, 70.0, SampledSignal(mesh, v), alpha);
        CHECK(fit.a == doctest::Approx(3.0).epsilon(1e-3));
        CHECK(std::abs(fit.dtheta) <= 1e-3);
    }

    SUBCASE("phase offset is recovered at tau = 0") {
        Vector v(mesh.n_points);
        for (Index k = 0; k < mesh.n_points; ++k) v(k) = 3.0 * std::cos(70.0 * mesh.point(k) + 1.0);
        const MicrolocalFit fit = pointwise_amp_phase(0.0, 70.0, SampledSignal(mesh, v), alpha);
        CHECK(fit.dtheta == doctest::Approx(1.0).epsilon(1e-2));
    }

    SUBCASE("two well-separated tones: the low tone's amplitude comes out") {
        Vector v(mesh.n_points);
        for (Index k = 0; k < mesh.n_points; ++k) {
            const double t = mesh.point(k);
            v(k) = 1.7 * std::cos(60.0 * t + 0.3) + 2.5 * std::cos(160.0 * t - 0.8);
        }
        const MicrolocalFit fit = pointwise_amp_phase(0.1, 60.0, SampledSignal(mesh, v), alpha);
        CHECK(std::abs(fit.a - 1.7) <= 5e-2);
    }
}

TEST_CASE("lowest_frequency") {
    const TimeMesh mesh(-1.0, 1.0, 8001);
    const TFGrid grid = TFGrid::linear(-1.0, 1.0, 201, 30.0, 250.0, 89);
    const double alpha = 15.0;

    SUBCASE("zero signal gives none") {
        CHECK(!lowest_frequency(SampledSignal::zero(mesh), grid, alpha, 0.1).has_value());
    }

    SUBCASE("pure tone crest frequency and phase") {
        Vector v(mesh.n_points);
        for (Index k = 0; k < mesh.n_points; ++k) v(k) = std::cos(60.0 * mesh.point(k));
        const auto lf = lowest_frequency(SampledSignal(mesh, v), grid, alpha, 0.1);
        REQUIRE(lf.has_value());
        const Index lo = mesh.nearest(-0.7), hi = mesh.nearest(0.7);
        for (Index k = lo; k <= hi; k += 40) {
            CHECK(std::abs(lf->omega_low(k) - 60.0) <= 0.6);
            CHECK(std::abs(wrap_angle(lf->theta_low(k) - 60.0 * mesh.point(k))) <= 2e-2);
        }
    }

    SUBCASE("two tones: tracks 60, not 150") {
        Vector v(mesh.n_points);
        for (Index k = 0; k < mesh.n_points; ++k) {
            const double t = mesh.point(k);
            v(k) = std::cos(60.0 * t) + 1.5 * std::cos(150.0 * t);
        }
        const auto lf = lowest_frequency(SampledSignal(mesh, v), grid, alpha, 0.1);
        REQUIRE(lf.has_value());
        const Index mid = mesh.nearest(0.0);
        CHECK(std::abs(lf->omega_low(mid) - 60.0) <= 1.0);
    }
}

TEST_CASE("waveform_coeffs and aggregation") {
    const TimeMesh mesh(-1.0, 1.0, 10001);
    const double alpha = 10.0;

    SUBCASE("pure cosine has no overtones") {
        Vector theta = chirp_phase(mesh, 130.0, 20.0);
        Vector v(mesh.n_points);
        for (Index k = 0; k < mesh.n_points; ++k) v(k) = std::cos(theta(k));
        const CoeffHistogram h =
            waveform_coeffs(theta, SampledSignal(mesh, v), 6, alpha, 8);
        for (Index k = 2; k <= 6; ++k) {
            const auto& cs = h.cos_samples[static_cast<size_t>(k - 2)];
            const auto& ss = h.sin_samples[static_cast<size_t>(k - 2)];
            // interior samples: ignore the window-truncated boundary fifth
            const size_t n = cs.size();
            for (size_t i = n / 5; i < n - n / 5; ++i) {
                CHECK(std::abs(cs[i]) <= 1e-6);
                CHECK(std::abs(ss[i]) <= 1e-6);
            }
        }
    }

    SUBCASE("amplitude-modulated triangle mode recovers c3 = 1/9") {
        const Waveform tri = make_triangle_waveform(15);
        Vector theta = chirp_phase(mesh, 140.0, 15.0);
        Vector v(mesh.n_points);
        for (Index k = 0; k < mesh.n_points; ++k)
            v(k) = (1.5 + 0.3 * mesh.point(k)) * tri.eval(theta(k));
        CoeffHistogram h = waveform_coeffs(theta, SampledSignal(mesh, v), 15, alpha, 8);
        const Waveform learned = aggregate_coeffs(h);
        CHECK(std::abs(learned.cos_coeff(3) - 1.0 / 9.0) <= 0.01);
        CHECK(std::abs(learned.cos_coeff(5) - 1.0 / 25.0) <= 0.01);
        CHECK(std::abs(learned.sin_coeff(3)) <= 0.01);
    }

    SUBCASE("interfering second mode: histogram mean survives, raw values have outliers") {
        const Waveform tri = make_triangle_waveform(15);
        Vector theta = chirp_phase(mesh, 140.0, 15.0);
        Vector v(mesh.n_points);
        for (Index k = 0; k < mesh.n_points; ++k) {
            const double t = mesh.point(k);
            // second mode's base crosses the first mode's third overtone band
            v(k) = 1.5 * tri.eval(theta(k)) + 1.2 * std::cos(410.0 * t + 60.0 * t * t + 0.9);
        }
        CoeffHistogram h = waveform_coeffs(theta, SampledSignal(mesh, v), 15, alpha, 8);
        const auto& c3 = h.cos_samples[1];
        double worst = 0.0;
        for (double x : c3) worst = std::max(worst, std::abs(x - 1.0 / 9.0));
        CHECK(worst > 0.05);  // raw per-tau estimates are corrupted somewhere
        const Waveform learned = aggregate_coeffs(h);
        CHECK(std::abs(learned.cos_coeff(3) - 1.0 / 9.0) <= 0.01);
    }
}

TEST_CASE("aggregate_coeff histogram rules") {
    SUBCASE("constant samples return the constant") {
        std::vector<double> s(50, 0.37);
        CHECK(aggregate_coeff(s, 0.002, 0.05) == doctest::Approx(0.37));
    }

    SUBCASE("dominant cluster wins over scattered outliers") {
        std::vector<double> s;
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> cluster(0.110, 0.112), junk(-3.0, 3.0);
        for (int i = 0; i < 96; ++i) s.push_back(cluster(rng));
        for (int i = 0; i < 4; ++i) s.push_back(junk(rng));
        const double got = aggregate_coeff(s, 0.002, 0.05);
        CHECK(got >= 0.110);
        CHECK(got <= 0.112);
    }

    SUBCASE("uniform scatter yields zero (cutoff not reached)") {
        std::vector<double> s;
        std::mt19937_64 rng(9);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (int i = 0; i < 100; ++i) s.push_back(unif(rng));
        // direct count oracle: no width-0.002 interval holds 5 of 100 samples
        std::vector<double> sorted = s;
        std::sort(sorted.begin(), sorted.end());
        size_t best = 0;
        for (size_t lo = 0; lo < sorted.size(); ++lo) {
            size_t hi = lo;
            while (hi + 1 < sorted.size() && sorted[hi + 1] <= sorted[lo] + 0.002) ++hi;
            best = std::max(best, hi - lo + 1);
        }
        REQUIRE(best < 5);
        CHECK(aggregate_coeff(s, 0.002, 0.05) == 0.0);
    }
}
