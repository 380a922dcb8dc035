#include "kmd/signal.hpp"

#include <doctest.h>

#include <random>

using namespace kmd;

TEST_CASE("mesh basics") {
    TimeMesh mesh(-1.0, 1.0, 10001);
    CHECK(mesh.dt() == doctest::Approx(1.0 / 5000).epsilon(1e-14));
    CHECK(mesh.point(0) == -1.0);
    CHECK(mesh.point(10000) == doctest::Approx(1.0));
    CHECK(mesh.nearest(0.0) == 5000);
    CHECK_THROWS_AS(TimeMesh(0.0, 1.0, 1), SpecInvalid);
    CHECK_THROWS_AS(TimeMesh(1.0, 0.0, 10), SpecInvalid);
}

TEST_CASE("evaluate_mode zero amplitude gives zero signal") {
    TimeMesh mesh(0.0, 1.0, 101);
    ModeEstimate m(mesh, Vector::Zero(101), Vector::LinSpaced(101, 0.0, 50.0),
                   Waveform::cosine());
    CHECK(evaluate_mode(m).values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("evaluate_mode pure tone identity") {
    TimeMesh mesh(0.0, 1.0, 401);
    Vector phase(401);
    for (Index k = 0; k < 401; ++k) phase(k) = 50.0 * mesh.point(k);
    ModeEstimate m(mesh, Vector::Ones(401), phase, Waveform::cosine());
    const SampledSignal s = evaluate_mode(m);
    for (Index k = 0; k < 401; ++k)
        CHECK(s.values(k) == doctest::Approx(std::cos(50.0 * mesh.point(k))).epsilon(1e-14));
}

TEST_CASE("fourier-tagged triangle matches the direct Fourier summation oracle") {
    // Oracle: y(t) = sum over odd k <= k_max of k^-2 cos(k t), the c_1 = 1
    // normalization with all-positive coefficients (apex at t = 0).
    const Index k_max = 15;
    const Waveform tri = make_triangle_waveform(k_max);
    Waveform fourier(tri.cos_coeffs(), tri.sin_coeffs());  // series evaluation only
    TimeMesh mesh(0.0, 1.0, 257);
    for (Index i = 0; i < mesh.n_points; ++i) {
        const double t = 50.0 * mesh.point(i);
        double oracle = 0.0;
        for (Index k = 1; k <= k_max; k += 2)
            oracle += std::cos(static_cast<double>(k) * t) / static_cast<double>(k * k);
        CHECK(fourier.eval(t) == doctest::Approx(oracle).epsilon(1e-12));
    }
}

TEST_CASE("triangle coefficients") {
    const Waveform tri = make_triangle_waveform(15);
    CHECK(tri.cos_coeff(1) == 1.0);
    CHECK(tri.cos_coeff(3) == doctest::Approx(1.0 / 9.0));
    CHECK(tri.cos_coeff(2) == 0.0);
    CHECK(tri.sin_coeff(3) == 0.0);
    // apex/trough symmetry of the closed form
    CHECK(tri.eval(0.0) == doctest::Approx(kPi * kPi / 8.0));
    CHECK(tri.eval(kPi) == doctest::Approx(-kPi * kPi / 8.0));
}

TEST_CASE("triangle truncation error matches the analytic tail bound") {
    const Index k_max = 15;
    const Waveform tri = make_triangle_waveform(k_max);
    double max_err = 0.0;
    for (Index i = 0; i < 4096; ++i) {
        const double t = kTwoPi * static_cast<double>(i) / 4096.0;
        max_err = std::max(max_err, std::abs(tri.eval(t) - tri.eval_fourier(t)));
    }
    double tail = 0.0;
    for (Index k = k_max + 2; k <= 100001; k += 2) tail += 1.0 / static_cast<double>(k) / k;
    CHECK(max_err == doctest::Approx(tail).epsilon(0.1));
}

TEST_CASE("waveforms are 2pi periodic") {
    const Waveform tri = make_triangle_waveform(15);
    const Waveform ekg = make_ekg_waveform(15);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unif(-30.0, 30.0);
    for (int i = 0; i < 1000; ++i) {
        const double t = unif(rng);
        CHECK(std::abs(tri.eval(t) - tri.eval(t + kTwoPi)) <= 1e-12);
        CHECK(std::abs(ekg.eval(t) - ekg.eval(t + kTwoPi)) <= 1e-10);
    }
}

TEST_CASE("ekg waveform construction") {
    // pre-normalization piecewise value at the spike center
    CHECK(ekg_raw(kPi) == doctest::Approx(0.3));

    // the mean-subtracted, L2([0,2pi))-normalized waveform has unit norm
    const Index n = 1 << 16;
    const double h = kTwoPi / static_cast<double>(n);
    double raw_mean = 0.0;
    for (Index i = 0; i < n; ++i) raw_mean += ekg_raw(static_cast<double>(i) * h);
    raw_mean /= static_cast<double>(n);
    double raw_norm2 = 0.0;
    for (Index i = 0; i < n; ++i) {
        const double y = ekg_raw(static_cast<double>(i) * h) - raw_mean;
        raw_norm2 += y * y * h;
    }
    double unit_norm2 = 0.0;
    for (Index i = 0; i < n; ++i) {
        const double y = (ekg_raw(static_cast<double>(i) * h) - raw_mean) / std::sqrt(raw_norm2);
        unit_norm2 += y * y * h;
    }
    CHECK(std::abs(unit_norm2 - 1.0) <= 1e-8);

    const Waveform ekg = make_ekg_waveform(24);

    // mean over one period is zero by construction
    double mean = 0.0, c1 = 0.0, s1 = 0.0;
    for (Index i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * h;
        const double y = ekg.eval(t);
        mean += y;
        c1 += y * std::cos(t) * h;
        s1 += y * std::sin(t) * h;
    }
    mean /= static_cast<double>(n);
    CHECK(std::abs(mean) <= 1e-10);
    // normalization: first cosine coefficient 1, first sine coefficient 0
    CHECK(c1 / kPi == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(std::abs(s1 / kPi) <= 1e-7);

    // the closed form agrees with its own Fourier truncation up to the tail;
    // bound the tail with the k^-2 envelope fitted on the stored coefficients
    // (piecewise-C0 waveform, triangle-kink decay)
    double max_err = 0.0;
    for (Index i = 0; i < 2048; ++i) {
        const double t = kTwoPi * static_cast<double>(i) / 2048;
        max_err = std::max(max_err, std::abs(ekg.eval(t) - ekg.eval_fourier(t)));
    }
    double envelope = 0.0;
    for (Index k = 2; k <= ekg.k_max(); ++k)
        envelope = std::max(envelope, static_cast<double>(k * k) *
                                          std::hypot(ekg.cos_coeff(k), ekg.sin_coeff(k)));
    double tail = 0.0;
    for (Index k = ekg.k_max() + 1; k <= 100000; ++k)
        tail += envelope / static_cast<double>(k) / static_cast<double>(k);
    CHECK(max_err <= tail);
    CHECK(max_err > 0.01 * tail);  // the bound is within two orders of the truth
}

TEST_CASE("mode evaluation is linear in amplitude") {
    TimeMesh mesh(0.0, 1.0, 257);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> unif(0.2, 3.0);
    Vector a(257), th(257);
    for (Index k = 0; k < 257; ++k) {
        a(k) = unif(rng);
        th(k) = 80.0 * mesh.point(k) + 0.3 * std::sin(3.0 * mesh.point(k));
    }
    const Waveform tri = make_triangle_waveform(9);
    const double lambda = 2.75;
    const SampledSignal base = evaluate_mode(ModeEstimate(mesh, a, th, tri));
    const SampledSignal scaled = evaluate_mode(ModeEstimate(mesh, lambda * a, th, tri));
    CHECK((scaled.values - lambda * base.values).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("savitzky-golay preserves polynomials and smooths noise") {
    const Index n = 501;
    Vector t = Vector::LinSpaced(n, -1.0, 1.0);
    Vector poly = 2.0 * t.array().square() - 0.5 * t.array() + 1.0;
    Vector sm = savitzky_golay(poly, 51, 3);
    CHECK((sm - poly).cwiseAbs().maxCoeff() <= 1e-10);

    std::mt19937_64 rng(3);
    std::normal_distribution<double> noise(0.0, 0.1);
    Vector noisy = poly;
    for (Index k = 0; k < n; ++k) noisy(k) += noise(rng);
    Vector den = savitzky_golay(noisy, 51, 3);
    double err_before = (noisy - poly).norm(), err_after = (den - poly).norm();
    CHECK(err_after < 0.5 * err_before);
}

TEST_CASE("unwrap and pchip") {
    Vector wrapped(200), truth(200);
    for (Index k = 0; k < 200; ++k) {
        truth(k) = 0.3 + 0.8 * static_cast<double>(k);
        wrapped(k) = wrap_angle(truth(k));
    }
    Vector un = unwrap_phase(wrapped);
    CHECK((un.tail(199) - un.head(199)).minCoeff() > 0.0);
    CHECK(std::abs(wrap_angle(un(199) - truth(199))) <= 1e-12);

    Vector x = Vector::LinSpaced(21, 0.0, 2.0);
    Vector y = x.array().square();
    Vector xq = Vector::LinSpaced(101, 0.0, 2.0);
    Vector yq = pchip(x, y, xq);
    for (Index k = 0; k < 101; ++k)
        CHECK(yq(k) == doctest::Approx(xq(k) * xq(k)).epsilon(0.02));
}
