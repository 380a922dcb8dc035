#include "kmd/synth.hpp"

#include <doctest.h>

using namespace kmd;

TEST_CASE("gen_example_known closed forms") {
    const KnownExample ex = gen_example_known(1);
    CHECK(ex.v.mesh.n_points == 302);
    // v3(0) = 2
    CHECK(ex.parts[2].values(0) == doctest::Approx(2.0));
    // theta1(1) = 24 pi by exact integration
    CHECK(ex.theta1(301) == doctest::Approx(24.0 * kPi).epsilon(1e-12));
    // v is the exact sum of its parts
    Vector sum = ex.parts[0].values + ex.parts[1].values + ex.parts[2].values +
                 ex.parts[3].values;
    CHECK((sum - ex.v.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gen_multimode") {
    SUBCASE("empty specs with no noise gives the zero signal") {
        const TimeMesh mesh(0.0, 1.0, 100);
        auto [v, truth] = gen_multimode({}, mesh, 0.0, 5);
        CHECK(v.values.cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("negative frequency is rejected") {
        ModeSpec bad;
        bad.amp_poly = {1.0};
        bad.freq_poly = {10.0, -40.0};  // goes negative on [0,1]
        bad.waveform = Waveform::cosine();
        const TimeMesh mesh(0.0, 1.0, 64);
        CHECK_THROWS_AS(gen_multimode({bad}, mesh, 0.0, 1), SpecInvalid);
    }

    SUBCASE("truth reconstructs the clean signal exactly") {
        const Preset p = make_preset("triangle3", 2001);
        auto [v, truth] = gen_multimode(p.specs, p.mesh, 0.0, 1);
        Vector sum = Vector::Zero(p.mesh.n_points);
        for (const ModeEstimate& m : truth.modes) sum += evaluate_mode(m).values;
        CHECK((sum - v.values).cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("triangle3 passes the separation hypothesis checker") {
        const Preset p = make_preset("triangle3", 2001);
        const HypothesisReport rep = check_hypotheses(p.specs, p.mesh, 0.4, 1e-3);
        CHECK(rep.separated);
        CHECK(rep.min_ratio_gap >= std::log(1.4));
        CHECK(rep.min_omega > 0);
    }

    SUBCASE("crossing_noise preset matches the documented SNR") {
        const Preset p = make_preset("crossing_noise");
        auto [v, truth] = gen_multimode(p.specs, p.mesh, p.sigma, p.default_seed);
        auto variance = [](const Vector& x) {
            const double mean = x.sum() / static_cast<double>(x.size());
            return (x.array() - mean).square().sum() / static_cast<double>(x.size());
        };
        const double snr = variance(truth.clean.values) / variance(truth.noise.values);
        CHECK(snr >= 13.1 - 1.5);
        CHECK(snr <= 13.1 + 1.5);
        // crossing pair crosses near t = 0.25; the high mode vanishes after -0.25
        const double w1 = truth.specs[0].omega(0.25), w2 = truth.specs[1].omega(0.25);
        CHECK(w1 == doctest::Approx(w2));
        CHECK(truth.specs[2].amplitude(0.0) == doctest::Approx(0.0));
        CHECK(truth.specs[2].amplitude(-0.5) > 1.0);
    }
}

TEST_CASE("gen_random_waveform") {
    SUBCASE("normalization and determinism") {
        const Waveform w1 = gen_random_waveform(77);
        const Waveform w2 = gen_random_waveform(77);
        CHECK(w1.cos_coeff(1) == 1.0);
        CHECK((w1.cos_coeffs() - w2.cos_coeffs()).cwiseAbs().maxCoeff() == 0.0);
        CHECK((w1.sin_coeffs() - w2.sin_coeffs()).cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("second moment matches the recipe over many seeds") {
        // E|c_{k,j}|^2 = (1/2) k^-4
        const Index n_seeds = 10000;
        Vector acc_c = Vector::Zero(6), acc_s = Vector::Zero(6);  // k = 2..7
        for (Index s = 0; s < n_seeds; ++s) {
            const Waveform w = gen_random_waveform(static_cast<std::uint64_t>(s));
            for (Index k = 2; k <= 7; ++k) {
                acc_c(k - 2) += w.cos_coeff(k) * w.cos_coeff(k);
                acc_s(k - 2) += w.sin_coeff(k) * w.sin_coeff(k);
            }
        }
        for (Index k = 2; k <= 7; ++k) {
            const double expected = 0.5 / std::pow(static_cast<double>(k), 4.0);
            CHECK(acc_c(k - 2) / n_seeds == doctest::Approx(expected).epsilon(0.05));
            CHECK(acc_s(k - 2) / n_seeds == doctest::Approx(expected).epsilon(0.05));
        }
    }
}

TEST_CASE("presets are listed and constructible") {
    for (const std::string& name : preset_names()) {
        const Preset p = make_preset(name, 501);
        CHECK(p.mesh.n_points == 501);
        CHECK(!p.specs.empty());
        auto [v, truth] = gen_multimode(p.specs, p.mesh, p.sigma, p.default_seed);
        CHECK(v.all_finite());
    }
    CHECK_THROWS_AS(make_preset("no_such_preset"), SpecInvalid);
}
