#include "kmd/synth.hpp"

#include <algorithm>
#include <limits>
#include <random>

namespace kmd {

namespace {

double smoothstep01(double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    return x * x * (3.0 - 2.0 * x);
}

double eval_poly(const std::vector<double>& p, double t) {
    double acc = 0.0;
    for (size_t k = p.size(); k-- > 0;) acc = acc * t + p[k];
    return acc;
}

}  // namespace

double ModeSpec::amplitude(double t) const {
    double a = eval_poly(amp_poly, t);
    for (const auto& term : amp_cos) a += term.c * std::cos(term.w * t + term.b);
    if (has_cut) {
        const double x = 0.5 + (cut_time - t) / cut_width;
        a *= cut_rising ? 1.0 - smoothstep01(x) : smoothstep01(x);
    }
    return a;
}

double ModeSpec::omega(double t) const { return eval_poly(freq_poly, t); }

double ModeSpec::phase(double t) const {
    double acc = 0.0;
    for (size_t k = freq_poly.size(); k-- > 0;)
        acc = acc * t + freq_poly[k] / static_cast<double>(k + 1);
    return acc * t + phase_offset;
}

Vector gaussian_noise(Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector out(n);
    for (Index k = 0; k < n; ++k) out(k) = normal(rng);
    return out;
}

std::pair<SampledSignal, TruthBundle> gen_multimode(const std::vector<ModeSpec>& specs,
                                                    const TimeMesh& mesh, double noise_sigma,
                                                    std::uint64_t seed) {
    TruthBundle truth;
    truth.specs = specs;
    Vector sum = Vector::Zero(mesh.n_points);
    for (const ModeSpec& s : specs) {
        Vector a(mesh.n_points), th(mesh.n_points);
        for (Index k = 0; k < mesh.n_points; ++k) {
            const double t = mesh.point(k);
            if (!(s.omega(t) > 0)) throw SpecInvalid("gen_multimode: omega <= 0 on the mesh");
            a(k) = s.amplitude(t);
            th(k) = s.phase(t);
        }
        ModeEstimate m(mesh, std::move(a), std::move(th), s.waveform);
        sum += evaluate_mode(m).values;
        truth.modes.push_back(std::move(m));
    }
    truth.clean = SampledSignal(mesh, sum);
    truth.noise = SampledSignal(
        mesh, noise_sigma > 0 ? Vector(noise_sigma * gaussian_noise(mesh.n_points, seed))
                              : Vector(Vector::Zero(mesh.n_points)));
    SampledSignal v(mesh, truth.clean.values + truth.noise.values);
    return {std::move(v), std::move(truth)};
}

KnownExample gen_example_known(std::uint64_t seed) {
    const TimeMesh mesh(0.0, 1.0, 302);
    KnownExample ex;
    ex.theta1.resize(mesh.n_points);
    ex.theta2.resize(mesh.n_points);
    Vector v1(mesh.n_points), v2(mesh.n_points), v3(mesh.n_points);
    for (Index k = 0; k < mesh.n_points; ++k) {
        const double t = mesh.point(k);
        const double th1 = 16.0 * kPi * (t + 0.5 * t * t);
        const double th2 = 30.0 * kPi * (t + t * t * t / 6.0);
        ex.theta1(k) = th1;
        ex.theta2(k) = th2;
        v1(k) = (1.0 + 2.0 * t * t) * std::cos(th1) - 0.5 * t * std::sin(th1);
        v2(k) = 2.0 * (1.0 - t * t * t) * std::cos(th2) + (-t + 0.5 * t * t) * std::sin(th2);
        v3(k) = 2.0 + t - 0.2 * t * t;
    }
    Vector v4 = gaussian_noise(mesh.n_points, seed);
    ex.parts = {SampledSignal(mesh, v1), SampledSignal(mesh, v2), SampledSignal(mesh, v3),
                SampledSignal(mesh, v4)};
    ex.v = SampledSignal(mesh, v1 + v2 + v3 + v4);
    return ex;
}

Waveform gen_random_waveform(std::uint64_t seed, Index k_lo, Index k_hi) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Index k_max = k_hi;
    Vector c = Vector::Zero(k_max), s = Vector::Zero(k_max - 1);
    c(0) = 1.0;
    for (Index k = k_lo; k <= k_hi; ++k) {
        for (int j = 0; j < 2; ++j) {
            const double keep = unif(rng);
            const double z = normal(rng);
            const double val = keep < 0.5 ? 0.0 : z / static_cast<double>(k * k);
            if (j == 0)
                c(k - 1) = val;
            else
                s(k - 2) = val;
        }
    }
    return Waveform(c, s, Waveform::Tag::fourier);
}

namespace {

std::vector<ModeSpec> triangle3_specs(const Waveform& w1, const Waveform& w2, const Waveform& w3) {
    ModeSpec m1, m2, m3;
    m1.amp_poly = {2.0, 0.2};
    m1.amp_cos = {{0.3, 2.0, 0.3}};
    m1.freq_poly = {150.0, 20.0, 10.0};
    m1.phase_offset = 0.5;
    m1.waveform = w1;

    m2.amp_poly = {1.5};
    m2.amp_cos = {{0.4, 1.5, 1.0}};
    m2.freq_poly = {240.0, 30.0};
    m2.phase_offset = -1.2;
    m2.waveform = w2;

    m3.amp_poly = {1.8, -0.15};
    m3.amp_cos = {{0.25, 3.0, 2.0}};
    m3.freq_poly = {355.0, 45.0};
    m3.phase_offset = 2.2;
    m3.waveform = w3;
    return {m1, m2, m3};
}

}  // namespace

Preset make_preset(const std::string& name, Index n_points_override) {
    Preset p;
    p.name = name;
    const Waveform cosine = Waveform::cosine();

    if (name == "three_tf") {
        p.mesh = TimeMesh(0.0, 1.0, n_points_override > 0 ? n_points_override : 1501);
        p.sigma = 0.01;
        p.default_seed = 7;
        ModeSpec m1, m2, m3;
        m1.amp_poly = {1.0, 0.5};
        m1.freq_poly = {50.0, 30.0};
        m1.waveform = cosine;
        m2.amp_poly = {2.0, -1.0, 0.5};
        m2.freq_poly = {120.0, 36.0};
        m2.phase_offset = 0.8;
        m2.waveform = cosine;
        m3.amp_poly = {1.5};
        m3.amp_cos = {{0.3, 4.0, 0.0}};
        m3.freq_poly = {230.0, 46.0};
        m3.phase_offset = -0.4;
        m3.waveform = cosine;
        p.specs = {m1, m2, m3};
        return p;
    }

    if (name == "crossing_tf") {
        p.mesh = TimeMesh(0.0, 1.0, n_points_override > 0 ? n_points_override : 4001);
        p.sigma = 0.01;
        p.default_seed = 11;
        ModeSpec m1, m2, m3;
        m1.amp_poly = {1.0, 0.3};
        m1.freq_poly = {270.0, 250.0};
        m1.waveform = cosine;
        m2.amp_poly = {1.2, -0.2};
        m2.freq_poly = {510.0, -150.0};
        m2.phase_offset = 1.1;
        m2.waveform = cosine;
        m3.amp_poly = {1.3};
        m3.amp_cos = {{0.2, 3.0, 0.0}};
        m3.freq_poly = {750.0, 100.0};
        m3.phase_offset = -2.0;
        m3.waveform = cosine;
        m3.has_cut = true;
        m3.cut_time = 0.3;
        m3.cut_width = 0.05;
        p.specs = {m1, m2, m3};
        return p;
    }

    if (name == "triangle3" || name == "ekg3" || name == "unknown3") {
        p.mesh = TimeMesh(-1.0, 1.0, n_points_override > 0 ? n_points_override : 10001);
        p.sigma = 0.0;
        p.default_seed = 3;
        if (name == "triangle3") {
            const Waveform tri = make_triangle_waveform(15);
            p.specs = triangle3_specs(tri, tri, tri);
        } else if (name == "ekg3") {
            const Waveform ekg = make_ekg_waveform(15);
            p.specs = triangle3_specs(ekg, ekg, ekg);
        } else {
            p.specs = triangle3_specs(make_triangle_waveform(15), gen_random_waveform(101),
                                      gen_random_waveform(202));
        }
        return p;
    }

    if (name == "crossing_noise") {
        p.mesh = TimeMesh(-1.0, 1.0, n_points_override > 0 ? n_points_override : 10001);
        p.sigma = 0.5;
        p.default_seed = 17;
        const Waveform tri = make_triangle_waveform(15);
        ModeSpec m1, m2, m3;
        m1.amp_poly = {0.95};
        m1.amp_cos = {{0.095, 1.3, 0.0}};
        m1.freq_poly = {180.0, 80.0};
        m1.phase_offset = 0.3;
        m1.waveform = tri;
        m2.amp_poly = {1.55};
        m2.amp_cos = {{0.155, 0.9, 1.0}};
        m2.freq_poly = {210.0, -40.0};
        m2.phase_offset = -0.7;
        m2.waveform = tri;
        m3.amp_poly = {2.95};
        m3.amp_cos = {{0.295, 2.0, 0.0}};
        m3.freq_poly = {320.0, 40.0};
        m3.phase_offset = 1.9;
        m3.waveform = tri;
        m3.has_cut = true;
        m3.cut_time = -0.25;
        m3.cut_width = 0.06;
        p.specs = {m1, m2, m3};
        return p;
    }

    if (name == "crossing_vanish_low") {
        p.mesh = TimeMesh(-1.0, 1.0, n_points_override > 0 ? n_points_override : 10001);
        p.sigma = 0.5;
        p.default_seed = 23;
        const Waveform tri = make_triangle_waveform(15);
        ModeSpec m1, m2, m3;
        m1.amp_poly = {1.8};
        m1.amp_cos = {{0.18, 1.0, 0.0}};
        m1.freq_poly = {120.0, 20.0};
        m1.waveform = tri;
        m1.has_cut = true;
        m1.cut_time = -0.25;
        m1.cut_width = 0.06;
        m2.amp_poly = {1.6};
        m2.amp_cos = {{0.16, 1.1, 0.5}};
        m2.freq_poly = {230.0, 80.0};
        m2.phase_offset = 0.9;
        m2.waveform = tri;
        m3.amp_poly = {1.9};
        m3.amp_cos = {{0.19, 0.7, 1.7}};
        m3.freq_poly = {260.0, -40.0};
        m3.phase_offset = -1.4;
        m3.waveform = tri;
        p.specs = {m1, m2, m3};
        return p;
    }

    throw SpecInvalid("make_preset: unknown preset " + name);
}

std::vector<std::string> preset_names() {
    return {"three_tf",  "crossing_tf",    "triangle3",
            "ekg3",      "unknown3",       "crossing_noise",
            "crossing_vanish_low"};
}

HypothesisReport check_hypotheses(const std::vector<ModeSpec>& specs, const TimeMesh& mesh,
                                  double eps, double amp_floor) {
    HypothesisReport rep;
    rep.min_amplitude = std::numeric_limits<double>::infinity();
    rep.min_omega = std::numeric_limits<double>::infinity();
    rep.min_ratio_gap = std::numeric_limits<double>::infinity();
    Index overlap = 0;

    // activity threshold per mode
    std::vector<double> amax(specs.size(), 0.0);
    for (Index k = 0; k < mesh.n_points; ++k)
        for (size_t i = 0; i < specs.size(); ++i)
            amax[i] = std::max(amax[i], std::abs(specs[i].amplitude(mesh.point(k))));

    for (Index k = 0; k < mesh.n_points; ++k) {
        const double t = mesh.point(k);
        bool any_overlap = false;
        for (size_t i = 0; i < specs.size(); ++i) {
            const double a = specs[i].amplitude(t);
            const double w = specs[i].omega(t);
            rep.min_omega = std::min(rep.min_omega, w);
            if (a > 1e-6 * amax[i]) rep.min_amplitude = std::min(rep.min_amplitude, a);
            for (size_t j = i + 1; j < specs.size(); ++j) {
                const bool both_active = a > 1e-6 * amax[i] &&
                                         specs[j].amplitude(t) > 1e-6 * amax[j];
                if (!both_active) continue;
                const double gap = std::abs(std::log(w / specs[j].omega(t)));
                rep.min_ratio_gap = std::min(rep.min_ratio_gap, gap);
                if (gap < std::log(1.0 + eps)) any_overlap = true;
            }
        }
        if (any_overlap) ++overlap;
    }
    rep.overlap_fraction = static_cast<double>(overlap) / static_cast<double>(mesh.n_points);
    rep.separated = rep.min_ratio_gap >= std::log(1.0 + eps) && rep.min_amplitude >= amp_floor &&
                    rep.min_omega > 0;
    return rep;
}

}  // namespace kmd
