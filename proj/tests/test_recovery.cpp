#include "kmd/recovery.hpp"
#include "kmd/synth.hpp"

#include <doctest.h>

#include <random>

using namespace kmd;

namespace {

Matrix random_psd(Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix A(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) A(i, j) = normal(rng);
    return A * A.transpose() / static_cast<double>(n);
}

Vector random_vec(Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector v(n);
    for (Index k = 0; k < n; ++k) v(k) = normal(rng);
    return v;
}

}  // namespace

TEST_CASE("two identical kernels split the signal evenly") {
    const TimeMesh mesh(0.0, 1.0, 30);
    std::mt19937_64 rng(2);
    Matrix K = random_psd(30, rng) + 0.1 * Matrix::Identity(30, 30);  // nonsingular
    KernelFamily family;
    family.add("a", KernelMatrix(mesh, K));
    family.add("b", KernelMatrix(mesh, K));
    family.sigma = 0.0;
    const Vector v = random_vec(30, rng);
    const Decomposition d = optimal_recover(family, SampledSignal(mesh, v));
    CHECK((d.part("a").values - 0.5 * v).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((d.part("b").values - 0.5 * v).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("single kernel plus noise is the Tikhonov smoother") {
    const TimeMesh mesh(0.0, 1.0, 40);
    std::mt19937_64 rng(4);
    Matrix Ku = random_psd(40, rng);
    const double sigma = 0.3;
    KernelFamily family;
    family.add("u", KernelMatrix(mesh, Ku));
    family.sigma = sigma;
    const Vector v = random_vec(40, rng);
    const Decomposition d = optimal_recover(family, SampledSignal(mesh, v));
    const Vector oracle =
        Ku * (Ku + sigma * sigma * Matrix::Identity(40, 40)).inverse() * v;
    CHECK((d.part("u").values - oracle).norm() / oracle.norm() <= 1e-10);
}

TEST_CASE("exact reconstruction and scaling equivariance") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        const Index n = 20 + 10 * (trial % 4);
        const TimeMesh mesh(0.0, 1.0, n);
        KernelFamily family;
        const int m = 2 + trial % 3;
        for (int i = 0; i < m; ++i)
            family.add("k" + std::to_string(i), KernelMatrix(mesh, random_psd(n, rng)));
        family.sigma = 0.15;
        const Vector v = random_vec(n, rng);
        const Decomposition d = optimal_recover(family, SampledSignal(mesh, v));

        Vector recon = family.sigma * family.sigma * d.representer.values;
        for (const auto& part : d.parts) recon += part.values;
        CHECK((recon - v).norm() / v.norm() <= 1e-10);

        // energies are nonnegative and conserve the total
        for (Index i = 0; i < d.energies.size(); ++i) CHECK(d.energies(i) >= -1e-10);
        const ConservationReport rep =
            energy_conservation_report(family, SampledSignal(mesh, v), d);
        CHECK(rep.gap <= 1e-10);

        // scaling equivariance
        const double lambda = 3.7;
        const Decomposition d2 = optimal_recover(family, SampledSignal(mesh, lambda * v));
        for (size_t i = 0; i < d.parts.size(); ++i)
            CHECK((d2.parts[i].values - lambda * d.parts[i].values).norm() <=
                  1e-9 * lambda * v.norm());
    }
}

TEST_CASE("aggregation consistency: split family vs merged kernel") {
    const TimeMesh mesh(0.0, 1.0, 35);
    std::mt19937_64 rng(8);
    Matrix Ka = random_psd(35, rng), Kb = random_psd(35, rng);
    const Vector v = random_vec(35, rng);

    KernelFamily split;
    split.add("a", KernelMatrix(mesh, Ka));
    split.add("b", KernelMatrix(mesh, Kb));
    split.sigma = 0.2;
    KernelFamily merged;
    merged.add("ab", KernelMatrix(mesh, Ka + Kb));
    merged.sigma = 0.2;

    const Decomposition ds = optimal_recover(split, SampledSignal(mesh, v));
    const Decomposition dm = optimal_recover(merged, SampledSignal(mesh, v));
    CHECK((ds.part("a").values + ds.part("b").values - dm.part("ab").values)
              .cwiseAbs()
              .maxCoeff() <= 1e-10 * v.norm());
}

TEST_CASE("four-kernel additive example recovers the trend mode") {
    // Regenerated from closed forms; w3 must track v3 = 2 + t - 0.2 t^2.
    const KnownExample ex = gen_example_known(42);
    const TimeMesh& mesh = ex.v.mesh;
    const double gamma = 0.2;

    KernelFamily family;
    family.add("mode1", kernel_phase(mesh, ex.theta1, gamma));
    family.add("mode2", kernel_phase(mesh, ex.theta2, gamma));
    Matrix K3(mesh.n_points, mesh.n_points);
    for (Index i = 0; i < mesh.n_points; ++i)
        for (Index j = 0; j < mesh.n_points; ++j) {
            const double s = mesh.point(i), t = mesh.point(j);
            K3(i, j) = 1.0 + s * t + std::exp(-(s - t) * (s - t) / 4.0);
        }
    family.add("trend", KernelMatrix(mesh, K3));
    family.sigma = 1.0;  // v4 is unit white noise

    const Decomposition d = optimal_recover(family, ex.v);
    const Vector& w3 = d.part("trend").values;
    CHECK((w3 - ex.parts[2].values).norm() / ex.parts[2].values.norm() <= 0.05);

    // independent conditional-mean oracle from explicit block matrices
    Matrix S = family.kernels[0].entries + family.kernels[1].entries + family.kernels[2].entries +
               Matrix::Identity(mesh.n_points, mesh.n_points);
    Eigen::FullPivLU<Matrix> lu(S);
    for (int i = 0; i < 3; ++i) {
        const Vector oracle = family.kernels[i].entries * lu.solve(ex.v.values);
        CHECK((d.parts[i].values - oracle).norm() / (oracle.norm() + 1e-300) <= 1e-9);
    }
}

TEST_CASE("mode_energy_grid") {
    const TimeMesh mesh(0.0, 1.0, 1001);
    const TFGrid grid = TFGrid::linear(0.0, 1.0, 41, 40.0, 200.0, 81);
    const double alpha = 10.0;

    SUBCASE("zero signal gives the zero map") {
        const EnergyMap E = mode_energy_grid(SampledSignal::zero(mesh), grid, alpha);
        CHECK(E.values.cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("pure tone peaks at its frequency") {
        Vector v(mesh.n_points);
        for (Index k = 0; k < mesh.n_points; ++k) v(k) = std::cos(100.0 * mesh.point(k));
        KernelMatrix Ku = kernel_aggregate(mesh, grid, alpha);
        const SampledSignal f = solve_regularized(Ku, 0.01, SampledSignal(mesh, v));
        const EnergyMap E = mode_energy_grid(f, grid, alpha);
        // brute-force grid scan at tau = 0.5
        const Index i_mid = grid.n_tau() / 2;
        Index best = 0;
        for (Index j = 0; j < grid.n_omega(); ++j)
            if (E.values(i_mid, j) > E.values(i_mid, best)) best = j;
        CHECK(std::abs(grid.omega_values(best) - 100.0) <=
              grid.omega_values(1) - grid.omega_values(0) + 1e-12);
    }
}

TEST_CASE("grid energy conservation on a small pipeline") {
    const TimeMesh mesh(0.0, 1.0, 120);
    const TFGrid grid = TFGrid::linear(0.0, 1.0, 15, 30.0, 90.0, 15);
    const double alpha = 6.0, sigma = 0.2;
    std::mt19937_64 rng(21);
    const Vector v = random_vec(mesh.n_points, rng);
    KernelMatrix Ku = kernel_aggregate(mesh, grid, alpha);
    const SampledSignal f = solve_regularized(Ku, sigma, SampledSignal(mesh, v));
    const ConservationReport rep =
        energy_conservation_report(SampledSignal(mesh, v), f, grid, alpha, sigma);
    CHECK(rep.gap <= 1e-10);
}

TEST_CASE("l2_energy") {
    const TimeMesh mesh(-1.0, 1.0, 4001);
    const GaborAtom atom(0.0, 80.0, 0.4, 12.0);

    SUBCASE("zero signal") {
        CHECK(l2_energy(SampledSignal::zero(mesh), atom, 6.0) == 0.0);
    }

    SUBCASE("self-alignment equals the squared norm squared") {
        Vector chi(mesh.n_points);
        for (Index k = 0; k < mesh.n_points; ++k) chi(k) = gabor_eval(atom, mesh.point(k));
        const double norm2 = chi.squaredNorm() * mesh.dt();
        const double e = l2_energy(SampledSignal(mesh, chi), atom, 40.0);
        CHECK(e == doctest::Approx(norm2 * norm2).epsilon(1e-10));
    }

    SUBCASE("window 6 vs full window on a pure tone") {
        Vector v(mesh.n_points);
        for (Index k = 0; k < mesh.n_points; ++k) v(k) = std::cos(80.0 * mesh.point(k));
        const double e6 = l2_energy(SampledSignal(mesh, v), atom, 6.0);
        const double efull = l2_energy(SampledSignal(mesh, v), atom, 1e9);
        CHECK(std::abs(e6 - efull) / efull <= 1e-6);
    }
}
