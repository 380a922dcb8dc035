#include "kmd/kernels.hpp"

#include <doctest.h>

#include <random>

using namespace kmd;

TEST_CASE("gabor_eval closed form") {
    GaborAtom atom(0.3, 40.0, 0.0, 8.0);
    const double expected = std::pow(2.0 / (kPi * kPi * kPi), 0.25) * std::sqrt(40.0 / 8.0);
    CHECK(gabor_eval(atom, 0.3) == doctest::Approx(expected).epsilon(1e-14));

    atom.theta = kPi / 2.0;
    CHECK(gabor_eval(atom, 0.3) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("gabor normalization integral") {
    // int_{-pi}^{pi} int_R chi^2 dt dtheta = 1 on a wide mesh
    GaborAtom atom(0.0, 30.0, 0.0, 6.0);
    const TimeMesh mesh(-4.0, 4.0, 20001);
    const Index n_theta = 64;
    double acc = 0.0;
    for (Index q = 0; q < n_theta; ++q) {
        atom.theta = -kPi + kTwoPi * (static_cast<double>(q) + 0.5) / n_theta;
        double inner = 0.0;
        for (Index k = 0; k < mesh.n_points; ++k) {
            const double chi = gabor_eval(atom, mesh.point(k));
            inner += chi * chi;
        }
        acc += inner * mesh.dt() * (kTwoPi / n_theta);
    }
    CHECK(acc == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("kernel_tau_omega structure") {
    const TimeMesh mesh(0.0, 1.0, 101);
    const double tau = 0.5, omega = 60.0, alpha = 10.0;
    const KernelMatrix K = kernel_tau_omega(mesh, tau, omega, alpha);

    SUBCASE("diagonal value at the center") {
        const Index kc = mesh.nearest(tau);
        CHECK(K.entries(kc, kc) ==
              doctest::Approx(std::sqrt(2.0 / kPi) * omega / alpha).epsilon(1e-12));
    }

    SUBCASE("theta-quadrature oracle") {
        // K_{tau,omega} = int_{-pi}^{pi} chi_theta(s) chi_theta(t) dtheta by
        // 512-point midpoint quadrature
        Matrix Q = Matrix::Zero(mesh.n_points, mesh.n_points);
        const Index n_theta = 512;
        Vector chi(mesh.n_points);
        for (Index q = 0; q < n_theta; ++q) {
            GaborAtom atom(tau, omega, -kPi + kTwoPi * (static_cast<double>(q) + 0.5) / n_theta,
                           alpha);
            for (Index k = 0; k < mesh.n_points; ++k) chi(k) = gabor_eval(atom, mesh.point(k));
            Q.selfadjointView<Eigen::Lower>().rankUpdate(chi, kTwoPi / n_theta);
        }
        Q.triangularView<Eigen::StrictlyUpper>() = Q.transpose();
        const double scale = K.entries.cwiseAbs().maxCoeff();
        CHECK((Q - K.entries).cwiseAbs().maxCoeff() / scale <= 1e-8);
    }

    SUBCASE("exactly two nonzero eigenvalues") {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(K.entries);
        const double tol = 1e-10 * K.entries.trace();
        Index nonzero = 0;
        for (Index i = 0; i < eig.eigenvalues().size(); ++i)
            if (eig.eigenvalues()(i) > tol) ++nonzero;
        CHECK(nonzero == 2);
    }
}

TEST_CASE("kernel_aggregate additivity and brute-force oracle") {
    const TimeMesh mesh(0.0, 1.0, 10);
    const TFGrid grid = TFGrid::linear(0.0, 1.0, 3, 20.0, 60.0, 3);
    const double alpha = 5.0;

    SUBCASE("empty subset gives the zero matrix") {
        const KernelMatrix K = kernel_aggregate(mesh, grid, alpha, CellSet{});
        CHECK(K.entries.cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("full grid equals subset plus complement") {
        CellSet a = {{0, 0}, {1, 1}, {2, 2}, {0, 2}};
        CellSet b;
        for (Index i = 0; i < 3; ++i)
            for (Index j = 0; j < 3; ++j)
                if (std::find(a.begin(), a.end(), std::make_pair(i, j)) == a.end())
                    b.emplace_back(i, j);
        const KernelMatrix full = kernel_aggregate(mesh, grid, alpha);
        const KernelMatrix Ka = kernel_aggregate(mesh, grid, alpha, a);
        const KernelMatrix Kb = kernel_aggregate(mesh, grid, alpha, b);
        CHECK((full.entries - Ka.entries - Kb.entries).cwiseAbs().maxCoeff() <=
              1e-12 * full.entries.cwiseAbs().maxCoeff());
    }

    SUBCASE("explicit loop oracle over cells") {
        Matrix oracle = Matrix::Zero(10, 10);
        for (Index i = 0; i < 3; ++i)
            for (Index j = 0; j < 3; ++j)
                oracle += grid.cell_weight(i, j) *
                          kernel_tau_omega(mesh, grid.tau_values(i), grid.omega_values(j), alpha)
                              .entries;
        const KernelMatrix K = kernel_aggregate(mesh, grid, alpha);
        CHECK((oracle - K.entries).cwiseAbs().maxCoeff() <=
              1e-12 * oracle.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("kernel_phase") {
    const TimeMesh mesh(0.0, 1.0, 50);
    const double gamma = 0.2;

    SUBCASE("zero phase reduces to the squared-exponential kernel") {
        const KernelMatrix K = kernel_phase(mesh, Vector::Zero(50), gamma);
        for (Index i = 0; i < 50; ++i)
            for (Index j = 0; j < 50; ++j) {
                const double d = mesh.point(i) - mesh.point(j);
                CHECK(K.entries(i, j) ==
                      doctest::Approx(std::exp(-d * d / (gamma * gamma))).epsilon(1e-12));
            }
    }

    SUBCASE("global phase shift leaves the kernel invariant") {
        Vector theta(50);
        for (Index k = 0; k < 50; ++k) theta(k) = 40.0 * mesh.point(k);
        const KernelMatrix K1 = kernel_phase(mesh, theta, gamma);
        const KernelMatrix K2 = kernel_phase(mesh, theta.array() + 1.3, gamma);
        CHECK((K1.entries - K2.entries).cwiseAbs().maxCoeff() <= 1e-12);
    }

    SUBCASE("elementwise formula oracle") {
        Vector theta(50);
        const double omega0 = 55.0;
        for (Index k = 0; k < 50; ++k) theta(k) = omega0 * mesh.point(k);
        const KernelMatrix K = kernel_phase(mesh, theta, gamma);
        for (Index i = 0; i < 50; ++i)
            for (Index j = 0; j < 50; ++j) {
                const double s = mesh.point(i), t = mesh.point(j);
                const double oracle =
                    std::exp(-(s - t) * (s - t) / (gamma * gamma)) *
                    (std::cos(omega0 * s) * std::cos(omega0 * t) +
                     std::sin(omega0 * s) * std::sin(omega0 * t));
                CHECK(K.entries(i, j) == doctest::Approx(oracle).epsilon(1e-12));
            }
    }
}

TEST_CASE("solve_regularized") {
    const TimeMesh mesh(0.0, 1.0, 20);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> normal(0.0, 1.0);

    SUBCASE("zero prior kernel gives f = v / sigma^2") {
        KernelMatrix K(mesh, Matrix::Zero(20, 20));
        Vector v(20);
        for (Index k = 0; k < 20; ++k) v(k) = normal(rng);
        const SampledSignal f = solve_regularized(K, 0.5, SampledSignal(mesh, v));
        CHECK((f.values - v / 0.25).cwiseAbs().maxCoeff() <= 1e-12);
    }

    SUBCASE("zero rhs gives zero") {
        Matrix A(20, 20);
        for (Index i = 0; i < 20; ++i)
            for (Index j = 0; j < 20; ++j) A(i, j) = normal(rng);
        KernelMatrix K(mesh, A * A.transpose());
        const SampledSignal f = solve_regularized(K, 0.3, SampledSignal::zero(mesh));
        CHECK(f.values.cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("matches the explicit dense-inverse oracle") {
        Matrix A(20, 20);
        for (Index i = 0; i < 20; ++i)
            for (Index j = 0; j < 20; ++j) A(i, j) = normal(rng);
        Matrix Ku = A * A.transpose();
        Vector v(20);
        for (Index k = 0; k < 20; ++k) v(k) = normal(rng);
        const double sigma = 0.1;
        Matrix M = Ku + sigma * sigma * Matrix::Identity(20, 20);
        Vector oracle = M.inverse() * v;
        const SampledSignal f =
            solve_regularized(KernelMatrix(mesh, Ku), sigma, SampledSignal(mesh, v));
        CHECK((f.values - oracle).norm() / oracle.norm() <= 1e-9);
    }

    SUBCASE("NonFinite on bad input") {
        KernelMatrix K(mesh, Matrix::Identity(20, 20));
        Vector v = Vector::Zero(20);
        v(3) = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_AS(solve_regularized(K, 0.1, SampledSignal(mesh, v)), NonFinite);
    }

    SUBCASE("NearSingular when sigma = 0 and the kernel is rank deficient") {
        Vector u(20);
        for (Index k = 0; k < 20; ++k) u(k) = normal(rng);
        KernelMatrix K(mesh, u * u.transpose());  // rank 1
        Vector v(20);
        for (Index k = 0; k < 20; ++k) v(k) = normal(rng);
        CHECK_THROWS_AS(solve_regularized(K, 0.0, SampledSignal(mesh, v)), NearSingular);
    }
}

TEST_CASE("assembled kernels are symmetric PSD") {
    const TimeMesh mesh(0.0, 1.0, 60);
    const TFGrid grid = TFGrid::linear(0.0, 1.0, 11, 30.0, 120.0, 11);
    const KernelMatrix K = kernel_aggregate(mesh, grid, 8.0);
    const double scale = K.entries.cwiseAbs().maxCoeff();
    CHECK((K.entries - K.entries.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale);

    std::mt19937_64 rng(13);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double knorm = K.entries.norm();
    for (int trial = 0; trial < 100; ++trial) {
        Vector x(60);
        for (Index k = 0; k < 60; ++k) x(k) = normal(rng);
        CHECK(x.dot(K.entries * x) >= -1e-8 * knorm * x.squaredNorm());
    }
}
