#include "kmd/kernels.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>

namespace kmd {

namespace {
const double kGaborNorm3 = std::pow(2.0 / (kPi * kPi * kPi), 0.25);
const double kGaborNorm1 = std::pow(2.0 / kPi, 0.25);
}  // namespace

double gabor_eval(const GaborAtom& atom, double t) {
    const double u = t - atom.tau;
    const double g = std::exp(-atom.omega * atom.omega * u * u / (atom.alpha * atom.alpha));
    return kGaborNorm3 * std::sqrt(atom.omega / atom.alpha) * std::cos(atom.omega * u + atom.theta) * g;
}

void gabor_pair(const TimeMesh& mesh, double tau, double omega, double alpha, Vector& chi_c,
                Vector& chi_s) {
    const Index n = mesh.n_points;
    chi_c.resize(n);
    chi_s.resize(n);
    const double amp = kGaborNorm1 * std::sqrt(omega / alpha);
    const double w2a2 = omega * omega / (alpha * alpha);
    for (Index k = 0; k < n; ++k) {
        const double u = mesh.point(k) - tau;
        const double g = amp * std::exp(-w2a2 * u * u);
        chi_c(k) = g * std::cos(omega * u);
        chi_s(k) = g * std::sin(omega * u);
    }
}

TFGrid TFGrid::linear(double tau0, double tau1, Index n_tau, double omega_min, double omega_max,
                      Index n_omega) {
    if (!(omega_min > 0) || !(omega_max > omega_min) || n_tau < 2 || n_omega < 2)
        throw SpecInvalid("TFGrid: need omega_max > omega_min > 0 and >= 2 nodes per axis");
    TFGrid g;
    g.tau_values = Vector::LinSpaced(n_tau, tau0, tau1);
    g.omega_values = Vector::LinSpaced(n_omega, omega_min, omega_max);
    return g;
}

TFGrid TFGrid::logarithmic(double tau0, double tau1, Index n_tau, double omega_min,
                           double omega_max, Index n_omega) {
    TFGrid g = linear(tau0, tau1, n_tau, omega_min, omega_max, n_omega);
    g.omega_values =
        Vector::LinSpaced(n_omega, std::log(omega_min), std::log(omega_max)).array().exp();
    g.log_omega = true;
    return g;
}

double TFGrid::tau_weight(Index i) const {
    const double d = dtau();
    return (i == 0 || i == n_tau() - 1) ? 0.5 * d : d;
}

double TFGrid::omega_weight(Index j) const {
    const Index n = n_omega();
    if (!log_omega) {
        const double d = omega_values(1) - omega_values(0);
        return (j == 0 || j == n - 1) ? 0.5 * d : d;
    }
    // trapezoid weights on the non-uniform (log) ladder
    if (j == 0) return 0.5 * (omega_values(1) - omega_values(0));
    if (j == n - 1) return 0.5 * (omega_values(n - 1) - omega_values(n - 2));
    return 0.5 * (omega_values(j + 1) - omega_values(j - 1));
}

Index TFGrid::omega_bin(double omega) const {
    const Index n = n_omega();
    if (omega <= omega_values(0)) return 0;
    if (omega >= omega_values(n - 1)) return n - 1;
    if (!log_omega) {
        const double d = omega_values(1) - omega_values(0);
        return static_cast<Index>(std::lround((omega - omega_values(0)) / d));
    }
    Index best = 0;
    double bd = std::abs(omega - omega_values(0));
    for (Index j = 1; j < n; ++j) {
        const double dj = std::abs(omega - omega_values(j));
        if (dj < bd) {
            bd = dj;
            best = j;
        }
    }
    return best;
}

KernelMatrix kernel_tau_omega(const TimeMesh& mesh, double tau, double omega, double alpha) {
    if (!(omega > 0)) throw SpecInvalid("kernel_tau_omega: omega must be > 0");
    Vector chi_c, chi_s;
    gabor_pair(mesh, tau, omega, alpha, chi_c, chi_s);
    Matrix K = chi_c * chi_c.transpose();
    K.noalias() += chi_s * chi_s.transpose();
    return KernelMatrix(mesh, std::move(K), 1.0);
}

KernelMatrix kernel_aggregate(const TimeMesh& mesh, const TFGrid& grid, double alpha,
                              const std::optional<CellSet>& subset) {
    const Index n = mesh.n_points;
    Matrix K = Matrix::Zero(n, n);

    // Collect the scaled wavelet columns in deterministic (tau-major) order and
    // accumulate rank updates in blocks.
    CellSet cells;
    if (subset) {
        cells = *subset;
        std::sort(cells.begin(), cells.end());
    } else {
        cells.reserve(static_cast<size_t>(grid.n_tau() * grid.n_omega()));
        for (Index i = 0; i < grid.n_tau(); ++i)
            for (Index j = 0; j < grid.n_omega(); ++j) cells.emplace_back(i, j);
    }
    if (cells.empty()) return KernelMatrix(mesh, std::move(K), 1.0);

    const Index block = 512;
    Matrix X(n, std::min<Index>(block, 2 * static_cast<Index>(cells.size())));
    Index col = 0;
    Vector chi_c, chi_s;
    for (const auto& [i, j] : cells) {
        if (i < 0 || i >= grid.n_tau() || j < 0 || j >= grid.n_omega())
            throw SpecInvalid("kernel_aggregate: cell outside grid");
        const double w = std::sqrt(grid.cell_weight(i, j));
        gabor_pair(mesh, grid.tau_values(i), grid.omega_values(j), alpha, chi_c, chi_s);
        X.col(col++) = w * chi_c;
        X.col(col++) = w * chi_s;
        if (col == X.cols()) {
            K.selfadjointView<Eigen::Lower>().rankUpdate(X.leftCols(col));
            col = 0;
        }
    }
    if (col > 0) K.selfadjointView<Eigen::Lower>().rankUpdate(X.leftCols(col));
    K.triangularView<Eigen::StrictlyUpper>() = K.transpose();
    return KernelMatrix(mesh, std::move(K), 1.0);
}

KernelMatrix kernel_phase(const TimeMesh& mesh, const Vector& theta_e, double gamma) {
    if (theta_e.size() != mesh.n_points)
        throw SpecInvalid("kernel_phase: theta_e length must equal mesh.n_points");
    if (!(gamma > 0)) throw SpecInvalid("kernel_phase: gamma must be > 0");
    const Index n = mesh.n_points;
    Matrix K(n, n);
    const double inv_g2 = 1.0 / (gamma * gamma);
    for (Index j = 0; j < n; ++j) {
        const double tj = mesh.point(j);
        for (Index i = j; i < n; ++i) {
            const double d = mesh.point(i) - tj;
            K(i, j) = std::exp(-d * d * inv_g2) * std::cos(theta_e(i) - theta_e(j));
        }
    }
    K.triangularView<Eigen::StrictlyUpper>() = K.transpose();
    return KernelMatrix(mesh, std::move(K), 1.0);
}

SampledSignal solve_regularized(const KernelMatrix& K_u, double sigma, const SampledSignal& v) {
    if (!v.all_finite()) throw NonFinite("solve_regularized: v contains NaN/Inf");
    if (K_u.n() != v.values.size())
        throw SpecInvalid("solve_regularized: dimension mismatch");
    const Index n = K_u.n();

    if (sigma > 0) {
        Matrix K = K_u.entries;
        K.diagonal().array() += sigma * sigma;
        Eigen::LLT<Matrix> llt(K);
        if (llt.info() == Eigen::Success) {
            Vector f = llt.solve(v.values);
            // one refinement step keeps the residual near machine precision
            f += llt.solve(v.values - K * f);
            return SampledSignal(v.mesh, std::move(f));
        }
        // PSD check failed beyond tolerance: pivoted fallback
        Eigen::LDLT<Matrix> ldlt(K);
        Vector f = ldlt.solve(v.values);
        f += ldlt.solve(v.values - K * f);
        return SampledSignal(v.mesh, std::move(f));
    }

    // sigma = 0: spectral pseudo-inverse with relative cutoff.
    Eigen::SelfAdjointEigenSolver<Matrix> eig(K_u.entries);
    const Vector& lam = eig.eigenvalues();
    const double lmax = lam(n - 1);
    if (!(lmax > 0)) throw NearSingular("solve_regularized: kernel is numerically zero");
    const double lmin = lam(0);
    if (!(lmin > 0) || lmax / lmin > 1e14)
        throw NearSingular("solve_regularized: sigma = 0 and condition estimate exceeds 1e14");
    const double cutoff = 1e-12 * lmax;
    Vector proj = eig.eigenvectors().transpose() * v.values;
    for (Index i = 0; i < n; ++i) proj(i) = lam(i) > cutoff ? proj(i) / lam(i) : 0.0;
    return SampledSignal(v.mesh, eig.eigenvectors() * proj);
}

}  // namespace kmd
