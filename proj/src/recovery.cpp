#include "kmd/recovery.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

#include <algorithm>

namespace kmd {

void KernelFamily::add(std::string label, KernelMatrix K) {
    for (const auto& l : labels)
        if (l == label) throw SpecInvalid("KernelFamily: duplicate label " + label);
    if (!kernels.empty() && !(K.mesh == mesh()))
        throw SpecInvalid("KernelFamily: kernels must share one mesh");
    labels.push_back(std::move(label));
    kernels.push_back(std::move(K));
}

const SampledSignal& Decomposition::part(const std::string& label) const {
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) return parts[i];
    throw SpecInvalid("Decomposition: unknown label " + label);
}

Decomposition optimal_recover(const KernelFamily& family, const SampledSignal& v) {
    if (family.size() == 0) throw SpecInvalid("optimal_recover: empty family");
    if (!(family.mesh() == v.mesh)) throw SpecInvalid("optimal_recover: mesh mismatch");

    KernelMatrix S(family.mesh(), family.kernels[0].entries, 1.0);
    for (Index i = 1; i < family.size(); ++i) S.entries += family.kernels[i].entries;

    SampledSignal f = solve_regularized(S, family.sigma, v);

    Decomposition d;
    d.labels = family.labels;
    d.representer = f;
    d.energies.resize(family.size());
    d.parts.reserve(family.labels.size());
    for (Index i = 0; i < family.size(); ++i) {
        Vector wi = family.kernels[i].entries * f.values;
        d.energies(i) = f.values.dot(wi);
        d.parts.emplace_back(v.mesh, std::move(wi));
    }
    d.noise_energy = family.sigma * family.sigma * f.values.squaredNorm();
    d.total_energy = v.values.dot(f.values);
    return d;
}

EnergyMap mode_energy_grid(const SampledSignal& f, const TFGrid& grid, double alpha,
                           double ip_weight) {
    EnergyMap E = EnergyMap::zero(grid);
    const double w2 = ip_weight * ip_weight;
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < grid.n_tau(); ++i) {
        Vector chi_c, chi_s;
        for (Index j = 0; j < grid.n_omega(); ++j) {
            gabor_pair(f.mesh, grid.tau_values(i), grid.omega_values(j), alpha, chi_c, chi_s);
            const double wc = chi_c.dot(f.values);
            const double ws = chi_s.dot(f.values);
            E.values(i, j) = w2 * (wc * wc + ws * ws);
        }
    }
    return E;
}

EnergyMap mode_energy_grid(const SampledSignal& f, const TFGrid& grid, double alpha) {
    return mode_energy_grid(f, grid, alpha, f.mesh.dt());
}

ConservationReport energy_conservation_report(const KernelFamily& family, const SampledSignal& v,
                                              const Decomposition& d) {
    ConservationReport r;
    r.lhs = v.values.dot(d.representer.values);
    r.rhs = d.energies.sum() + d.noise_energy;
    r.gap = r.lhs == 0.0 ? std::abs(r.rhs) : std::abs(r.lhs - r.rhs) / std::abs(r.lhs);
    return r;
}

ConservationReport energy_conservation_report(const SampledSignal& v, const SampledSignal& f,
                                              const TFGrid& grid, double alpha, double sigma) {
    // Plain (weightless) cell energies mirror kernel_aggregate's assembly exactly.
    EnergyMap E = mode_energy_grid(f, grid, alpha, 1.0);
    double mass = 0.0;
    for (Index i = 0; i < grid.n_tau(); ++i)
        for (Index j = 0; j < grid.n_omega(); ++j) mass += grid.cell_weight(i, j) * E.values(i, j);
    ConservationReport r;
    r.lhs = v.values.dot(f.values);
    r.rhs = mass + sigma * sigma * f.values.squaredNorm();
    r.gap = r.lhs == 0.0 ? std::abs(r.rhs) : std::abs(r.lhs - r.rhs) / std::abs(r.lhs);
    return r;
}

double l2_energy(const SampledSignal& v, const GaborAtom& atom, double window_halfwidth) {
    if (!(window_halfwidth > 0)) throw SpecInvalid("l2_energy: window_halfwidth must be > 0");
    const TimeMesh& mesh = v.mesh;
    const double half = window_halfwidth * atom.alpha / atom.omega;
    const Index lo = mesh.nearest(atom.tau - half);
    const Index hi = mesh.nearest(atom.tau + half);
    double acc = 0.0;
    for (Index k = lo; k <= hi; ++k) {
        if (std::abs(mesh.point(k) - atom.tau) > half) continue;
        acc += gabor_eval(atom, mesh.point(k)) * v.values(k);
    }
    acc *= mesh.dt();
    return acc * acc;
}

}  // namespace kmd
