#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <iostream>
#include <random>
#include <vector>

#include "latro/errors.hpp"
#include "latro/lattice.hpp"
#include "latro/parallel.hpp"
#include "latro/random_field.hpp"
#include "latro/truss.hpp"

namespace latro {

/// Equilibrium state at the mean Young's moduli, the anchor point of the
/// first-order perturbation expansion.
struct MeanSolution {
    Eigen::VectorXd loads;      // free-DOF load vector
    Eigen::VectorXd u;          // displacements at r_bar
    double compliance = 0.0;    // J_bar = f.u
    Eigen::VectorXd elongation; // per-member axial elongation
};

inline MeanSolution solve_mean(const Lattice& lattice, const StiffnessSystem& system) {
    MeanSolution sol;
    sol.loads = system.load_vector(lattice);
    sol.u = system.solve(sol.loads);
    sol.compliance = compliance(sol.loads, sol.u);
    sol.elongation = member_elongations(lattice, system, sol.u);
    return sol;
}

/// dJ/dr_e = -u.(dK/dr_e).u = -(A_e/l_e) delta_e^2, always <= 0.
inline Eigen::VectorXd compliance_gradient_wrt_modulus(const Lattice& lattice,
                                                       const Eigen::VectorXd& areas,
                                                       const Eigen::VectorXd& elongation) {
    Eigen::VectorXd g(lattice.member_count());
    for (const auto& m : lattice.members())
        g[m.id] = -(areas[m.id] / m.length) * elongation[m.id] * elongation[m.id];
    return g;
}

struct StdDevResult {
    double value = 0.0;   // sigma_J
    Eigen::VectorXd w;    // C_r dJ/dr
};

/// sigma_J^2 = dJ/dr . C_r dJ/dr evaluated through one covariance solve;
/// neither C_r nor the solution covariance is ever formed.
inline StdDevResult std_dev_compliance(const Eigen::VectorXd& dJ_dr,
                                       const FieldModel& field) {
    StdDevResult r;
    r.w = field.covariance_apply(dJ_dr);
    const double radicand = dJ_dr.dot(r.w);
    const double scale = std::max(1.0, dJ_dr.norm() * r.w.norm());
    if (radicand < -1e-14 * scale)
        throw NumericalError("negative compliance variance: covariance is not PSD");
    r.value = std::sqrt(std::max(radicand, 0.0));
    return r;
}

/// dJbar/ds_e = -u.(dK/ds_e).u = -(E_e dA_ds_e / l_e) delta_e^2 per member;
/// compliance is self-adjoint, so no extra solve is needed.
inline Eigen::VectorXd grad_mean_compliance(const Lattice& lattice,
                                            const Eigen::VectorXd& mean_modulus,
                                            const Eigen::VectorXd& dA_ds,
                                            const Eigen::VectorXd& elongation) {
    Eigen::VectorXd g(lattice.member_count());
    for (const auto& m : lattice.members())
        g[m.id] = -(mean_modulus[m.id] * dA_ds[m.id] / m.length) *
                  elongation[m.id] * elongation[m.id];
    return g;
}

enum class GradientPath { Adjoint, PerMember };

namespace detail {

/// Scatter c * b_e (the member direction form with -t at joint a, +t at b)
/// into a free-DOF vector.
inline void scatter_member_form(const Lattice& lattice, const StiffnessSystem& system,
                                const Member& m, double c, Eigen::VectorXd& out) {
    const int dim = lattice.dim();
    for (int k = 0; k < dim; ++k) {
        int fa = system.free_index(m.joint_a * dim + k);
        int fb = system.free_index(m.joint_b * dim + k);
        if (fa >= 0) out[fa] -= c * m.tangent[k];
        if (fb >= 0) out[fb] += c * m.tangent[k];
    }
}

inline double gather_member_form(const Lattice& lattice, const StiffnessSystem& system,
                                 const Member& m, const Eigen::VectorXd& v) {
    const int dim = lattice.dim();
    double s = 0.0;
    for (int k = 0; k < dim; ++k) {
        int fa = system.free_index(m.joint_a * dim + k);
        int fb = system.free_index(m.joint_b * dim + k);
        if (fa >= 0) s -= m.tangent[k] * v[fa];
        if (fb >= 0) s += m.tangent[k] * v[fb];
    }
    return s;
}

} // namespace detail

/// Gradient of sigma_J with respect to the member-level design chain dA_ds.
///
/// Both paths evaluate
///   d sigma_J / d s_e = (1/sigma_J) [ -2 u.(dK/dr)(du/ds_e) -
///                                     u_e.(d2K_e/dr ds_e).u_e ] . w-weighted,
/// the adjoint path with a single extra solve K y = sum_f w_f (dK/dr_f) u,
/// the per-member path with one back-substitution per member, independent
/// across members and parallelisable.
inline Eigen::VectorXd grad_std_compliance(
    const Lattice& lattice, const StiffnessSystem& system,
    const Eigen::VectorXd& mean_modulus, const Eigen::VectorXd& areas,
    const Eigen::VectorXd& dA_ds, const Eigen::VectorXd& elongation,
    const Eigen::VectorXd& w, double sigma_J,
    GradientPath path = GradientPath::Adjoint, int threads = 1) {
    const int n = lattice.member_count();
    if (sigma_J <= 0.0) {
        std::cerr << "latro: warning: sigma_J = 0, std-dev gradient set to zero\n";
        return Eigen::VectorXd::Zero(n);
    }

    // z = sum_f w_f (dK/dr_f) u = sum_f w_f (A_f/l_f) delta_f b_f
    Eigen::VectorXd z = Eigen::VectorXd::Zero(system.free_dof_count());
    for (const auto& m : lattice.members())
        detail::scatter_member_form(lattice, system, m,
                                    w[m.id] * (areas[m.id] / m.length) * elongation[m.id],
                                    z);

    Eigen::VectorXd g(n);
    if (path == GradientPath::Adjoint) {
        const Eigen::VectorXd y = system.solve(z);
        for (const auto& m : lattice.members()) {
            const double by = detail::gather_member_form(lattice, system, m, y);
            const double curvature =
                w[m.id] * (dA_ds[m.id] / m.length) * elongation[m.id] * elongation[m.id];
            g[m.id] = (2.0 * (mean_modulus[m.id] * dA_ds[m.id] / m.length) *
                           elongation[m.id] * by -
                       curvature) /
                      sigma_J;
        }
    } else {
        const auto& members = lattice.members();
        parallel_for_chunks(n, threads, [&](int begin, int end) {
            Eigen::VectorXd rhs(system.free_dof_count());
            for (int e = begin; e < end; ++e) {
                const Member& m = members[e];
                rhs.setZero();
                // K (du/ds_e) = -(dK/ds_e) u
                detail::scatter_member_form(
                    lattice, system, m,
                    -(mean_modulus[e] * dA_ds[e] / m.length) * elongation[e], rhs);
                const Eigen::VectorXd v = system.solve(rhs);
                const double curvature =
                    w[e] * (dA_ds[e] / m.length) * elongation[e] * elongation[e];
                g[e] = (-2.0 * z.dot(v) - curvature) / sigma_J;
            }
        });
    }
    return g;
}

struct MonteCarloResult {
    double mean = 0.0;
    double std_dev = 0.0;
    double se_mean = 0.0; // standard error of the mean estimate
    double se_std = 0.0;  // standard error of the std-dev estimate
    int samples = 0;      // accepted
    int rejected = 0;
    std::vector<double> compliances; // per accepted sample, in draw order
};

/// Validation harness for the perturbation statistics: draw N field samples,
/// solve equilibrium for each and report the sample statistics of J. Samples
/// with non-physical moduli (E <= 0) or a singular stiffness matrix are
/// rejected and counted rather than clipped. Sample i uses its own stream
/// seeded by (seed, i), so results do not depend on the thread count.
inline MonteCarloResult monte_carlo_validate(const Lattice& lattice,
                                             const Eigen::VectorXd& areas,
                                             const FieldModel& field, int n_samples,
                                             std::uint64_t seed, int threads = 0) {
    if (n_samples < 2) throw InvalidArgument("Monte-Carlo validation needs N >= 2");
    const int n = lattice.member_count();
    std::vector<double> values(n_samples,
                               std::numeric_limits<double>::quiet_NaN());

    parallel_for_chunks(n_samples, threads, [&](int begin, int end) {
        for (int i = begin; i < end; ++i) {
            std::seed_seq seq{static_cast<std::uint64_t>(seed),
                              static_cast<std::uint64_t>(i)};
            std::mt19937_64 rng(seq);
            const Eigen::VectorXd r = field.sample(rng);
            if ((r.array() <= 0.0).any()) continue;
            std::vector<MemberState> states(n);
            for (int e = 0; e < n; ++e) states[e] = {r[e], areas[e]};
            try {
                StiffnessSystem system(lattice, states);
                const MeanSolution sol = solve_mean(lattice, system);
                values[i] = sol.compliance;
            } catch (const SingularStructure&) {
                // rejected
            }
        }
    });

    MonteCarloResult res;
    double sum = 0.0;
    for (double v : values) {
        if (std::isnan(v)) {
            ++res.rejected;
        } else {
            res.compliances.push_back(v);
            sum += v;
        }
    }
    res.samples = static_cast<int>(res.compliances.size());
    if (res.samples < 2)
        throw NumericalError("Monte-Carlo validation rejected nearly all samples");
    res.mean = sum / res.samples;
    double ss = 0.0;
    for (double v : res.compliances) ss += (v - res.mean) * (v - res.mean);
    res.std_dev = std::sqrt(ss / (res.samples - 1));
    res.se_mean = res.std_dev / std::sqrt(double(res.samples));
    res.se_std = res.std_dev / std::sqrt(2.0 * (res.samples - 1));
    return res;
}

} // namespace latro
