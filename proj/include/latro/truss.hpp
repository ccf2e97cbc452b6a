#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <string>
#include <vector>

#include "latro/errors.hpp"
#include "latro/lattice.hpp"

namespace latro {

using SpMat = Eigen::SparseMatrix<double>;

struct MemberState {
    double youngs_modulus = 1.0; // E_e
    double area = 1.0;           // A_e
};

/// Base block [tt^T, -tt^T; -tt^T, tt^T] of a member, size 2d x 2d.
/// The element stiffness is (E*A/l) times this block.
inline Eigen::MatrixXd element_stiffness_base(const Member& member, int dim) {
    Eigen::VectorXd t = member.tangent.head(dim);
    Eigen::MatrixXd tt = t * t.transpose();
    Eigen::MatrixXd block(2 * dim, 2 * dim);
    block.topLeftCorner(dim, dim) = tt;
    block.topRightCorner(dim, dim) = -tt;
    block.bottomLeftCorner(dim, dim) = -tt;
    block.bottomRightCorner(dim, dim) = tt;
    return block;
}

inline Eigen::MatrixXd element_stiffness(const Member& member, int dim, double E,
                                         double A) {
    if (E <= 0.0 || A <= 0.0 || member.length <= 0.0)
        throw InvalidArgument("element stiffness needs positive E, A and length");
    return (E * A / member.length) * element_stiffness_base(member, dim);
}

/// d(K_e)/d(s_e) with dA_ds the local chain factor dA_e/ds_e.
inline Eigen::MatrixXd element_stiffness_dd_design(const Member& member, int dim,
                                                   double E, double dA_ds) {
    return (E * dA_ds / member.length) * element_stiffness_base(member, dim);
}

/// d(K_e)/d(r_e), the derivative with respect to the member Young's modulus.
inline Eigen::MatrixXd element_stiffness_dd_modulus(const Member& member, int dim,
                                                    double A) {
    return (A / member.length) * element_stiffness_base(member, dim);
}

/// d^2(K_e)/d(r_e)d(s_e).
inline Eigen::MatrixXd element_stiffness_dd_modulus_design(const Member& member,
                                                           int dim, double dA_ds) {
    return (dA_ds / member.length) * element_stiffness_base(member, dim);
}

/// Reduced global stiffness matrix with its sparse Cholesky factorisation.
/// Boundary conditions are applied by eliminating fixed DOFs, which keeps the
/// system strictly SPD; one factorisation serves all solves of an iteration.
/// Back-substitutions through solve() are read-only and safe to run
/// concurrently.
class StiffnessSystem {
public:
    StiffnessSystem(const Lattice& lattice, const std::vector<MemberState>& states) {
        const int dim = lattice.dim();
        if (states.size() != static_cast<std::size_t>(lattice.member_count()))
            throw InvalidArgument("member state count does not match lattice");

        const auto fixed = lattice.fixed_dof_mask();
        full_to_free_.assign(lattice.dof_count(), -1);
        for (int dof = 0; dof < lattice.dof_count(); ++dof)
            if (!fixed[dof]) {
                full_to_free_[dof] = n_free_;
                free_to_full_.push_back(dof);
                ++n_free_;
            }
        if (n_free_ == 0)
            throw InvalidArgument("all DOFs are fixed");

        std::vector<Eigen::Triplet<double>> triplets;
        triplets.reserve(static_cast<std::size_t>(lattice.member_count()) * 4 * dim * dim);
        std::vector<int> gdof(2 * dim);
        for (const auto& m : lattice.members()) {
            const auto& st = states[m.id];
            if (st.youngs_modulus <= 0.0 || st.area <= 0.0)
                throw InvalidArgument("member state needs positive E and A");
            const double c = st.youngs_modulus * st.area / m.length;
            Eigen::VectorXd t = m.tangent.head(dim);
            for (int k = 0; k < dim; ++k) {
                gdof[k] = m.joint_a * dim + k;
                gdof[dim + k] = m.joint_b * dim + k;
            }
            // lower triangle only; mirroring below keeps K exactly symmetric
            for (int p = 0; p < 2 * dim; ++p) {
                int fp = full_to_free_[gdof[p]];
                if (fp < 0) continue;
                const double tp = (p < dim) ? t[p] : -t[p - dim];
                for (int q = 0; q < 2 * dim; ++q) {
                    int fq = full_to_free_[gdof[q]];
                    if (fq < 0 || fq > fp) continue;
                    const double tq = (q < dim) ? t[q] : -t[q - dim];
                    triplets.emplace_back(fp, fq, c * tp * tq);
                }
            }
        }
        SpMat lower(n_free_, n_free_);
        lower.setFromTriplets(triplets.begin(), triplets.end());
        matrix_ = lower.selfadjointView<Eigen::Lower>();
        matrix_.makeCompressed();

        factorization_.compute(matrix_);
        if (factorization_.info() != Eigen::Success)
            throw SingularStructure("stiffness factorisation failed", failing_pivot());
        // LDLT succeeds on some indefinite matrices; a mechanism shows up as a
        // non-positive pivot.
        const auto& D = factorization_.vectorD();
        for (int i = 0; i < D.size(); ++i)
            if (!(D[i] > 0.0))
                throw SingularStructure(
                    "stiffness matrix is not positive definite (mechanism)",
                    map_pivot(i));
    }

    int free_dof_count() const { return n_free_; }
    const SpMat& matrix() const { return matrix_; }
    int free_index(int dof) const { return full_to_free_[dof]; }
    const std::vector<int>& free_to_full() const { return free_to_full_; }

    /// Solve K u = f on the free DOFs.
    Eigen::VectorXd solve(const Eigen::VectorXd& f) const {
        if (f.size() != n_free_)
            throw InvalidArgument("load vector size does not match free DOF count");
        return factorization_.solve(f);
    }

    /// Assemble the free-DOF load vector from the lattice's sparse load map.
    /// Loads on fixed DOFs are reacted directly by the supports and dropped.
    Eigen::VectorXd load_vector(const Lattice& lattice) const {
        Eigen::VectorXd f = Eigen::VectorXd::Zero(n_free_);
        for (const auto& [dof, value] : lattice.loads()) {
            int idx = full_to_free_[dof];
            if (idx >= 0) f[idx] += value;
        }
        return f;
    }

    /// Expand a free-DOF vector to the full DOF numbering, zeros on fixed DOFs.
    Eigen::VectorXd expand(const Eigen::VectorXd& u_free) const {
        Eigen::VectorXd full = Eigen::VectorXd::Zero(full_to_free_.size());
        for (int i = 0; i < n_free_; ++i) full[free_to_full_[i]] = u_free[i];
        return full;
    }

private:
    int failing_pivot() const {
        const auto& D = factorization_.vectorD();
        for (int i = 0; i < D.size(); ++i)
            if (!(D[i] > 0.0)) return map_pivot(i);
        return -1;
    }

    // Map a pivot position in elimination order back to a free-DOF index.
    int map_pivot(int eliminated_index) const {
        const auto& pinv = factorization_.permutationPinv().indices();
        if (eliminated_index >= 0 && eliminated_index < pinv.size())
            return pinv[eliminated_index];
        return eliminated_index;
    }

    SpMat matrix_;
    Eigen::SimplicialLDLT<SpMat> factorization_;
    std::vector<int> full_to_free_;
    std::vector<int> free_to_full_;
    int n_free_ = 0;
};

/// Work of the external loads, J = f.u = u.K.u.
inline double compliance(const Eigen::VectorXd& f, const Eigen::VectorXd& u) {
    if (f.size() != u.size())
        throw InvalidArgument("compliance needs consistent DOF indexing");
    return f.dot(u);
}

/// Signed axial elongation delta_e = t.(u_b - u_a) of every member; the
/// element energy forms reduce to functions of delta_e.
inline Eigen::VectorXd member_elongations(const Lattice& lattice,
                                          const StiffnessSystem& system,
                                          const Eigen::VectorXd& u_free) {
    const int dim = lattice.dim();
    Eigen::VectorXd delta(lattice.member_count());
    for (const auto& m : lattice.members()) {
        double d = 0.0;
        for (int k = 0; k < dim; ++k) {
            int fa = system.free_index(m.joint_a * dim + k);
            int fb = system.free_index(m.joint_b * dim + k);
            double ua = fa >= 0 ? u_free[fa] : 0.0;
            double ub = fb >= 0 ? u_free[fb] : 0.0;
            d += m.tangent[k] * (ub - ua);
        }
        delta[m.id] = d;
    }
    return delta;
}

} // namespace latro
