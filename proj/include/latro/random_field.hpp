#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "latro/errors.hpp"
#include "latro/lattice.hpp"
#include "latro/truss.hpp"

namespace latro {

/// Length-scale of the field, constant or affine along one coordinate axis.
struct LengthScale {
    double offset = 1.0;
    double slope = 0.0;
    int axis = 0;

    static LengthScale constant(double value) { return {value, 0.0, 0}; }
    static LengthScale affine(double offset, double slope, int axis) {
        return {offset, slope, axis};
    }

    double operator()(const Eigen::Vector3d& x) const {
        return offset + slope * x[axis];
    }
    bool is_constant() const { return slope == 0.0; }
};

struct Anisotropy {
    Eigen::Vector3d direction = Eigen::Vector3d::UnitX(); // unit vector n
    double d_parallel = 1.0;
    double d_perpendicular = 1.0;
};

struct RandomFieldSpec {
    Eigen::VectorXd mean;      // expected Young's modulus per member
    double sigma = 1.0;        // marginal standard deviation
    int beta = 1;              // integer SPDE exponent, >= 1
    LengthScale length_scale;
    std::optional<Anisotropy> anisotropy;
    int dim = 2;               // embedding dimension entering the normalisation

    /// Matern smoothness implied by beta and dim.
    double nu() const { return 2.0 * beta - 0.5 * dim; }
};

/// Matern covariance between two points at distance `dist`.
inline double matern_covariance(double dist, double sigma, double nu, double ell) {
    if (sigma <= 0.0 || nu <= 0.0 || ell <= 0.0)
        throw InvalidArgument("Matern covariance needs positive sigma, nu, ell");
    const double kappa = std::sqrt(2.0 * nu) / ell;
    const double x = kappa * dist;
    if (x < 1e-10) return sigma * sigma;
    const double scale = sigma * sigma / (std::pow(2.0, nu - 1.0) * std::tgamma(nu));
    return scale * std::pow(x, nu) * std::cyl_bessel_k(nu, x);
}

inline double matern_covariance(const Eigen::Vector3d& x, const Eigen::Vector3d& y,
                                double sigma, double nu, double ell) {
    return matern_covariance((x - y).norm(), sigma, nu, ell);
}

struct SpdeParameters {
    Eigen::VectorXd kappa; // per adjoint vertex
    Eigen::VectorXd tau;
};

/// kappa = sqrt(2 nu)/ell and tau^2 = Gamma(nu) / (sigma^2 Gamma(nu + d/2)
/// (4 pi)^{d/2} kappa^{2 nu}), evaluated at the adjoint vertex positions.
inline SpdeParameters spde_parameters(const RandomFieldSpec& spec,
                                      const AdjointLattice& adjoint) {
    const double nu = spec.nu();
    if (nu <= 0.0)
        throw InvalidArgument("SPDE exponent too small for this dimension (nu <= 0)");
    if (spec.beta < 1) throw InvalidArgument("SPDE exponent beta must be >= 1");
    if (spec.sigma <= 0.0) throw InvalidArgument("field sigma must be positive");

    const int n = adjoint.vertex_count();
    SpdeParameters p;
    p.kappa.resize(n);
    p.tau.resize(n);
    const double gamma_ratio = std::tgamma(nu) / std::tgamma(nu + 0.5 * spec.dim);
    const double four_pi_pow = std::pow(4.0 * M_PI, 0.5 * spec.dim);
    for (int i = 0; i < n; ++i) {
        const double ell = spec.length_scale(adjoint.vertices[i]);
        if (ell <= 0.0)
            throw InvalidArgument("length-scale must be positive at every member centroid");
        p.kappa[i] = std::sqrt(2.0 * nu) / ell;
        const double tau2 = gamma_ratio / (spec.sigma * spec.sigma * four_pi_pow *
                                           std::pow(p.kappa[i], 2.0 * nu));
        p.tau[i] = std::sqrt(tau2);
    }
    return p;
}

/// Assemble the lumped mass diagonal and the diffusion matrix of the adjoint
/// lattice from the 1D element matrices: each edge of length h contributes
/// h/2 to both endpoint masses and (1/h) [1,-1;-1,1] to the diffusion matrix.
inline void assemble_adjoint_operators(const AdjointLattice& adjoint,
                                       Eigen::VectorXd& lumped_mass,
                                       SpMat& diffusion) {
    const int n = adjoint.vertex_count();
    lumped_mass = Eigen::VectorXd::Zero(n);
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(adjoint.edges.size() * 4);
    for (const auto& e : adjoint.edges) {
        lumped_mass[e.a] += 0.5 * e.length;
        lumped_mass[e.b] += 0.5 * e.length;
        const double k = 1.0 / e.length;
        triplets.emplace_back(e.a, e.a, k);
        triplets.emplace_back(e.b, e.b, k);
        triplets.emplace_back(e.a, e.b, -k);
        triplets.emplace_back(e.b, e.a, -k);
    }
    diffusion.resize(n, n);
    diffusion.setFromTriplets(triplets.begin(), triplets.end());
    diffusion.makeCompressed();
}

/// D_ee = d_par |n.t_e| + d_perp (1 - |n.t_e|); the absolute value removes the
/// arbitrary sign of the member tangent orientation.
inline Eigen::VectorXd anisotropy_diagonal(const Anisotropy& aniso,
                                           const Lattice& lattice) {
    if (aniso.d_parallel <= 0.0 || aniso.d_perpendicular <= 0.0)
        throw InvalidArgument("anisotropy factors must be positive");
    if (std::abs(aniso.direction.norm() - 1.0) > 1e-9)
        throw InvalidArgument("anisotropy direction must be a unit vector");
    Eigen::VectorXd d(lattice.member_count());
    for (const auto& m : lattice.members()) {
        const double c = std::abs(aniso.direction.dot(m.tangent));
        d[m.id] = aniso.d_parallel * c + aniso.d_perpendicular * (1.0 - c);
    }
    return d;
}

/// SPDE-defined Gaussian field of member Young's moduli on the adjoint
/// lattice. Holds the factorised shifted operator L = kappa^2 M + A used by
/// the sampling recursion and the assembled sparse precision matrix
/// Q = B^-T T M'^-1 T B^-1 with B^-1 = L (M^-1 L)^(beta-1).
/// Immutable after construction; solves are read-only and concurrent.
class PrecisionOperator {
public:
    PrecisionOperator(const RandomFieldSpec& spec, const AdjointLattice& adjoint,
                      const Eigen::VectorXd& noise_scaling = Eigen::VectorXd())
        : spec_(spec) {
        const int n = adjoint.vertex_count();
        if (spec.mean.size() != n)
            throw InvalidArgument("field mean size does not match member count");

        params_ = spde_parameters(spec, adjoint);
        assemble_adjoint_operators(adjoint, mass_, diffusion_);
        for (int i = 0; i < n; ++i)
            if (!(mass_[i] > 0.0))
                throw NotSpd("adjoint vertex with zero lumped mass (isolated member)");

        d_scaling_ = noise_scaling.size() == 0 ? Eigen::VectorXd::Ones(n) : noise_scaling;
        if (d_scaling_.size() != n)
            throw InvalidArgument("noise scaling size does not match member count");
        for (int i = 0; i < n; ++i)
            if (!(d_scaling_[i] > 0.0))
                throw InvalidArgument("noise scaling must be positive");

        SpMat shifted = diffusion_;
        Eigen::VectorXd kappa2_mass =
            (params_.kappa.array().square() * mass_.array()).matrix();
        for (int i = 0; i < n; ++i)
            shifted.coeffRef(i, i) += kappa2_mass[i];
        shifted.makeCompressed();
        shifted_ = shifted;

        shifted_factor_.compute(shifted_);
        if (shifted_factor_.info() != Eigen::Success)
            throw NotSpd("SPDE operator kappa^2 M + A is not positive definite");

        // Q = B^-T diag(tau^2 D^2 / M) B^-1, kept sparse for integer beta.
        SpMat b_inverse = shifted_;
        if (spec.beta > 1) {
            SpMat minv_l = (mass_.cwiseInverse()).asDiagonal() * shifted_;
            for (int k = 1; k < spec.beta; ++k) {
                b_inverse = (b_inverse * minv_l).pruned();
            }
        }
        Eigen::VectorXd mid = (params_.tau.array().square() *
                               d_scaling_.array().square() / mass_.array())
                                  .matrix();
        precision_ = b_inverse.transpose() * mid.asDiagonal() * b_inverse;
        precision_.makeCompressed();

        precision_factor_.compute(precision_);
        if (precision_factor_.info() != Eigen::Success)
            throw NotSpd("precision matrix is not positive definite");
        const auto& D = precision_factor_.vectorD();
        for (int i = 0; i < D.size(); ++i)
            if (!(D[i] > 0.0))
                throw NotSpd("precision matrix is not positive definite");
    }

    const SpMat& precision() const { return precision_; }
    const Eigen::VectorXd& lumped_mass() const { return mass_; }
    const SpMat& diffusion() const { return diffusion_; }
    const SpdeParameters& parameters() const { return params_; }
    const Eigen::VectorXd& noise_scaling() const { return d_scaling_; }
    const RandomFieldSpec& spec() const { return spec_; }
    int size() const { return static_cast<int>(mass_.size()); }

    /// C_r v through a solve with the precision matrix; C_r is never formed.
    Eigen::VectorXd covariance_apply(const Eigen::VectorXd& v) const {
        if (v.size() != mass_.size())
            throw InvalidArgument("covariance_apply vector size mismatch");
        return precision_factor_.solve(v);
    }

    /// Draw one field realisation r_bar + r^(beta) by the SPDE recursion:
    /// g ~ N(0, M), solve L r1 = g / (tau D), then beta-1 mass-weighted
    /// resolvent applications.
    Eigen::VectorXd sample(std::mt19937_64& rng) const {
        const int n = size();
        std::normal_distribution<double> normal(0.0, 1.0);
        Eigen::VectorXd forcing(n);
        for (int i = 0; i < n; ++i) {
            const double g = normal(rng) * std::sqrt(mass_[i]);
            forcing[i] = g / (params_.tau[i] * d_scaling_[i]);
        }
        Eigen::VectorXd r = shifted_factor_.solve(forcing);
        for (int k = 1; k < spec_.beta; ++k) {
            const Eigen::VectorXd rhs = (mass_.array() * r.array()).matrix();
            r = shifted_factor_.solve(rhs);
        }
        return spec_.mean + r;
    }

private:
    RandomFieldSpec spec_;
    SpdeParameters params_;
    Eigen::VectorXd mass_;
    SpMat diffusion_;
    Eigen::VectorXd d_scaling_; // D diagonal, ones when isotropic
    SpMat shifted_;             // L = kappa^2 M + A
    SpMat precision_;           // Q_r
    Eigen::SimplicialLDLT<SpMat> shifted_factor_;
    Eigen::SimplicialLDLT<SpMat> precision_factor_;
};

/// Probability model of the member Young's moduli: either spatially
/// uncorrelated (diagonal covariance sigma^2 I) or an SPDE field on the
/// adjoint lattice. sigma = 0 is allowed for the uncorrelated model and
/// collapses the field onto its mean.
class FieldModel {
public:
    static FieldModel uncorrelated(Eigen::VectorXd mean, double sigma) {
        if (sigma < 0.0) throw InvalidArgument("field sigma must be non-negative");
        FieldModel f;
        f.mean_ = std::move(mean);
        f.sigma_ = sigma;
        return f;
    }

    static FieldModel spde(const RandomFieldSpec& spec, const Lattice& lattice) {
        RandomFieldSpec full = spec;
        full.dim = lattice.dim();
        if (full.mean.size() == 1 && lattice.member_count() > 1)
            full.mean = Eigen::VectorXd::Constant(lattice.member_count(), full.mean[0]);
        const AdjointLattice adjoint = build_adjoint(lattice);
        Eigen::VectorXd scaling;
        if (full.anisotropy) scaling = anisotropy_diagonal(*full.anisotropy, lattice);
        FieldModel f;
        f.mean_ = full.mean;
        f.sigma_ = full.sigma;
        f.op_ = std::make_shared<PrecisionOperator>(full, adjoint, scaling);
        return f;
    }

    const Eigen::VectorXd& mean() const { return mean_; }
    double sigma() const { return sigma_; }
    bool is_spde() const { return op_ != nullptr; }
    const PrecisionOperator* precision_operator() const { return op_.get(); }

    Eigen::VectorXd covariance_apply(const Eigen::VectorXd& v) const {
        if (op_) return op_->covariance_apply(v);
        return sigma_ * sigma_ * v;
    }

    Eigen::VectorXd sample(std::mt19937_64& rng) const {
        if (op_) return op_->sample(rng);
        Eigen::VectorXd r(mean_.size());
        std::normal_distribution<double> normal(0.0, 1.0);
        for (int i = 0; i < r.size(); ++i) r[i] = mean_[i] + sigma_ * normal(rng);
        return r;
    }

private:
    Eigen::VectorXd mean_;
    double sigma_ = 0.0;
    std::shared_ptr<const PrecisionOperator> op_;
};

} // namespace latro
