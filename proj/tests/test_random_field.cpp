#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "latro/lattice.hpp"
#include "latro/random_field.hpp"

using namespace latro;
using Catch::Approx;

namespace {

AdjointLattice two_vertex_adjoint() {
    AdjointLattice adj;
    adj.vertices = {Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(1, 0, 0)};
    adj.edges = {{0, 1, 1.0}};
    return adj;
}

/// Spec with kappa = tau = 1 on a 1D embedding: beta = 1, d = 1 gives
/// nu = 1.5; ell = sqrt(3) makes kappa = 1 and sigma^2 = 1/4 makes tau = 1.
RandomFieldSpec unit_parameter_spec(int n) {
    RandomFieldSpec spec;
    spec.mean = Eigen::VectorXd::Zero(n);
    spec.beta = 1;
    spec.dim = 1;
    spec.length_scale = LengthScale::constant(std::sqrt(3.0));
    spec.sigma = 0.5;
    return spec;
}

/// Dense evaluation of the stationary isotropic precision formula
/// tau^2 sqrt(M) (kappa^2 I + sqrt(M^-1) A sqrt(M^-1))^(2 beta) sqrt(M),
/// used as the independent oracle for the sparse construction.
Eigen::MatrixXd dense_precision_oracle(const Eigen::VectorXd& mass,
                                       const Eigen::MatrixXd& diffusion, double kappa,
                                       double tau, int beta) {
    const int n = static_cast<int>(mass.size());
    const Eigen::VectorXd sqrt_m = mass.cwiseSqrt();
    const Eigen::MatrixXd scaled = sqrt_m.cwiseInverse().asDiagonal() * diffusion *
                                   sqrt_m.cwiseInverse().asDiagonal();
    const Eigen::MatrixXd core =
        kappa * kappa * Eigen::MatrixXd::Identity(n, n) + scaled;
    Eigen::MatrixXd power = Eigen::MatrixXd::Identity(n, n);
    for (int k = 0; k < 2 * beta; ++k) power = power * core;
    return tau * tau *
           (sqrt_m.asDiagonal() * power * sqrt_m.asDiagonal()).eval();
}

Eigen::MatrixXd empirical_covariance(const PrecisionOperator& op, int n_samples,
                                     std::uint64_t seed) {
    const int n = op.size();
    std::mt19937_64 rng(seed);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd mean_acc = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n_samples; ++i) {
        const Eigen::VectorXd r = op.sample(rng) - op.spec().mean;
        mean_acc += r;
        sum += r * r.transpose();
    }
    mean_acc /= n_samples;
    return sum / n_samples - mean_acc * mean_acc.transpose();
}

} // namespace

TEST_CASE("SPDE parameters from the Matern hyperparameters", "[random-field]") {
    // nu = 1.5, ell = 1 -> kappa = sqrt(3); tau^2 = 1/(12 sqrt(3)) for d = 1,
    // sigma = 1
    AdjointLattice adj = two_vertex_adjoint();
    RandomFieldSpec spec;
    spec.mean = Eigen::VectorXd::Zero(2);
    spec.sigma = 1.0;
    spec.beta = 1;
    spec.dim = 1;
    spec.length_scale = LengthScale::constant(1.0);
    CHECK(spec.nu() == Approx(1.5));

    const SpdeParameters p = spde_parameters(spec, adj);
    CHECK(p.kappa[0] == Approx(std::sqrt(3.0)).epsilon(1e-14));
    const double tau2_expected = 1.0 / (12.0 * std::sqrt(3.0));
    CHECK(p.tau[0] * p.tau[0] == Approx(tau2_expected).epsilon(1e-12));

    // independent numeric evaluation of the closed-form constant
    const double nu = 1.5;
    const double oracle = std::tgamma(nu) /
                          (std::tgamma(nu + 0.5) * std::sqrt(4.0 * M_PI) *
                           std::pow(std::sqrt(3.0), 2.0 * nu));
    CHECK(p.tau[0] * p.tau[0] == Approx(oracle).epsilon(1e-12));
}

TEST_CASE("affine length-scale evaluates at vertex positions", "[random-field]") {
    // ell(y) = 0.5 (0.95 y + 1): ell(20) = 10
    const LengthScale ell = LengthScale::affine(0.5, 0.475, 1);
    CHECK(ell(Eigen::Vector3d(0, 20, 0)) == Approx(10.0));
    CHECK(ell(Eigen::Vector3d(3, 0, 0)) == Approx(0.5));

    AdjointLattice adj;
    adj.vertices = {Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(0, 20, 0)};
    adj.edges = {{0, 1, 20.0}};
    RandomFieldSpec spec;
    spec.mean = Eigen::VectorXd::Zero(2);
    spec.sigma = 1.0;
    spec.beta = 1;
    spec.dim = 2;
    spec.length_scale = ell;
    const SpdeParameters p = spde_parameters(spec, adj);
    CHECK(p.kappa[1] == Approx(std::sqrt(2.0 * spec.nu()) / 10.0));

    spec.beta = 0;
    CHECK_THROWS_AS(spde_parameters(spec, adj), InvalidArgument);
}

TEST_CASE("adjoint operators assemble the 1D element matrices", "[random-field]") {
    SECTION("single edge of unit length") {
        Eigen::VectorXd mass;
        SpMat diffusion;
        assemble_adjoint_operators(two_vertex_adjoint(), mass, diffusion);
        CHECK(mass[0] == Approx(0.5));
        CHECK(mass[1] == Approx(0.5));
        CHECK(diffusion.coeff(0, 0) == Approx(1.0));
        CHECK(diffusion.coeff(0, 1) == Approx(-1.0));
        CHECK(diffusion.coeff(1, 1) == Approx(1.0));
    }

    SECTION("triangle with unit edges") {
        AdjointLattice adj;
        adj.vertices = {Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(1, 0, 0),
                        Eigen::Vector3d(0.5, std::sqrt(3.0) / 2.0, 0)};
        adj.edges = {{0, 1, 1.0}, {1, 2, 1.0}, {2, 0, 1.0}};
        Eigen::VectorXd mass;
        SpMat diffusion;
        assemble_adjoint_operators(adj, mass, diffusion);
        for (int i = 0; i < 3; ++i) CHECK(mass[i] == Approx(1.0));
        const Eigen::VectorXd row_sums = diffusion * Eigen::VectorXd::Ones(3);
        CHECK(row_sums.lpNorm<Eigen::Infinity>() <= 1e-14);
    }

    SECTION("chain of three vertices") {
        AdjointLattice adj;
        adj.vertices = {Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(1, 0, 0),
                        Eigen::Vector3d(2, 0, 0)};
        adj.edges = {{0, 1, 1.0}, {1, 2, 1.0}};
        Eigen::VectorXd mass;
        SpMat diffusion;
        assemble_adjoint_operators(adj, mass, diffusion);
        CHECK(mass[0] == Approx(0.5));
        CHECK(mass[1] == Approx(1.0));
        CHECK(mass[2] == Approx(0.5));
    }

    SECTION("zero diffusion row sums on a generated lattice") {
        const Lattice lattice = build_grid_lattice(4, 3, 1.0, 0.8, Diagonals::Double);
        const AdjointLattice adj = build_adjoint(lattice);
        Eigen::VectorXd mass;
        SpMat diffusion;
        assemble_adjoint_operators(adj, mass, diffusion);
        CHECK(mass.minCoeff() > 0.0);
        CHECK((diffusion * Eigen::VectorXd::Ones(adj.vertex_count()))
                  .lpNorm<Eigen::Infinity>() <= 1e-12);
    }
}

TEST_CASE("precision matrix of the two-vertex adjoint", "[random-field]") {
    const AdjointLattice adj = two_vertex_adjoint();
    const RandomFieldSpec spec = unit_parameter_spec(2);
    const PrecisionOperator op(spec, adj);

    REQUIRE(op.parameters().kappa[0] == Approx(1.0).epsilon(1e-14));
    REQUIRE(op.parameters().tau[0] == Approx(1.0).epsilon(1e-14));

    // hand evaluation of the stationary formula gives [[6.5,-6],[-6,6.5]]
    CHECK(op.precision().coeff(0, 0) == Approx(6.5).epsilon(1e-12));
    CHECK(op.precision().coeff(0, 1) == Approx(-6.0).epsilon(1e-12));
    CHECK(op.precision().coeff(1, 1) == Approx(6.5).epsilon(1e-12));

    const Eigen::MatrixXd oracle = dense_precision_oracle(
        op.lumped_mass(), Eigen::MatrixXd(op.diffusion()), 1.0, 1.0, 1);
    CHECK((Eigen::MatrixXd(op.precision()) - oracle).cwiseAbs().maxCoeff() <=
          1e-12 * oracle.cwiseAbs().maxCoeff());
}

TEST_CASE("sparse precision equals the dense oracle on lattices", "[random-field]") {
    const Lattice lattice = build_grid_lattice(3, 2, 1.0, 0.75, Diagonals::Single);
    const AdjointLattice adj = build_adjoint(lattice);
    const int n = adj.vertex_count();

    for (int beta : {1, 2, 3}) {
        RandomFieldSpec spec;
        spec.mean = Eigen::VectorXd::Constant(n, 100.0);
        spec.sigma = 10.0;
        spec.beta = beta;
        spec.dim = 2;
        spec.length_scale = LengthScale::constant(2.0);
        const PrecisionOperator op(spec, adj);

        const double kappa = op.parameters().kappa[0];
        const double tau = op.parameters().tau[0];
        const Eigen::MatrixXd oracle = dense_precision_oracle(
            op.lumped_mass(), Eigen::MatrixXd(op.diffusion()), kappa, tau, beta);
        const Eigen::MatrixXd q = Eigen::MatrixXd(op.precision());
        CHECK((q - oracle).cwiseAbs().maxCoeff() <=
              1e-12 * oracle.cwiseAbs().maxCoeff());

        // symmetry of the assembled product
        CHECK((q - q.transpose()).cwiseAbs().maxCoeff() <=
              1e-12 * q.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("anisotropy scaling diagonal", "[random-field]") {
    std::vector<Joint> joints(4);
    joints[0].position = {0, 0, 0};
    joints[1].position = {0, 1, 0};  // parallel to n = (0,1)
    joints[2].position = {1, 0, 0};  // perpendicular
    joints[3].position = {1, 1, 0};  // 45 degrees
    const Lattice lattice(2, joints, {{0, 1}, {0, 2}, {0, 3}});

    Anisotropy aniso;
    aniso.direction = Eigen::Vector3d(0, 1, 0);
    aniso.d_parallel = 1.0;
    aniso.d_perpendicular = 5.0;
    const Eigen::VectorXd d = anisotropy_diagonal(aniso, lattice);
    CHECK(d[0] == Approx(1.0));
    CHECK(d[1] == Approx(5.0));
    const double c = std::sqrt(2.0) / 2.0;
    CHECK(d[2] == Approx(1.0 * c + 5.0 * (1.0 - c)).epsilon(1e-12));
    CHECK(d[2] == Approx(2.1716).epsilon(1e-4));

    aniso.d_parallel = -1.0;
    CHECK_THROWS_AS(anisotropy_diagonal(aniso, lattice), InvalidArgument);

    // orientation invariance: flipping a member keeps D unchanged
    Anisotropy flipped;
    flipped.direction = Eigen::Vector3d(0, -1, 0);
    flipped.d_parallel = 1.0;
    flipped.d_perpendicular = 5.0;
    CHECK((anisotropy_diagonal(flipped, lattice) - d).lpNorm<Eigen::Infinity>() <=
          1e-14);
}

TEST_CASE("unit noise scaling reproduces the isotropic operator", "[random-field]") {
    const Lattice lattice = build_grid_lattice(3, 2, 1.0, 1.0, Diagonals::Double);
    const AdjointLattice adj = build_adjoint(lattice);
    RandomFieldSpec spec;
    spec.mean = Eigen::VectorXd::Constant(adj.vertex_count(), 1.0);
    spec.sigma = 2.0;
    spec.beta = 2;
    spec.dim = 2;
    spec.length_scale = LengthScale::constant(1.5);

    const PrecisionOperator iso(spec, adj);
    const PrecisionOperator with_d(spec, adj,
                                   Eigen::VectorXd::Ones(adj.vertex_count()));
    const Eigen::MatrixXd qa = Eigen::MatrixXd(iso.precision());
    const Eigen::MatrixXd qb = Eigen::MatrixXd(with_d.precision());
    CHECK((qa - qb).cwiseAbs().maxCoeff() <= 1e-14 * qa.cwiseAbs().maxCoeff());
}

TEST_CASE("sampling collapses onto the mean as sigma vanishes", "[random-field]") {
    const AdjointLattice adj = two_vertex_adjoint();
    RandomFieldSpec spec = unit_parameter_spec(2);
    spec.mean = Eigen::VectorXd::Constant(2, 7.0);
    spec.sigma = 1e-12;
    const PrecisionOperator op(spec, adj);
    std::mt19937_64 rng(99);
    const Eigen::VectorXd r = op.sample(rng);
    CHECK((r - spec.mean).lpNorm<Eigen::Infinity>() <= 1e-9);

    const FieldModel frozen =
        FieldModel::uncorrelated(Eigen::VectorXd::Constant(3, 5.0), 0.0);
    const Eigen::VectorXd s = frozen.sample(rng);
    CHECK((s - frozen.mean()).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("empirical covariance of recursion samples matches Q inverse",
          "[random-field]") {
    const AdjointLattice adj = two_vertex_adjoint();
    const RandomFieldSpec spec = unit_parameter_spec(2);
    const PrecisionOperator op(spec, adj);

    const int n_samples = 100000;
    const Eigen::MatrixXd cov = empirical_covariance(op, n_samples, 4242);
    const Eigen::MatrixXd expected =
        Eigen::MatrixXd(op.precision()).inverse(); // [[1.04,0.96],[0.96,1.04]]
    CHECK(expected(0, 0) == Approx(1.04).epsilon(1e-12));
    CHECK(expected(0, 1) == Approx(0.96).epsilon(1e-12));

    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            const double se = std::sqrt((expected(i, i) * expected(j, j) +
                                         expected(i, j) * expected(i, j)) /
                                        n_samples);
            CHECK(std::abs(cov(i, j) - expected(i, j)) <= 3.0 * se);
        }
}

TEST_CASE("covariance apply solves with the precision matrix", "[random-field]") {
    const AdjointLattice adj = two_vertex_adjoint();
    const RandomFieldSpec spec = unit_parameter_spec(2);
    const PrecisionOperator op(spec, adj);

    CHECK(op.covariance_apply(Eigen::VectorXd::Zero(2)).norm() == 0.0);

    Eigen::VectorXd e0(2);
    e0 << 1.0, 0.0;
    const Eigen::VectorXd col = op.covariance_apply(e0);
    CHECK(col[0] == Approx(1.04).epsilon(1e-12));
    CHECK(col[1] == Approx(0.96).epsilon(1e-12));

    // round trip on a bigger lattice
    const Lattice lattice = build_grid_lattice(4, 3, 1.0, 1.0, Diagonals::Double);
    const AdjointLattice big = build_adjoint(lattice);
    RandomFieldSpec spec2;
    spec2.mean = Eigen::VectorXd::Zero(big.vertex_count());
    spec2.sigma = 3.0;
    spec2.beta = 2;
    spec2.dim = 2;
    spec2.length_scale = LengthScale::constant(2.0);
    const PrecisionOperator op2(spec2, big);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> normal;
    Eigen::VectorXd v(big.vertex_count());
    for (int i = 0; i < v.size(); ++i) v[i] = normal(rng);
    const Eigen::VectorXd x = op2.covariance_apply(v);
    CHECK((op2.precision() * x - v).norm() <= 1e-10 * v.norm());
}

TEST_CASE("Matern covariance closed forms", "[random-field]") {
    CHECK(matern_covariance(0.0, 2.0, 1.5, 3.0) == Approx(4.0));

    // nu = 1/2 is the exponential kernel
    for (double r : {0.1, 0.7, 2.5}) {
        const double kappa = std::sqrt(1.0) / 1.3;
        CHECK(matern_covariance(r, 1.5, 0.5, 1.3) ==
              Approx(1.5 * 1.5 * std::exp(-kappa * r)).epsilon(1e-9));
    }

    // nu = 3/2 has the (1 + kr) exp(-kr) form
    const double k3 = std::sqrt(3.0);
    for (double r : {0.3, 1.0, 4.0}) {
        CHECK(matern_covariance(r, 1.0, 1.5, 1.0) ==
              Approx((1.0 + k3 * r) * std::exp(-k3 * r)).epsilon(1e-9));
    }
    CHECK(matern_covariance(1.0, 1.0, 1.5, 1.0) == Approx(0.48336).epsilon(1e-4));
}

TEST_CASE("chain covariance approaches the Matern kernel", "[random-field]") {
    // interior covariance on a 1D chain: d = 1, beta = 1 gives nu = 3/2
    const int n = 240;
    const Lattice chain = build_chain_lattice(n);
    RandomFieldSpec spec;
    spec.mean = Eigen::VectorXd::Zero(n);
    spec.sigma = 1.0;
    spec.beta = 1;
    spec.length_scale = LengthScale::constant(5.0);
    const FieldModel field = FieldModel::spde(spec, chain);
    const PrecisionOperator& op = *field.precision_operator();

    const int centre = n / 2;
    Eigen::VectorXd basis = Eigen::VectorXd::Zero(n);
    basis[centre] = 1.0;
    const Eigen::VectorXd col = op.covariance_apply(basis);

    for (int lag = 0; lag <= 15; ++lag) {
        const double exact = matern_covariance(double(lag), 1.0, 1.5, 5.0);
        CHECK(std::abs(col[centre + lag] - exact) <= 0.05 * exact);
    }
    // marginal variance within 10% of sigma^2 in the interior
    CHECK(col[centre] == Approx(1.0).epsilon(0.10));
}

TEST_CASE("sampler covariance converges on a small complete adjoint",
          "[random-field]") {
    // star of four members: adjoint is K4
    std::vector<Joint> joints(5);
    joints[0].position = {0, 0, 0};
    joints[1].position = {1, 0, 0};
    joints[2].position = {0, 1, 0};
    joints[3].position = {-1, 0, 0};
    joints[4].position = {0, -1, 0};
    const Lattice star(2, joints, {{0, 1}, {0, 2}, {0, 3}, {0, 4}});
    RandomFieldSpec spec;
    spec.mean = Eigen::VectorXd::Zero(4);
    spec.sigma = 2.0;
    spec.beta = 2;
    spec.length_scale = LengthScale::constant(1.7);
    const FieldModel field = FieldModel::spde(spec, star);
    const PrecisionOperator& op = *field.precision_operator();

    const int n_samples = 200000;
    const Eigen::MatrixXd cov = empirical_covariance(op, n_samples, 31);
    const Eigen::MatrixXd expected = Eigen::MatrixXd(op.precision()).inverse();
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            const double se = std::sqrt((expected(i, i) * expected(j, j) +
                                         expected(i, j) * expected(i, j)) /
                                        n_samples);
            CHECK(std::abs(cov(i, j) - expected(i, j)) <= 3.0 * se);
        }
}

TEST_CASE("non-stationary length-scale raises correlation along its axis",
          "[random-field]") {
    // length-scale growing from 1 to 20 across the width
    const int nx = 30, ny = 8;
    const Lattice lattice = build_grid_lattice(nx, ny, 1.0, 1.0, Diagonals::Double);
    RandomFieldSpec spec;
    spec.mean = Eigen::VectorXd::Zero(lattice.member_count());
    spec.sigma = 10.0;
    spec.beta = 1;
    spec.length_scale = LengthScale::affine(1.0, 19.0 / nx, 0);
    const FieldModel field = FieldModel::spde(spec, lattice);

    // horizontal members paired with their right neighbour, grouped in slabs
    struct Pair {
        int a, b;
        double x;
    };
    std::vector<Pair> pairs;
    for (const auto& ma : lattice.members()) {
        if (std::abs(ma.tangent[0]) < 0.999) continue;
        for (const auto& mb : lattice.members()) {
            if (std::abs(mb.tangent[0]) < 0.999) continue;
            if (std::abs(mb.centroid[1] - ma.centroid[1]) > 1e-9) continue;
            if (std::abs(mb.centroid[0] - ma.centroid[0] - 1.0) > 1e-9) continue;
            pairs.push_back({ma.id, mb.id, ma.centroid[0]});
        }
    }
    REQUIRE(pairs.size() > 100);

    const int n_samples = 600;
    std::mt19937_64 rng(77);
    std::vector<Eigen::VectorXd> samples;
    samples.reserve(n_samples);
    for (int i = 0; i < n_samples; ++i) samples.push_back(field.sample(rng));

    const int slabs = 4;
    std::vector<double> corr(slabs, 0.0);
    for (int sl = 0; sl < slabs; ++sl) {
        const double x_lo = nx * double(sl) / slabs;
        const double x_hi = nx * double(sl + 1) / slabs;
        double saa = 0, sbb = 0, sab = 0, sa = 0, sb = 0;
        long count = 0;
        for (const auto& p : pairs) {
            if (p.x < x_lo || p.x >= x_hi) continue;
            for (const auto& s : samples) {
                sa += s[p.a];
                sb += s[p.b];
                saa += s[p.a] * s[p.a];
                sbb += s[p.b] * s[p.b];
                sab += s[p.a] * s[p.b];
                ++count;
            }
        }
        REQUIRE(count > 0);
        const double ma = sa / count, mb = sb / count;
        corr[sl] = (sab / count - ma * mb) /
                   std::sqrt((saa / count - ma * ma) * (sbb / count - mb * mb));
    }
    for (int sl = 0; sl + 1 < slabs; ++sl) CHECK(corr[sl + 1] >= corr[sl] - 0.05);
    CHECK(corr[slabs - 1] > corr[0] + 0.1);
}
