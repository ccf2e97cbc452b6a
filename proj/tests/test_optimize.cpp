#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "latro/optimize.hpp"

using namespace latro;
using Catch::Approx;

namespace {

/// Verification-style problem: 4x2 cells of 1 x 0.75, left end fixed, unit
/// axial load at the centre of the right end, uncorrelated moduli.
struct VerificationProblem {
    Lattice lattice;
    FieldModel field;
    OptimizationConfig config;

    VerificationProblem() : lattice(make_lattice()), field(make_field(lattice)) {
        config.volume_max = 0.5;
        config.area_max = 1.0;
        config.max_iterations = 400;
        config.tolerance = 1e-4;
    }

    static Lattice make_lattice() {
        Lattice lattice = build_grid_lattice(4, 2, 1.0, 0.75, Diagonals::Double);
        for (const auto& j : lattice.joints())
            if (j.position[0] == 0.0) lattice.fix_joint(j.id);
        for (const auto& j : lattice.joints())
            if (j.position[0] == 4.0 && std::abs(j.position[1] - 0.75) < 1e-12)
                lattice.add_load(j.id, {1.0, 0.0, 0.0});
        return lattice;
    }

    static FieldModel make_field(const Lattice& lattice) {
        return FieldModel::uncorrelated(
            Eigen::VectorXd::Constant(lattice.member_count(), 100.0), 10.0);
    }
};

} // namespace

TEST_CASE("initial design activates the volume constraint", "[optimize]") {
    const VerificationProblem p;
    const RobustOptimizer opt(p.lattice, p.field, p.config);
    const Eigen::VectorXd s0 = opt.initial_design();
    const DesignState state = opt.map_design(s0);
    CHECK(state.volume == Approx(0.5).epsilon(1e-9));

    // with penalisation the start is still volume-exact
    const PenalizationCurve curve = PenalizationCurve::preset_default();
    const RobustOptimizer opt_pen(p.lattice, p.field, p.config, nullptr, &curve);
    const DesignState pen_state = opt_pen.map_design(opt_pen.initial_design());
    CHECK(pen_state.volume == Approx(0.5).epsilon(1e-6));
}

TEST_CASE("infeasible volume bounds are rejected", "[optimize]") {
    const VerificationProblem p;
    OptimizationConfig bad = p.config;
    bad.volume_max = 1e-9;
    CHECK_THROWS_AS(RobustOptimizer(p.lattice, p.field, bad), InvalidArgument);
}

TEST_CASE("cost gradients match finite differences through the pipeline",
          "[optimize]") {
    Lattice lattice = build_grid_lattice(4, 3, 1.0, 0.8, Diagonals::Double);
    for (const auto& j : lattice.joints())
        if (j.position[0] == 0.0) lattice.fix_joint(j.id);
    for (const auto& j : lattice.joints())
        if (j.position[0] == 4.0) lattice.add_load(j.id, {0.3, -1.0, 0.0});

    RandomFieldSpec spec;
    spec.mean = Eigen::VectorXd::Constant(lattice.member_count(), 100.0);
    spec.sigma = 10.0;
    spec.beta = 1;
    spec.length_scale = LengthScale::constant(1.5);
    const FieldModel field = FieldModel::spde(spec, lattice);
    const FilterOperator filter = FilterOperator::build(lattice, 1.3);
    const PenalizationCurve curve = PenalizationCurve::preset_default();

    OptimizationConfig config;
    config.volume_max = 0.3 * lattice.total_member_length();
    config.area_max = 1.0;
    const RobustOptimizer opt(lattice, field, config, &filter, &curve);

    std::mt19937 rng(5);
    std::uniform_real_distribution<double> uni(0.25, 0.85);
    Eigen::VectorXd s(lattice.member_count());
    for (int e = 0; e < s.size(); ++e) s[e] = uni(rng);

    const double am = 0.6, as = 0.4;
    const Evaluation ev = opt.evaluate(s, am, as);
    const double h = 1e-6;
    for (int e = 0; e < s.size(); e += 11) {
        Eigen::VectorXd sp = s, sm = s;
        sp[e] += h;
        sm[e] -= h;
        const Evaluation ep = opt.evaluate(sp, am, as);
        const Evaluation em = opt.evaluate(sm, am, as);
        const double fd_cost = (ep.cost - em.cost) / (2.0 * h);
        const double fd_con = (ep.constraint - em.constraint) / (2.0 * h);
        CHECK(std::abs(fd_cost - ev.grad_cost[e]) <=
              1e-4 * std::max(std::abs(ev.grad_cost[e]),
                              1e-3 * ev.grad_cost.lpNorm<Eigen::Infinity>()));
        CHECK(std::abs(fd_con - ev.grad_constraint[e]) <=
              1e-4 * std::max(std::abs(ev.grad_constraint[e]),
                              1e-3 * ev.grad_constraint.lpNorm<Eigen::Infinity>()));
    }
}

TEST_CASE("alpha = 1 run matches the published verification optimum", "[optimize]") {
    const VerificationProblem p;
    const RobustOptimizer opt(p.lattice, p.field, p.config);
    const OptimizationResult res = opt.run(1.0);

    CHECK(res.mean == Approx(0.32).epsilon(0.05));
    CHECK(res.std_dev == Approx(1.60e-2).epsilon(0.10));
    CHECK(res.volume <= 0.5 + 1e-6 * 0.5);

    // evaluating with the self-normalisation gives F = 1 by construction
    const Evaluation ev = opt.evaluate(res.design, 1.0 / res.mean_scale, 0.0);
    CHECK(ev.cost == Approx(1.0).epsilon(1e-9));

    // bounds hold exactly on the final design
    CHECK(res.design.minCoeff() >= 0.0);
    CHECK(res.design.maxCoeff() <= 1.0);
}

TEST_CASE("seeded runs are bit-identical", "[optimize]") {
    const VerificationProblem p;
    OptimizationConfig config = p.config;
    config.max_iterations = 60;
    const RobustOptimizer opt(p.lattice, p.field, config);

    const OptimizationResult a = opt.run_weighted(0.7, 0.3);
    const OptimizationResult b = opt.run_weighted(0.7, 0.3);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].mean == b.history[i].mean);
        CHECK(a.history[i].std_dev == b.history[i].std_dev);
        CHECK(a.history[i].max_change == b.history[i].max_change);
    }
    CHECK((a.design - b.design).norm() == 0.0);
}

TEST_CASE("pareto sweep needs both normalisation weights", "[optimize]") {
    const VerificationProblem p;
    OptimizationConfig config = p.config;
    config.max_iterations = 5;
    const RobustOptimizer opt(p.lattice, p.field, config);
    CHECK_THROWS_AS(opt.pareto({1.0, 0.5}), InvalidArgument);
    CHECK_THROWS_AS(opt.pareto({0.5, 0.0}), InvalidArgument);
    CHECK_THROWS_AS(opt.run(1.5), InvalidArgument);
}
