#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "latro/errors.hpp"
#include "latro/lattice.hpp"
#include "latro/mma.hpp"
#include "latro/random_field.hpp"
#include "latro/regularization.hpp"
#include "latro/statistics.hpp"
#include "latro/truss.hpp"

namespace latro {

struct OptimizationConfig {
    double volume_max = 0.0;
    double area_min = 0.0;  // 0 selects the default 1e-4 * area_max
    double area_max = 1.0;
    int max_iterations = 400;
    double tolerance = 1e-4; // max componentwise design change
    MmaOptions mma;
    GradientPath gradient_path = GradientPath::Adjoint;
    int threads = 1;
};

struct Evaluation {
    double cost = 0.0;
    Eigen::VectorXd grad_cost;
    double constraint = 0.0; // g = V - V_max
    Eigen::VectorXd grad_constraint;
    double mean = 0.0;
    double std_dev = 0.0;
    double volume = 0.0;
    DesignState state;
};

struct HistoryRow {
    int iteration = 0;
    double mean = 0.0;
    double std_dev = 0.0;
    double cost = 0.0;
    double volume = 0.0;
    double max_change = 0.0;
    double kkt = 0.0;
};

struct OptimizationResult {
    Eigen::VectorXd design;
    DesignState state;
    double mean = 0.0;
    double std_dev = 0.0;
    double cost = 0.0;
    double volume = 0.0;
    std::vector<HistoryRow> history;
    bool converged = false;
    int iterations = 0;
    double mean_scale = 1.0; // J_bar^* used for the cost weights
    double std_scale = 1.0;  // sigma_J^*
};

struct ParetoPoint {
    double alpha = 0.0;
    double mean = 0.0;
    double std_dev = 0.0;
    double volume = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Weighted robust compliance minimisation under a volume constraint:
/// min alpha_E Jbar(s) + alpha_sigma sigma_J(s) s.t. V(s) <= V_max,
/// 0 <= s <= 1, solved with MMA. One stiffness factorisation per iteration
/// serves the equilibrium solve and all gradient back-substitutions.
class RobustOptimizer {
public:
    RobustOptimizer(const Lattice& lattice, FieldModel field, OptimizationConfig config,
                    const FilterOperator* filter = nullptr,
                    const PenalizationCurve* curve = nullptr)
        : lattice_(lattice), field_(std::move(field)), config_(config),
          filter_(filter), curve_(curve) {
        if (config_.area_max <= 0.0)
            throw InvalidArgument("area_max must be positive");
        if (config_.area_min <= 0.0) config_.area_min = 1e-4 * config_.area_max;
        if (config_.area_min >= config_.area_max)
            throw InvalidArgument("need area_min < area_max");
        lengths_.resize(lattice.member_count());
        for (const auto& m : lattice.members()) lengths_[m.id] = m.length;
        if (config_.volume_max <= config_.area_min * lengths_.sum())
            throw InvalidArgument("volume bound is infeasible: V_max <= A_min * total length");
        if (field_.mean().size() != lattice.member_count())
            throw InvalidArgument("field mean size does not match member count");
    }

    const Lattice& lattice() const { return lattice_; }
    const FieldModel& field() const { return field_; }
    const OptimizationConfig& config() const { return config_; }
    const Eigen::VectorXd& lengths() const { return lengths_; }

    DesignState map_design(const Eigen::VectorXd& s) const {
        return areas_from_design(s, filter_, curve_, config_.area_min,
                                 config_.area_max, lengths_);
    }

    Evaluation evaluate(const Eigen::VectorXd& s, double alpha_mean,
                        double alpha_std) const {
        Evaluation ev;
        ev.state = map_design(s);

        std::vector<MemberState> states(lattice_.member_count());
        for (int e = 0; e < lattice_.member_count(); ++e)
            states[e] = {field_.mean()[e], ev.state.areas[e]};
        StiffnessSystem system(lattice_, states);
        const MeanSolution sol = solve_mean(lattice_, system);

        const Eigen::VectorXd dJ_dr =
            compliance_gradient_wrt_modulus(lattice_, ev.state.areas, sol.elongation);
        const StdDevResult sd = std_dev_compliance(dJ_dr, field_);

        ev.mean = sol.compliance;
        ev.std_dev = sd.value;
        ev.volume = ev.state.volume;
        ev.constraint = ev.volume - config_.volume_max;

        // Gradients w.r.t. member areas, pulled back through penalisation and
        // filter afterwards.
        const Eigen::VectorXd unit_chain = Eigen::VectorXd::Ones(lattice_.member_count());
        const Eigen::VectorXd grad_mean_area =
            grad_mean_compliance(lattice_, field_.mean(), unit_chain, sol.elongation);
        Eigen::VectorXd grad_cost_area = alpha_mean * grad_mean_area;
        if (alpha_std != 0.0) {
            const Eigen::VectorXd grad_std_area = grad_std_compliance(
                lattice_, system, field_.mean(), ev.state.areas, unit_chain,
                sol.elongation, sd.w, sd.value, config_.gradient_path, config_.threads);
            grad_cost_area += alpha_std * grad_std_area;
        }
        ev.cost = alpha_mean * ev.mean + alpha_std * ev.std_dev;
        ev.grad_cost = chain_to_raw(grad_cost_area, ev.state, filter_,
                                    config_.area_min, config_.area_max);
        ev.grad_constraint = chain_to_raw(lengths_, ev.state, filter_,
                                          config_.area_min, config_.area_max);
        return ev;
    }

    /// Uniform feasible start with the volume constraint active.
    Eigen::VectorXd initial_design() const {
        const double total = lengths_.sum();
        double target = (config_.volume_max / total - config_.area_min) /
                        (config_.area_max - config_.area_min);
        target = std::clamp(target, 0.0, 1.0);
        double s0 = target;
        if (curve_ && !curve_->is_identity()) {
            // invert the monotone penalisation curve
            double lo = 0.0, hi = 1.0;
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (lo + hi);
                if (curve_->value(mid) < target)
                    lo = mid;
                else
                    hi = mid;
            }
            s0 = 0.5 * (lo + hi);
        }
        return Eigen::VectorXd::Constant(lattice_.member_count(), s0);
    }

    OptimizationResult run_weighted(double alpha_mean, double alpha_std) const {
        const int n = lattice_.member_count();
        MmaSolver mma(Eigen::VectorXd::Zero(n), Eigen::VectorXd::Ones(n), config_.mma);
        Eigen::VectorXd s = initial_design();

        OptimizationResult res;
        res.history.reserve(config_.max_iterations);
        for (int it = 1; it <= config_.max_iterations; ++it) {
            const Evaluation ev = evaluate(s, alpha_mean, alpha_std);
            const Eigen::VectorXd s_new =
                mma.step(s, ev.grad_cost, ev.constraint, ev.grad_constraint);
            const double change = (s_new - s).lpNorm<Eigen::Infinity>();

            HistoryRow row;
            row.iteration = it;
            row.mean = ev.mean;
            row.std_dev = ev.std_dev;
            row.cost = ev.cost;
            row.volume = ev.volume;
            row.max_change = change;
            row.kkt = mma.kkt_residual();
            res.history.push_back(row);

            s = s_new;
            res.iterations = it;
            if (change < config_.tolerance) {
                res.converged = true;
                break;
            }
        }

        // The subproblem satisfies only the MMA model of the volume
        // constraint; repair any leftover infeasibility by a uniform design
        // scale (the volume is monotone in it).
        if (map_design(s).volume > config_.volume_max) {
            double lo = 0.0, hi = 1.0;
            for (int it = 0; it < 100; ++it) {
                const double mid = 0.5 * (lo + hi);
                if (map_design(mid * s).volume > config_.volume_max)
                    hi = mid;
                else
                    lo = mid;
            }
            s *= lo;
        }

        const Evaluation final_ev = evaluate(s, alpha_mean, alpha_std);
        res.design = s;
        res.state = final_ev.state;
        res.mean = final_ev.mean;
        res.std_dev = final_ev.std_dev;
        res.cost = final_ev.cost;
        res.volume = final_ev.volume;
        return res;
    }

    /// Single run at weight alpha in [0,1]. Missing normalisation constants
    /// are fixed by auxiliary runs at alpha = 1 and alpha = 0, matching the
    /// initial design and stopping rule of the main run.
    OptimizationResult run(double alpha, std::optional<double> mean_scale = {},
                           std::optional<double> std_scale = {}) const {
        if (alpha < 0.0 || alpha > 1.0)
            throw InvalidArgument("alpha must lie in [0,1]");
        if (mean_scale && !(*mean_scale > 0.0))
            throw InvalidArgument("mean normalisation constant must be positive");
        if (std_scale && !(*std_scale > 0.0))
            throw InvalidArgument("std normalisation constant must be positive");

        if (alpha == 1.0 && !mean_scale) {
            OptimizationResult res = run_weighted(1.0, 0.0);
            res.mean_scale = res.mean;
            res.std_scale = 1.0;
            return res;
        }
        if (alpha == 0.0 && !std_scale) {
            OptimizationResult res = run_weighted(0.0, 1.0);
            res.std_scale = res.std_dev;
            res.mean_scale = 1.0;
            return res;
        }

        double jstar = 1.0, sstar = 1.0;
        if (alpha > 0.0) jstar = mean_scale ? *mean_scale : run_weighted(1.0, 0.0).mean;
        if (alpha < 1.0) sstar = std_scale ? *std_scale : run_weighted(0.0, 1.0).std_dev;
        if (!(jstar > 0.0) || !(sstar > 0.0))
            throw NumericalError("normalisation runs produced non-positive constants");

        OptimizationResult res = run_weighted(alpha / jstar, (1.0 - alpha) / sstar);
        res.mean_scale = jstar;
        res.std_scale = sstar;
        return res;
    }

    /// Trade-off front over a list of weights. The list must contain 1 and 0;
    /// those runs fix the normalisation constants for the rest.
    std::vector<ParetoPoint> pareto(const std::vector<double>& alphas,
                                    std::vector<OptimizationResult>* results = nullptr) const {
        bool has_one = false, has_zero = false;
        for (double a : alphas) {
            if (a == 1.0) has_one = true;
            if (a == 0.0) has_zero = true;
            if (a < 0.0 || a > 1.0)
                throw InvalidArgument("alpha values must lie in [0,1]");
        }
        if (!has_one || !has_zero)
            throw InvalidArgument(
                "pareto sweep needs alpha = 1 and alpha = 0 to fix the normalisation");

        const OptimizationResult at_one = run(1.0);
        const OptimizationResult at_zero = run(0.0);
        const double jstar = at_one.mean;
        const double sstar = at_zero.std_dev;

        std::vector<ParetoPoint> front;
        front.reserve(alphas.size());
        for (double a : alphas) {
            OptimizationResult r;
            if (a == 1.0)
                r = at_one;
            else if (a == 0.0)
                r = at_zero;
            else
                r = run(a, jstar, sstar);
            ParetoPoint p;
            p.alpha = a;
            p.mean = r.mean;
            p.std_dev = r.std_dev;
            p.volume = r.volume;
            p.iterations = r.iterations;
            p.converged = r.converged;
            front.push_back(p);
            if (results) results->push_back(std::move(r));
        }
        return front;
    }

private:
    const Lattice& lattice_;
    FieldModel field_;
    OptimizationConfig config_;
    const FilterOperator* filter_;
    const PenalizationCurve* curve_;
    Eigen::VectorXd lengths_;
};

} // namespace latro
