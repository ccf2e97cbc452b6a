#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "latro/errors.hpp"

namespace latro {

struct MmaOptions {
    double asymptote_init = 0.2;   // initial asymptote distance, times the range
    double asymptote_shrink = 0.7; // on oscillation
    double asymptote_grow = 1.2;   // on monotone progress
    double asymptote_gap_min = 1e-5; // smallest asymptote distance, times the range
    double move_limit = 0.2;       // per-iteration move, times the range
    double bound_margin = 1e-5;    // asymptote-to-bound margin
    double regularization = 1e-5;  // raa0 term of the subproblem
    int dual_max_iterations = 200;
    double dual_tolerance = 1e-12;
};

/// Method of Moving Asymptotes for box-constrained problems with a single
/// inequality constraint. Each step builds Svanberg's separable convex
/// approximation around the current iterate and solves it through its
/// one-dimensional dual with a safeguarded Newton iteration (bisection
/// fallback). Deterministic; no internal randomness.
class MmaSolver {
public:
    MmaSolver(Eigen::VectorXd lower, Eigen::VectorXd upper, MmaOptions options = {})
        : options_(options), lower_(std::move(lower)), upper_(std::move(upper)) {
        if (lower_.size() != upper_.size())
            throw InvalidArgument("MMA bound vectors differ in size");
        for (int j = 0; j < lower_.size(); ++j)
            if (!(upper_[j] > lower_[j]))
                throw InvalidArgument("MMA needs lower < upper bounds");
        const int n = static_cast<int>(lower_.size());
        low_.resize(n);
        upp_.resize(n);
        xold1_.resize(n);
        xold2_.resize(n);
    }

    /// One MMA update. df is the cost gradient, g the constraint value and dg
    /// its gradient, all at x. Returns the subproblem minimiser.
    Eigen::VectorXd step(const Eigen::VectorXd& x, const Eigen::VectorXd& df,
                         double g, const Eigen::VectorXd& dg) {
        const int n = static_cast<int>(x.size());
        if (df.size() != n || dg.size() != n || lower_.size() != n)
            throw InvalidArgument("MMA step dimension mismatch");

        const Eigen::ArrayXd range =
            (upper_ - lower_).array().max(1e-5); // guards degenerate boxes
        update_asymptotes(x, range);

        // Feasible sub-box: stay inside bounds, move limits and strictly
        // inside the asymptotes.
        Eigen::ArrayXd alfa(n), beta(n);
        for (int j = 0; j < n; ++j) {
            alfa[j] = std::max({lower_[j], low_[j] + options_.bound_margin * (x[j] - low_[j]),
                                x[j] - options_.move_limit * range[j]});
            beta[j] = std::min({upper_[j], upp_[j] - options_.bound_margin * (upp_[j] - x[j]),
                                x[j] + options_.move_limit * range[j]});
        }

        const Eigen::ArrayXd ux = upp_.array() - x.array();
        const Eigen::ArrayXd xl = x.array() - low_.array();
        const Eigen::ArrayXd reg = options_.regularization / range;
        p0_ = ux.square() * (df.array().max(0.0) + 0.001 * df.array().abs() + reg);
        q0_ = xl.square() * ((-df.array()).max(0.0) + 0.001 * df.array().abs() + reg);
        p1_ = ux.square() * (dg.array().max(0.0) + 0.001 * dg.array().abs() + reg);
        q1_ = xl.square() * ((-dg.array()).max(0.0) + 0.001 * dg.array().abs() + reg);
        b_ = (p1_ / ux + q1_ / xl).sum() - g;
        alfa_ = alfa;
        beta_ = beta;

        solve_dual();
        const Eigen::VectorXd x_new = primal(lambda_).matrix();
        kkt_residual_ = subproblem_kkt(x_new);

        xold2_ = xold1_;
        xold1_ = x;
        ++iteration_;
        return x_new;
    }

    double multiplier() const { return lambda_; }
    double kkt_residual() const { return kkt_residual_; }
    bool last_subproblem_feasible() const { return subproblem_feasible_; }
    const Eigen::VectorXd& lower_asymptote() const { return low_; }
    const Eigen::VectorXd& upper_asymptote() const { return upp_; }

private:
    void update_asymptotes(const Eigen::VectorXd& x, const Eigen::ArrayXd& range) {
        const int n = static_cast<int>(x.size());
        if (iteration_ < 2) {
            low_ = x.array() - options_.asymptote_init * range;
            upp_ = x.array() + options_.asymptote_init * range;
        } else {
            for (int j = 0; j < n; ++j) {
                const double trend = (x[j] - xold1_[j]) * (xold1_[j] - xold2_[j]);
                double factor = 1.0;
                if (trend > 0.0)
                    factor = options_.asymptote_grow;
                else if (trend < 0.0)
                    factor = options_.asymptote_shrink;
                low_[j] = x[j] - factor * (xold1_[j] - low_[j]);
                upp_[j] = x[j] + factor * (upp_[j] - xold1_[j]);
                low_[j] = std::max(low_[j], x[j] - 10.0 * range[j]);
                low_[j] = std::min(low_[j], x[j] - options_.asymptote_gap_min * range[j]);
                upp_[j] = std::min(upp_[j], x[j] + 10.0 * range[j]);
                upp_[j] = std::max(upp_[j], x[j] + options_.asymptote_gap_min * range[j]);
            }
        }
    }

    Eigen::ArrayXd primal(double lambda) const {
        const Eigen::ArrayXd sp = (p0_ + lambda * p1_).sqrt();
        const Eigen::ArrayXd sq = (q0_ + lambda * q1_).sqrt();
        const Eigen::ArrayXd y =
            (sp * low_.array() + sq * upp_.array()) / (sp + sq);
        return y.max(alfa_).min(beta_);
    }

    // Subproblem constraint value at the primal minimiser for given lambda;
    // non-increasing in lambda because the dual is concave.
    double dual_residual(double lambda) const {
        const Eigen::ArrayXd y = primal(lambda);
        return (p1_ / (upp_.array() - y) + q1_ / (y - low_.array())).sum() - b_;
    }

    double dual_residual_derivative(double lambda) const {
        const Eigen::ArrayXd sp = (p0_ + lambda * p1_).sqrt();
        const Eigen::ArrayXd sq = (q0_ + lambda * q1_).sqrt();
        const Eigen::ArrayXd y_free =
            (sp * low_.array() + sq * upp_.array()) / (sp + sq);
        double d = 0.0;
        for (int j = 0; j < sp.size(); ++j) {
            if (y_free[j] <= alfa_[j] || y_free[j] >= beta_[j]) continue; // clamped
            const double dsp = p1_[j] / (2.0 * sp[j]);
            const double dsq = q1_[j] / (2.0 * sq[j]);
            const double dy = (upp_[j] - low_[j]) * (dsq * sp[j] - dsp * sq[j]) /
                              ((sp[j] + sq[j]) * (sp[j] + sq[j]));
            const double uy = upp_[j] - y_free[j];
            const double yl = y_free[j] - low_[j];
            d += (p1_[j] / (uy * uy) - q1_[j] / (yl * yl)) * dy;
        }
        return d;
    }

    void solve_dual() {
        subproblem_feasible_ = true;
        const double tol = options_.dual_tolerance * std::max(1.0, std::abs(b_));
        if (dual_residual(0.0) <= tol) {
            lambda_ = 0.0;
            return;
        }
        double lo = 0.0, hi = 1.0;
        int expansions = 0;
        while (dual_residual(hi) > 0.0) {
            lo = hi;
            hi *= 10.0;
            if (++expansions > 14) {
                // Constraint approximation cannot be met inside the move
                // limits; take the most feasible point and recover next step.
                lambda_ = hi;
                subproblem_feasible_ = false;
                return;
            }
        }
        double lambda = 0.5 * (lo + hi);
        for (int it = 0; it < options_.dual_max_iterations; ++it) {
            const double h = dual_residual(lambda);
            if (std::abs(h) <= tol) break;
            if (h > 0.0)
                lo = lambda;
            else
                hi = lambda;
            const double dh = dual_residual_derivative(lambda);
            double next = dh < 0.0 ? lambda - h / dh : 0.5 * (lo + hi);
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            lambda = next;
            if (hi - lo <= 1e-16 * std::max(1.0, hi)) break;
        }
        lambda_ = lambda;
        if (std::abs(dual_residual(lambda_)) > 1e-6 * std::max(1.0, std::abs(b_)))
            throw OptimizationAbort("MMA dual solver did not converge");
    }

    double subproblem_kkt(const Eigen::VectorXd& x_new) const {
        double r = 0.0;
        for (int j = 0; j < x_new.size(); ++j) {
            const double uy = upp_[j] - x_new[j];
            const double yl = x_new[j] - low_[j];
            const double plam = p0_[j] + lambda_ * p1_[j];
            const double qlam = q0_[j] + lambda_ * q1_[j];
            const double station = plam / (uy * uy) - qlam / (yl * yl);
            const double scale = plam / (uy * uy) + qlam / (yl * yl);
            double v;
            if (x_new[j] <= alfa_[j] + 1e-15 * (beta_[j] - alfa_[j]))
                v = std::max(0.0, -station);
            else if (x_new[j] >= beta_[j] - 1e-15 * (beta_[j] - alfa_[j]))
                v = std::max(0.0, station);
            else
                v = std::abs(station);
            r = std::max(r, v / std::max(scale, 1e-300));
        }
        const double h = dual_residual(lambda_);
        if (subproblem_feasible_) {
            r = std::max(r, std::max(0.0, h) / std::max(1.0, std::abs(b_)));
            r = std::max(r, std::abs(lambda_ * h) /
                                std::max(1.0, std::abs(lambda_ * b_)));
        }
        return r;
    }

    MmaOptions options_;
    Eigen::VectorXd lower_, upper_;
    Eigen::VectorXd low_, upp_;
    Eigen::VectorXd xold1_, xold2_;
    Eigen::ArrayXd p0_, q0_, p1_, q1_, alfa_, beta_;
    double b_ = 0.0;
    double lambda_ = 0.0;
    double kkt_residual_ = 0.0;
    bool subproblem_feasible_ = true;
    int iteration_ = 0;
};

} // namespace latro
