#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "latro/errors.hpp"
#include "latro/lattice.hpp"

namespace latro {

/// Length-weighted cone-kernel density filter. Row e of the weight matrix is
/// W_ei = (w_ei/l_i) / sum_k (w_ek/l_k) with w_ei = max(0, R - |c_e - c_i|),
/// so rows sum to one and constant designs are preserved.
class FilterOperator {
public:
    static FilterOperator build(const Lattice& lattice, double radius) {
        if (radius < 0.0) throw InvalidArgument("filter radius must be non-negative");
        const int n = lattice.member_count();
        FilterOperator op;
        op.radius_ = radius;
        op.weights_.resize(n, n);
        if (radius == 0.0) {
            op.weights_.setIdentity();
            return op;
        }

        // Uniform binning with cell size R; candidates live in adjacent bins.
        std::map<std::array<int64_t, 3>, std::vector<int>> bins;
        auto bin_of = [radius](const Eigen::Vector3d& c) {
            return std::array<int64_t, 3>{
                static_cast<int64_t>(std::floor(c[0] / radius)),
                static_cast<int64_t>(std::floor(c[1] / radius)),
                static_cast<int64_t>(std::floor(c[2] / radius))};
        };
        const auto& members = lattice.members();
        for (const auto& m : members) bins[bin_of(m.centroid)].push_back(m.id);

        std::vector<Eigen::Triplet<double>> triplets;
        for (int e = 0; e < n; ++e) {
            const auto be = bin_of(members[e].centroid);
            double denom = 0.0;
            std::vector<std::pair<int, double>> row;
            for (int64_t dx = -1; dx <= 1; ++dx)
                for (int64_t dy = -1; dy <= 1; ++dy)
                    for (int64_t dz = -1; dz <= 1; ++dz) {
                        auto it = bins.find({be[0] + dx, be[1] + dy, be[2] + dz});
                        if (it == bins.end()) continue;
                        for (int i : it->second) {
                            double dist =
                                (members[e].centroid - members[i].centroid).norm();
                            double w = radius - dist;
                            if (w <= 0.0) continue;
                            double v = w / members[i].length;
                            row.emplace_back(i, v);
                            denom += v;
                        }
                    }
            for (const auto& [i, v] : row) triplets.emplace_back(e, i, v / denom);
        }
        op.weights_.setFromTriplets(triplets.begin(), triplets.end());
        op.weights_.makeCompressed();
        return op;
    }

    double radius() const { return radius_; }
    const Eigen::SparseMatrix<double>& matrix() const { return weights_; }

    /// Filtered design s_hat = W s.
    Eigen::VectorXd apply(const Eigen::VectorXd& s) const { return weights_ * s; }

    /// Reverse chain rule: gradient w.r.t. raw design is W^T grad_hat.
    Eigen::VectorXd chain(const Eigen::VectorXd& grad_hat) const {
        return weights_.transpose() * grad_hat;
    }

private:
    Eigen::SparseMatrix<double> weights_;
    double radius_ = 0.0;
};

namespace detail {

/// Clamped B-spline curve in the plane, evaluated by De Boor's algorithm.
struct BSplineCurve {
    int degree = 4;
    std::vector<Eigen::Vector2d> control;
    std::vector<double> knots; // clamped: degree+1 repeats at both ends

    static BSplineCurve clamped(const std::vector<Eigen::Vector2d>& ctrl, int degree) {
        if (static_cast<int>(ctrl.size()) < degree + 1)
            throw InvalidArgument("B-spline needs at least degree+1 control points");
        BSplineCurve c;
        c.degree = degree;
        c.control = ctrl;
        const int n = static_cast<int>(ctrl.size());
        const int interior = n - degree - 1;
        for (int i = 0; i <= degree; ++i) c.knots.push_back(0.0);
        for (int i = 1; i <= interior; ++i)
            c.knots.push_back(static_cast<double>(i) / (interior + 1));
        for (int i = 0; i <= degree; ++i) c.knots.push_back(1.0);
        return c;
    }

    int span(double u) const {
        const int n = static_cast<int>(control.size());
        if (u >= 1.0) return n - 1;
        int k = degree;
        while (k < n - 1 && !(u < knots[k + 1])) ++k;
        return k;
    }

    Eigen::Vector2d value(double u) const {
        const int k = span(u);
        const int p = degree;
        std::vector<Eigen::Vector2d> d(p + 1);
        for (int j = 0; j <= p; ++j) d[j] = control[j + k - p];
        for (int r = 1; r <= p; ++r)
            for (int j = p; j >= r; --j) {
                const double den = knots[j + 1 + k - r] - knots[j + k - p];
                const double alpha = den > 0.0 ? (u - knots[j + k - p]) / den : 0.0;
                d[j] = (1.0 - alpha) * d[j - 1] + alpha * d[j];
            }
        return d[p];
    }

    /// Derivative curve of degree-1 lower; hodograph control points.
    BSplineCurve derivative() const {
        BSplineCurve h;
        h.degree = degree - 1;
        const int n = static_cast<int>(control.size());
        for (int i = 0; i + 1 < n; ++i) {
            const double den = knots[i + degree + 1] - knots[i + 1];
            h.control.push_back(den > 0.0
                                    ? (degree / den * (control[i + 1] - control[i])).eval()
                                    : Eigen::Vector2d::Zero().eval());
        }
        h.knots.assign(knots.begin() + 1, knots.end() - 1);
        return h;
    }
};

} // namespace detail

/// Piecewise penalisation map of filtered densities: a clamped degree-4
/// B-spline on [0, s*] joined C1 to the identity line on [s*, 1]. The curve
/// keeps s_tilde(0) = 0, s_tilde(s) = s for s >= s*, unit end slope, and is
/// monotone so intermediate densities are pushed towards 0 or past s*.
class PenalizationCurve {
public:
    static PenalizationCurve bspline(const std::vector<Eigen::Vector2d>& ctrl,
                                     double s_star) {
        if (!(s_star > 0.0 && s_star < 1.0))
            throw InvalidArgument("penalisation threshold must lie in (0,1)");
        if (ctrl.size() < 5)
            throw InvalidArgument("penalisation spline needs at least 5 control points");
        const auto& first = ctrl.front();
        const auto& last = ctrl.back();
        if (first.norm() > 1e-12)
            throw InvalidArgument("penalisation spline must start at (0,0)");
        if ((last - Eigen::Vector2d(s_star, s_star)).norm() > 1e-12)
            throw InvalidArgument("penalisation spline must end at (s*, s*)");
        const auto& prev = ctrl[ctrl.size() - 2];
        const Eigen::Vector2d dir = last - prev;
        if (!(dir[0] > 0.0) || std::abs(dir[1] / dir[0] - 1.0) > 1e-9)
            throw InvalidArgument("penalisation spline end slope must equal 1 (C1 join)");
        for (std::size_t i = 0; i + 1 < ctrl.size(); ++i) {
            if (!(ctrl[i + 1][0] > ctrl[i][0] - 1e-15))
                throw InvalidArgument("penalisation control x-coordinates must increase");
            if (ctrl[i + 1][1] < ctrl[i][1] - 1e-15)
                throw InvalidArgument("penalisation control y-coordinates must not decrease");
        }

        PenalizationCurve c;
        c.s_star_ = s_star;
        c.curve_ = detail::BSplineCurve::clamped(ctrl, 4);
        c.hodograph_ = c.curve_.derivative();
        return c;
    }

    /// Fig.-2-like preset: flat near zero, steep before s*, tangent to the
    /// identity at s* = 0.5.
    static PenalizationCurve preset_default() {
        return bspline({{0.0, 0.0},
                        {0.1, 0.0},
                        {0.2, 0.0},
                        {0.3, 0.015},
                        {0.42, 0.42},
                        {0.5, 0.5}},
                       0.5);
    }

    /// Less curved variant used for comparison sweeps.
    static PenalizationCurve preset_mild() {
        return bspline({{0.0, 0.0},
                        {0.1, 0.02},
                        {0.2, 0.06},
                        {0.3, 0.15},
                        {0.42, 0.42},
                        {0.5, 0.5}},
                       0.5);
    }

    static PenalizationCurve identity() {
        PenalizationCurve c;
        c.identity_ = true;
        c.s_star_ = 0.0;
        return c;
    }

    bool is_identity() const { return identity_; }
    double s_star() const { return s_star_; }

    double value(double s) const {
        s = validate_input(s);
        if (identity_ || s >= s_star_) return s;
        return curve_.value(invert_x(s))[1];
    }

    double derivative(double s) const {
        s = validate_input(s);
        if (identity_ || s >= s_star_) return 1.0;
        const double u = invert_x(s);
        const Eigen::Vector2d d = hodograph_.value(u);
        if (!(d[0] > 0.0)) return 0.0; // stationary parametrisation, flat segment
        return d[1] / d[0];
    }

    Eigen::VectorXd value(const Eigen::VectorXd& s) const {
        Eigen::VectorXd out(s.size());
        for (int i = 0; i < s.size(); ++i) out[i] = value(s[i]);
        return out;
    }

    Eigen::VectorXd derivative(const Eigen::VectorXd& s) const {
        Eigen::VectorXd out(s.size());
        for (int i = 0; i < s.size(); ++i) out[i] = derivative(s[i]);
        return out;
    }

private:
    static double validate_input(double s) {
        if (s < -1e-12 || s > 1.0 + 1e-12)
            throw InvalidArgument("penalisation input outside [0,1]");
        return std::clamp(s, 0.0, 1.0);
    }

    // Invert the monotone x-component of the parametric curve: x(u) = s.
    double invert_x(double s) const {
        double lo = 0.0, hi = 1.0;
        double u = s / s_star_;
        for (int it = 0; it < 100; ++it) {
            const double x = curve_.value(u)[0];
            const double err = x - s;
            if (std::abs(err) <= 1e-15 * std::max(1.0, s_star_)) return u;
            if (err > 0.0)
                hi = u;
            else
                lo = u;
            const double dx = hodograph_.value(u)[0];
            double next = dx > 0.0 ? u - err / dx : 0.5 * (lo + hi);
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            if (std::abs(next - u) < 1e-16 && hi - lo < 1e-15) return u;
            u = next;
        }
        return u;
    }

    bool identity_ = false;
    double s_star_ = 0.5;
    detail::BSplineCurve curve_;
    detail::BSplineCurve hodograph_;
};

/// Raw densities mapped through filter, penalisation and the linear area law
/// A = A_min + s_tilde (A_max - A_min), with everything needed for the chain
/// rule kept alongside.
struct DesignState {
    Eigen::VectorXd raw;
    Eigen::VectorXd filtered;
    Eigen::VectorXd penalized;
    Eigen::VectorXd areas;
    Eigen::VectorXd dpenal; // d s_tilde / d s_hat, componentwise
    double volume = 0.0;
};

inline DesignState areas_from_design(const Eigen::VectorXd& s,
                                     const FilterOperator* filter,
                                     const PenalizationCurve* curve, double area_min,
                                     double area_max,
                                     const Eigen::VectorXd& lengths) {
    if (area_min <= 0.0 || area_max <= area_min)
        throw InvalidArgument("need 0 < A_min < A_max");
    DesignState st;
    st.raw = s;
    st.filtered = filter ? filter->apply(s) : s;
    if (curve && !curve->is_identity()) {
        st.penalized = curve->value(st.filtered);
        st.dpenal = curve->derivative(st.filtered);
    } else {
        st.penalized = st.filtered;
        st.dpenal = Eigen::VectorXd::Ones(s.size());
    }
    st.areas = (area_min + (st.penalized.array() * (area_max - area_min))).matrix();
    st.volume = lengths.dot(st.areas);
    return st;
}

/// Pull a gradient with respect to member areas back to the raw design
/// variables through penalisation and filter.
inline Eigen::VectorXd chain_to_raw(const Eigen::VectorXd& grad_area,
                                    const DesignState& state,
                                    const FilterOperator* filter, double area_min,
                                    double area_max) {
    Eigen::VectorXd g =
        (grad_area.array() * state.dpenal.array() * (area_max - area_min)).matrix();
    return filter ? filter->chain(g) : g;
}

} // namespace latro
