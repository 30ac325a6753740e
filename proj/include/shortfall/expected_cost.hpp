#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "shortfall/domain.hpp"
#include "shortfall/quadrature.hpp"

namespace shortfall {

enum class KMethod {
    automatic,   // closed form when available, quadrature otherwise
    quadrature,  // always integrate numerically
};

/// K(s) = E_{f ~ prior}[V((f - s)^+)], the expected dissatisfaction of a user
/// served at rate s whose mean consumption is drawn from the prior.
class ExpectedCost {
public:
    ExpectedCost(CostFunction cost, Prior prior, KMethod method = KMethod::automatic)
        : cost_(std::move(cost)), prior_(std::move(prior)), method_(method), a_(prior_.lo()), b_(prior_.hi()) {}

    const CostFunction& cost() const { return cost_; }
    const Prior& prior() const { return prior_; }
    double a() const { return a_; }
    double b() const { return b_; }

    bool uses_closed_form() const {
        return method_ == KMethod::automatic && prior_.is<Uniform>() &&
               (cost_.is<Linear>() || cost_.is<PiecewiseLinearConcave>());
    }

    double operator()(double s) const {
        if (!(s >= 0.0) || s > b_) {
            throw domain_error("expected cost evaluated outside [0, b]");
        }
        return evaluate(s);
    }

    /// No domain check; s must lie in [0, b].
    double evaluate(double s) const {
        if (s >= b_) {
            return 0.0;
        }
        return uses_closed_form() ? closed_form(s) : by_quadrature(s);
    }

private:
    // Antiderivative W(x) = \int_0^x V for the linear and piecewise-linear families.
    double antiderivative(double x) const {
        if (const auto* lin = std::get_if<Linear>(&cost_.kind())) {
            return 0.5 * lin->slope * x * x;
        }
        const auto& pl = std::get<PiecewiseLinearConcave>(cost_.kind());
        const auto& pts = pl.points;
        double acc = 0.0;
        for (std::size_t seg = 0; seg + 1 < pts.size(); ++seg) {
            const double x0 = pts[seg].x;
            const bool last = seg + 2 == pts.size();
            const double x1 = last ? std::max(x, pts[seg + 1].x) : pts[seg + 1].x;
            if (x <= x0) {
                break;
            }
            const double hi = std::min(x, x1);
            const double slope = pl.slope(seg);
            const double w = hi - x0;
            acc += pts[seg].value * w + 0.5 * slope * w * w;
        }
        return acc;
    }

    double closed_form(double s) const {
        const double lower = std::max(s, a_) - s;
        return (antiderivative(b_ - s) - antiderivative(lower)) / (b_ - a_);
    }

    // Integrates in u = sqrt(f - s), which removes the endpoint singularity
    // of V'(x) at x = 0 (square-root costs) and leaves smooth integrands smooth.
    double by_quadrature(double s) const {
        const double lo = std::sqrt(std::max(s, a_) - s);
        const double hi = std::sqrt(b_ - s);
        std::vector<double> cuts;
        for (double j : prior_.jumps()) {
            if (j > s) {
                cuts.push_back(std::sqrt(j - s));
            }
        }
        for (double k : cost_.kinks()) {
            cuts.push_back(std::sqrt(k));
        }
        return quadrature::integrate_piecewise(
            [this, s](double u) {
                const double x = u * u;
                return 2.0 * u * cost_.evaluate(x) * prior_.density(s + x);
            },
            lo, hi, std::move(cuts));
    }

    CostFunction cost_;
    Prior prior_;
    KMethod method_;
    double a_;
    double b_;
};

inline double eval_K(const ExpectedCost& ec, double s) { return ec(s); }

struct CurvatureReport {
    bool concave_segment_empty = false;
    double scale = 0.0;                  // K(0)
    double max_second_diff_concave = 0;  // over (0, a); must be <= +tol
    double min_second_diff_convex = 0;   // over (a, b); must be >= -tol
    double tolerance = 0.0;              // 1e-6 * scale
    bool monotone = true;
    std::vector<std::string> notes;

    bool concave_ok() const { return concave_segment_empty || max_second_diff_concave <= tolerance; }
    bool convex_ok() const { return min_second_diff_convex >= -tolerance; }
    bool ok() const { return concave_ok() && convex_ok() && monotone; }
};

namespace detail {

// Second differences on a cell-centred grid of `points` nodes strictly inside (lo, hi).
template <class F>
std::vector<double> second_differences(const F& k, double lo, double hi, std::size_t points,
                                       std::vector<double>& values) {
    const double h = (hi - lo) / static_cast<double>(points);
    values.resize(points);
    for (std::size_t j = 0; j < points; ++j) {
        values[j] = k(lo + (static_cast<double>(j) + 0.5) * h);
    }
    std::vector<double> d2;
    for (std::size_t j = 1; j + 1 < points; ++j) {
        d2.push_back(values[j - 1] - 2.0 * values[j] + values[j + 1]);
    }
    return d2;
}

}  // namespace detail

/// Checks that K is concave on (0, a), convex on (a, b) and non-increasing,
/// using finite second differences on half-step offset grids.
inline CurvatureReport check_curvature(const ExpectedCost& ec, std::size_t grid_points) {
    if (grid_points < 5) {
        throw precondition_error("check_curvature needs at least 5 grid points");
    }
    CurvatureReport r;
    r.scale = ec.evaluate(0.0);
    r.tolerance = 1e-6 * r.scale;
    auto k = [&ec](double s) { return ec.evaluate(s); };

    std::vector<double> left;
    if (ec.a() > 0.0) {
        auto d2 = detail::second_differences(k, 0.0, ec.a(), grid_points, left);
        r.max_second_diff_concave = *std::max_element(d2.begin(), d2.end());
    } else {
        r.concave_segment_empty = true;
        r.notes.emplace_back("a = 0: concave segment is empty, only convexity checked");
    }
    std::vector<double> right;
    auto d2 = detail::second_differences(k, ec.a(), ec.b(), grid_points, right);
    r.min_second_diff_convex = *std::min_element(d2.begin(), d2.end());

    std::vector<double> all{r.scale};
    all.insert(all.end(), left.begin(), left.end());
    all.insert(all.end(), right.begin(), right.end());
    all.push_back(ec.evaluate(ec.b()));
    for (std::size_t j = 1; j < all.size(); ++j) {
        if (all[j] > all[j - 1] + 1e-9) {
            r.monotone = false;
            r.notes.emplace_back("K increases on the sampled grid");
            break;
        }
    }
    return r;
}

}  // namespace shortfall
