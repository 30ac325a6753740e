#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace shortfall::quadrature {

inline constexpr double kDefaultAbsTol = 1e-9;
inline constexpr int kDefaultMaxDepth = 40;

namespace detail {

template <class F>
double bisect(const F& f, double lo, double hi, double abs_tol, int depth) {
    double err = 0.0;
    const double estimate =
        boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, lo, hi, 0, 0.0, &err);
    const double roundoff = 64.0 * std::numeric_limits<double>::epsilon() * std::abs(estimate);
    if (err <= abs_tol || err <= roundoff || depth <= 0) {
        return estimate;
    }
    const double mid = 0.5 * (lo + hi);
    if (!(mid > lo && mid < hi)) {
        return estimate;
    }
    return bisect(f, lo, mid, 0.5 * abs_tol, depth - 1) + bisect(f, mid, hi, 0.5 * abs_tol, depth - 1);
}

}  // namespace detail

/// Integrates f over [lo, hi] by recursive bisection with a 15-point
/// Gauss-Kronrod rule per interval. Each half inherits half the parent's
/// absolute tolerance, so the accepted intervals sum to at most abs_tol.
template <class F>
double integrate(const F& f, double lo, double hi, double abs_tol = kDefaultAbsTol,
                 int max_depth = kDefaultMaxDepth) {
    if (!(hi > lo)) {
        return 0.0;
    }
    return detail::bisect(f, lo, hi, abs_tol, max_depth);
}

/// Same as integrate(), but first splits [lo, hi] at the given interior
/// points (kinks or jumps of the integrand). The tolerance is shared across
/// pieces in proportion to their length.
template <class F>
double integrate_piecewise(const F& f, double lo, double hi, std::vector<double> cuts,
                           double abs_tol = kDefaultAbsTol, int max_depth = kDefaultMaxDepth) {
    if (!(hi > lo)) {
        return 0.0;
    }
    cuts.push_back(lo);
    cuts.push_back(hi);
    std::sort(cuts.begin(), cuts.end());
    double total = 0.0;
    double prev = lo;
    for (double c : cuts) {
        if (c <= prev) {
            continue;
        }
        if (c > hi) {
            break;
        }
        total += integrate(f, prev, c, abs_tol * (c - prev) / (hi - lo), max_depth);
        prev = c;
    }
    return total;
}

}  // namespace shortfall::quadrature
