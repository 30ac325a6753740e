#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "shortfall/quadrature.hpp"

namespace shortfall {

// Absolute tolerance for budget and non-negativity constraints.
inline constexpr double kFeasibilityTol = 1e-9;
// Relative tolerance for "same function" and curvature identity checks.
inline constexpr double kIdentityRelTol = 1e-12;
// Grid used by the validators when sampling cost functions.
inline constexpr std::size_t kValidationGridPoints = 101;

struct domain_error : std::domain_error {
    using std::domain_error::domain_error;
};
struct feasibility_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct size_error : std::length_error {
    using std::length_error::length_error;
};
struct precondition_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Cost functions
// ---------------------------------------------------------------------------

struct Linear {
    double slope = 1.0;
    bool operator==(const Linear&) const = default;
};

struct Sqrt {
    double scale = 1.0;
    bool operator==(const Sqrt&) const = default;
};

/// V(x) = scale * ln(1 + x).
struct Log1p {
    double scale = 1.0;
    bool operator==(const Log1p&) const = default;
};

struct Breakpoint {
    double x = 0.0;
    double value = 0.0;
    bool operator==(const Breakpoint&) const = default;
};

/// Linear interpolation between breakpoints; the last segment's slope
/// continues past the final breakpoint.
struct PiecewiseLinearConcave {
    std::vector<Breakpoint> points;
    bool operator==(const PiecewiseLinearConcave&) const = default;

    double slope(std::size_t segment) const {
        const auto& p = points[segment];
        const auto& q = points[segment + 1];
        return (q.value - p.value) / (q.x - p.x);
    }
};

/// Concave, increasing dissatisfaction map with V(0) = 0.
class CostFunction {
public:
    using Kind = std::variant<Linear, Sqrt, Log1p, PiecewiseLinearConcave>;

    CostFunction() : kind_(Linear{}) {}
    CostFunction(Kind kind) : kind_(std::move(kind)) {}  // NOLINT(google-explicit-constructor)

    static CostFunction linear(double slope) { return CostFunction(Linear{slope}); }
    static CostFunction sqrt(double scale) { return CostFunction(Sqrt{scale}); }
    static CostFunction log1p(double scale) { return CostFunction(Log1p{scale}); }
    static CostFunction piecewise(std::vector<Breakpoint> points) {
        return CostFunction(PiecewiseLinearConcave{std::move(points)});
    }

    const Kind& kind() const { return kind_; }

    template <class T>
    bool is() const {
        return std::holds_alternative<T>(kind_);
    }

    double operator()(double x) const {
        if (!(x >= 0.0)) {
            throw domain_error("cost function evaluated at negative shortfall");
        }
        return evaluate(x);
    }

    /// Evaluation without the domain check, for inner loops that already
    /// guarantee x >= 0.
    double evaluate(double x) const {
        return std::visit(
            [x](const auto& k) -> double {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, Linear>) {
                    return k.slope * x;
                } else if constexpr (std::is_same_v<T, Sqrt>) {
                    return k.scale * std::sqrt(x);
                } else if constexpr (std::is_same_v<T, Log1p>) {
                    return k.scale * std::log1p(x);
                } else {
                    return eval_piecewise(k, x);
                }
            },
            kind_);
    }

    /// Abscissae where the function is not differentiable.
    std::vector<double> kinks() const {
        std::vector<double> out;
        if (const auto* pl = std::get_if<PiecewiseLinearConcave>(&kind_)) {
            for (std::size_t i = 1; i + 1 < pl->points.size(); ++i) {
                out.push_back(pl->points[i].x);
            }
        }
        return out;
    }

    bool operator==(const CostFunction&) const = default;

private:
    static double eval_piecewise(const PiecewiseLinearConcave& k, double x) {
        const auto& pts = k.points;
        if (pts.empty()) {
            return 0.0;
        }
        if (pts.size() == 1) {
            return pts.front().value;
        }
        auto it = std::upper_bound(pts.begin(), pts.end(), x,
                                   [](double v, const Breakpoint& b) { return v < b.x; });
        std::size_t seg = 0;
        if (it == pts.end()) {
            seg = pts.size() - 2;
        } else if (it != pts.begin()) {
            seg = static_cast<std::size_t>(it - pts.begin()) - 1;
        }
        seg = std::min(seg, pts.size() - 2);
        if (x == pts[seg].x) {
            return pts[seg].value;
        }
        return pts[seg].value + k.slope(seg) * (x - pts[seg].x);
    }

    Kind kind_;
};

// ---------------------------------------------------------------------------
// Priors
// ---------------------------------------------------------------------------

struct Uniform {
    bool operator==(const Uniform&) const = default;
};

/// Density proportional to exp(-rate * (f - a)) on [a, b].
struct TruncatedExponential {
    double rate = 1.0;
    bool operator==(const TruncatedExponential&) const = default;
};

/// Equal-width bins spanning [a, b]; heights are density values.
struct PiecewiseConstantNonIncreasing {
    std::vector<double> heights;
    bool operator==(const PiecewiseConstantNonIncreasing&) const = default;
};

/// Non-increasing density on a finite support [a, b].
class Prior {
public:
    using Kind = std::variant<Uniform, TruncatedExponential, PiecewiseConstantNonIncreasing>;

    Prior() = default;
    Prior(double lo, double hi, Kind kind) : lo_(lo), hi_(hi), kind_(std::move(kind)) {}

    static Prior uniform(double lo, double hi) { return {lo, hi, Uniform{}}; }
    static Prior truncated_exponential(double lo, double hi, double rate) {
        return {lo, hi, TruncatedExponential{rate}};
    }
    /// Bins of equal width; weights are rescaled into a density.
    static Prior piecewise_constant(double lo, double hi, std::vector<double> weights) {
        const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
        const double width = (hi - lo) / static_cast<double>(std::max<std::size_t>(weights.size(), 1));
        // Weights that already form a density are kept bit-for-bit.
        if (total > 0.0 && width > 0.0 && std::abs(total * width - 1.0) > 1e-14) {
            for (double& w : weights) {
                w /= total * width;
            }
        }
        return {lo, hi, PiecewiseConstantNonIncreasing{std::move(weights)}};
    }

    double lo() const { return lo_; }
    double hi() const { return hi_; }
    const Kind& kind() const { return kind_; }

    template <class T>
    bool is() const {
        return std::holds_alternative<T>(kind_);
    }

    double density(double f) const {
        if (f < lo_ || f > hi_ || !(hi_ > lo_)) {
            return 0.0;
        }
        return std::visit(
            [&](const auto& k) -> double {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, Uniform>) {
                    return 1.0 / (hi_ - lo_);
                } else if constexpr (std::is_same_v<T, TruncatedExponential>) {
                    const double mass = -std::expm1(-k.rate * (hi_ - lo_));
                    return k.rate * std::exp(-k.rate * (f - lo_)) / mass;
                } else {
                    if (k.heights.empty()) {
                        return 0.0;
                    }
                    const double width = (hi_ - lo_) / static_cast<double>(k.heights.size());
                    auto bin = static_cast<std::size_t>((f - lo_) / width);
                    return k.heights[std::min(bin, k.heights.size() - 1)];
                }
            },
            kind_);
    }

    /// Interior points where the density jumps.
    std::vector<double> jumps() const {
        std::vector<double> out;
        if (const auto* pc = std::get_if<PiecewiseConstantNonIncreasing>(&kind_)) {
            const double width = (hi_ - lo_) / static_cast<double>(pc->heights.size());
            for (std::size_t i = 1; i < pc->heights.size(); ++i) {
                out.push_back(lo_ + width * static_cast<double>(i));
            }
        }
        return out;
    }

    double total_mass() const {
        return quadrature::integrate_piecewise([this](double f) { return density(f); }, lo_, hi_, jumps(),
                                               1e-12);
    }

    double mean() const {
        return quadrature::integrate_piecewise([this](double f) { return f * density(f); }, lo_, hi_,
                                               jumps(), 1e-12);
    }

    bool operator==(const Prior&) const = default;

private:
    double lo_ = 0.0;
    double hi_ = 1.0;
    Kind kind_ = Uniform{};
};

// ---------------------------------------------------------------------------
// Instances and allocations
// ---------------------------------------------------------------------------

struct KnownInstance {
    std::vector<CostFunction> costs;
    std::vector<double> mean_rates;
    double budget = 0.0;

    std::size_t size() const { return mean_rates.size(); }
    bool operator==(const KnownInstance&) const = default;
};

struct UnknownInstance {
    std::vector<CostFunction> costs;
    std::vector<Prior> priors;
    double budget = 0.0;
    bool symmetric = false;

    std::size_t size() const { return priors.size(); }
    bool operator==(const UnknownInstance&) const = default;
};

struct Allocation {
    std::vector<double> rates;
    double slack = 0.0;

    static Allocation with_budget(std::vector<double> rates, double budget) {
        const double used = std::accumulate(rates.begin(), rates.end(), 0.0);
        return {std::move(rates), budget - used};
    }

    double total() const { return std::accumulate(rates.begin(), rates.end(), 0.0); }
    std::size_t size() const { return rates.size(); }
    bool operator==(const Allocation&) const = default;
};

using ValidationReport = std::vector<std::string>;

namespace detail {

inline std::string user_tag(std::size_t i) { return "user " + std::to_string(i) + ": "; }

// With sample = false only the parameters are checked. That is exact for the
// built-in families, whose shape follows from their parameters.
inline void check_cost(const CostFunction& v, double x_max, const std::string& tag, ValidationReport& out,
                       bool sample = true) {
    if (const auto* pl = std::get_if<PiecewiseLinearConcave>(&v.kind())) {
        const auto& pts = pl->points;
        if (pts.size() < 2) {
            out.push_back(tag + "piecewise-linear cost needs at least two breakpoints");
            return;
        }
        if (pts.front().x != 0.0) {
            out.push_back(tag + "piecewise-linear cost must start at x = 0");
        }
        for (std::size_t i = 1; i < pts.size(); ++i) {
            if (!(pts[i].x > pts[i - 1].x)) {
                out.push_back(tag + "piecewise-linear breakpoints must have strictly increasing x");
                return;
            }
        }
        for (std::size_t s = 0; s + 1 < pts.size(); ++s) {
            if (pl->slope(s) < 0.0) {
                out.push_back(tag + "cost is not monotone increasing");
                break;
            }
        }
        for (std::size_t s = 1; s + 1 < pts.size(); ++s) {
            if (pl->slope(s) > pl->slope(s - 1) * (1.0 + kIdentityRelTol)) {
                out.push_back(tag + "piecewise-linear slopes must be non-increasing (cost not concave)");
                break;
            }
        }
    } else {
        const double param = std::visit(
            [](const auto& k) -> double {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, Linear>) {
                    return k.slope;
                } else if constexpr (std::is_same_v<T, PiecewiseLinearConcave>) {
                    return 0.0;
                } else {
                    return k.scale;
                }
            },
            v.kind());
        if (!(param >= 0.0) || !std::isfinite(param)) {
            out.push_back(tag + "cost is not monotone increasing");
            return;
        }
    }

    if (std::abs(v.evaluate(0.0)) > kIdentityRelTol) {
        out.push_back(tag + "V(0) ≠ 0");
    }
    if (!sample || !(x_max > 0.0)) {
        return;
    }
    std::vector<double> vals(kValidationGridPoints);
    const double h = x_max / static_cast<double>(kValidationGridPoints - 1);
    for (std::size_t k = 0; k < vals.size(); ++k) {
        vals[k] = v.evaluate(h * static_cast<double>(k));
    }
    for (std::size_t k = 1; k < vals.size(); ++k) {
        if (vals[k] < vals[k - 1] - kIdentityRelTol * std::abs(vals[k - 1])) {
            out.push_back(tag + "cost is not monotone increasing on the sampled grid");
            break;
        }
    }
    for (std::size_t k = 1; k + 1 < vals.size(); ++k) {
        const double chord = 0.5 * (vals[k - 1] + vals[k + 1]);
        if (vals[k] < chord - kIdentityRelTol * std::max(1.0, std::abs(chord))) {
            out.push_back(tag + "cost is not concave on the sampled grid");
            break;
        }
    }
}

inline void check_prior(const Prior& p, const std::string& tag, ValidationReport& out) {
    if (!(p.lo() >= 0.0) || !(p.hi() > p.lo()) || !std::isfinite(p.hi())) {
        out.push_back(tag + "support must satisfy a < b");
        return;
    }
    bool params_ok = true;
    std::visit(
        [&](const auto& k) {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, TruncatedExponential>) {
                if (!(k.rate > 0.0) || !std::isfinite(k.rate)) {
                    out.push_back(tag + "truncated exponential rate must be positive");
                    params_ok = false;
                }
            } else if constexpr (std::is_same_v<T, PiecewiseConstantNonIncreasing>) {
                if (k.heights.empty()) {
                    out.push_back(tag + "piecewise-constant prior needs at least one bin");
                    params_ok = false;
                    return;
                }
                for (double h : k.heights) {
                    if (!(h >= 0.0)) {
                        out.push_back(tag + "prior density must be non-negative");
                        params_ok = false;
                        return;
                    }
                }
            }
        },
        p.kind());
    if (!params_ok) {
        return;
    }
    if (std::abs(p.total_mass() - 1.0) > 1e-9) {
        out.push_back(tag + "prior density does not integrate to 1");
    }
    const std::size_t n = kValidationGridPoints;
    double prev = p.density(p.lo());
    for (std::size_t k = 1; k < n; ++k) {
        const double f = p.lo() + (p.hi() - p.lo()) * static_cast<double>(k) / static_cast<double>(n - 1);
        const double cur = p.density(f);
        if (cur > prev + 1e-12) {
            out.push_back(tag + "prior density must be non-increasing");
            break;
        }
        prev = cur;
    }
}

}  // namespace detail

inline ValidationReport validate_cost(const CostFunction& v, double x_max) {
    ValidationReport out;
    detail::check_cost(v, x_max, "", out);
    return out;
}

inline ValidationReport validate_prior(const Prior& p) {
    ValidationReport out;
    detail::check_prior(p, "", out);
    return out;
}

namespace detail {

inline ValidationReport check_known(const KnownInstance& inst, bool sample) {
    ValidationReport out;
    if (inst.size() == 0) {
        out.push_back("instance must have at least one user");
    }
    if (inst.costs.size() != inst.mean_rates.size()) {
        out.push_back("costs and mean rates must have the same length");
        return out;
    }
    if (!(inst.budget > 0.0) || !std::isfinite(inst.budget)) {
        out.push_back("budget must be positive");
    }
    double f_max = 0.0;
    for (std::size_t i = 0; i < inst.size(); ++i) {
        const double f = inst.mean_rates[i];
        if (!(f > 0.0) || !std::isfinite(f)) {
            out.push_back(detail::user_tag(i) + "mean rate must be positive");
        } else {
            f_max = std::max(f_max, f);
        }
    }
    for (std::size_t i = 0; i < inst.size(); ++i) {
        check_cost(inst.costs[i], f_max, user_tag(i), out, sample);
    }
    return out;
}

}  // namespace detail

/// Full validation, sampling every cost on a grid over [0, max f].
inline ValidationReport validate_instance(const KnownInstance& inst) { return detail::check_known(inst, true); }

/// Parameter-only validation, O(m) with a small constant. The parameter checks
/// already imply what the grid pass samples for every built-in cost family.
inline ValidationReport validate_parameters(const KnownInstance& inst) { return detail::check_known(inst, false); }

/// True when a and b agree on a grid over [0, x_max] to relative tolerance.
inline bool same_function(const CostFunction& a, const CostFunction& b, double x_max) {
    if (a == b) {
        return true;
    }
    for (std::size_t k = 0; k < kValidationGridPoints; ++k) {
        const double x = x_max * static_cast<double>(k) / static_cast<double>(kValidationGridPoints - 1);
        const double va = a.evaluate(x);
        const double vb = b.evaluate(x);
        if (std::abs(va - vb) > kIdentityRelTol * std::max({1.0, std::abs(va), std::abs(vb)})) {
            return false;
        }
    }
    return true;
}

inline ValidationReport validate_instance(const UnknownInstance& inst) {
    ValidationReport out;
    if (inst.size() == 0) {
        out.push_back("instance must have at least one user");
    }
    if (inst.costs.size() != inst.priors.size()) {
        out.push_back("costs and priors must have the same length");
        return out;
    }
    // Budget 0 is a legitimate degenerate unknown-case instance (nothing to hand out).
    if (!(inst.budget >= 0.0) || !std::isfinite(inst.budget)) {
        out.push_back("budget must be non-negative");
    }
    double b_max = 0.0;
    for (std::size_t i = 0; i < inst.size(); ++i) {
        detail::check_prior(inst.priors[i], detail::user_tag(i), out);
        if (std::isfinite(inst.priors[i].hi())) {
            b_max = std::max(b_max, inst.priors[i].hi());
        }
    }
    for (std::size_t i = 0; i < inst.size(); ++i) {
        detail::check_cost(inst.costs[i], b_max, detail::user_tag(i), out);
    }
    if (inst.symmetric) {
        for (std::size_t i = 1; i < inst.size(); ++i) {
            if (!(inst.priors[i] == inst.priors[0])) {
                out.push_back(detail::user_tag(i) + "symmetric instance requires identical priors");
                break;
            }
        }
        for (std::size_t i = 1; i < inst.size(); ++i) {
            if (!same_function(inst.costs[i], inst.costs[0], b_max)) {
                out.push_back(detail::user_tag(i) + "symmetric instance requires identical costs");
                break;
            }
        }
    }
    return out;
}

inline ValidationReport validate_allocation(const Allocation& alloc, double budget) {
    ValidationReport out;
    for (std::size_t i = 0; i < alloc.size(); ++i) {
        if (!(alloc.rates[i] >= 0.0) || !std::isfinite(alloc.rates[i])) {
            out.push_back(detail::user_tag(i) + "rate must be non-negative");
        }
    }
    if (alloc.total() > budget + kFeasibilityTol) {
        out.push_back("allocation exceeds budget");
    }
    return out;
}

inline std::string join(const ValidationReport& report, std::string_view sep = "; ") {
    std::string s;
    for (std::size_t i = 0; i < report.size(); ++i) {
        if (i != 0) {
            s += sep;
        }
        s += report[i];
    }
    return s;
}

template <class Instance>
void require_valid(const Instance& inst) {
    if (auto report = validate_instance(inst); !report.empty()) {
        throw precondition_error("invalid instance: " + join(report));
    }
}

inline void require_feasible(const Allocation& alloc, double budget, std::size_t users) {
    if (alloc.size() != users) {
        throw feasibility_error("allocation has " + std::to_string(alloc.size()) + " rates for " +
                                std::to_string(users) + " users");
    }
    if (auto report = validate_allocation(alloc, budget); !report.empty()) {
        throw feasibility_error("infeasible allocation: " + join(report));
    }
}

}  // namespace shortfall
