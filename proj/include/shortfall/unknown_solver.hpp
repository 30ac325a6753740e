#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "shortfall/domain.hpp"
#include "shortfall/expected_cost.hpp"

namespace shortfall {

inline constexpr std::size_t kBetaGridPoints = 1001;
inline constexpr double kBetaTolerance = 1e-9;

struct VStar {
    double value = 0.0;  // K(beta) + n K((c - beta)/n) + (m - n - 1) K(0)
    double beta = 0.0;
    double lo = 0.0;     // feasible beta interval
    double hi = 0.0;
    double lipschitz = 0.0;  // max |g'| estimated on the beta grid
};

struct PerGroupSize {
    std::size_t n = 0;
    bool feasible = false;
    double value = std::numeric_limits<double>::infinity();
    double beta = 0.0;
};

struct SymAllocReport {
    Allocation allocation;
    std::size_t n_star = 0;
    double beta_star = 0.0;
    double v_star = 0.0;
    double normalized_objective = 0.0;
    std::vector<PerGroupSize> per_n_table;
    // Set when the optimum serves every user at the same rate in [a, b]
    // with no user below a; then n_star = m and beta_star = 0.
    bool full_convex_group = false;
    double lipschitz_bound = 0.0;
};

namespace detail {

template <class G>
double golden_section(const G& g, double lo, double hi, double tol, double& best_x) {
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double g1 = g(x1);
    double g2 = g(x2);
    while (hi - lo > tol) {
        if (g1 <= g2) {
            hi = x2;
            x2 = x1;
            g2 = g1;
            x1 = hi - inv_phi * (hi - lo);
            g1 = g(x1);
        } else {
            lo = x1;
            x1 = x2;
            g1 = g2;
            x2 = lo + inv_phi * (hi - lo);
            g2 = g(x2);
        }
    }
    best_x = g1 <= g2 ? x1 : x2;
    return std::min(g1, g2);
}

}  // namespace detail

/// Best split for a fixed convex-group size n: one user at beta in
/// [max(0, c - n b), min(a, c - n a)], n users at (c - beta)/n, the remaining
/// m - n - 1 users at 0. Returns nullopt when the beta interval is empty.
inline std::optional<VStar> find_vstar(std::size_t n, std::size_t m, double budget, const ExpectedCost& k) {
    if (m == 0 || n + 1 > m) {
        throw domain_error("convex group size must lie in [0, m-1]");
    }
    const double a = k.a();
    const double b = k.b();
    const double nd = static_cast<double>(n);
    const double lo = std::max(0.0, budget - nd * b);
    double hi = std::min(a, budget - nd * a);
    const double slack = 1e-12 * std::max(1.0, budget);
    if (lo > hi + slack) {
        return std::nullopt;
    }
    hi = std::max(hi, lo);

    const double idle = static_cast<double>(m - n - 1) * k.evaluate(0.0);
    auto g = [&](double beta) {
        beta = std::clamp(beta, lo, hi);
        double v = k.evaluate(std::min(beta, b)) + idle;
        if (n > 0) {
            const double r = std::clamp((budget - beta) / nd, 0.0, b);
            v += nd * k.evaluate(r);
        }
        return v;
    };

    VStar out;
    out.lo = lo;
    out.hi = hi;
    if (hi - lo <= kBetaTolerance) {
        out.beta = lo;
        out.value = g(lo);
        return out;
    }

    const double h = (hi - lo) / static_cast<double>(kBetaGridPoints - 1);
    std::vector<double> vals(kBetaGridPoints);
    std::size_t best = 0;
    for (std::size_t j = 0; j < kBetaGridPoints; ++j) {
        const double beta = j + 1 == kBetaGridPoints ? hi : lo + h * static_cast<double>(j);
        vals[j] = g(beta);
        if (vals[j] < vals[best]) {
            best = j;
        }
        if (j > 0) {
            out.lipschitz = std::max(out.lipschitz, std::abs(vals[j] - vals[j - 1]) / h);
        }
    }
    out.beta = best + 1 == kBetaGridPoints ? hi : lo + h * static_cast<double>(best);
    out.value = vals[best];

    const double left = best == 0 ? lo : lo + h * static_cast<double>(best - 1);
    const double right = best + 1 >= kBetaGridPoints ? hi : std::min(hi, lo + h * static_cast<double>(best + 1));
    double refined_beta = out.beta;
    const double refined = detail::golden_section(g, left, right, kBetaTolerance, refined_beta);
    if (refined < out.value) {
        out.value = refined;
        out.beta = refined_beta;
    }
    return out;
}

/// Optimal allocation for symmetric users with unknown mean consumption:
/// enumerate the convex-group size, solve the one-dimensional problem for
/// each, and keep the best (ties: smaller group).
inline SymAllocReport sym_alloc(const UnknownInstance& inst) {
    if (!inst.symmetric) {
        throw precondition_error("sym_alloc requires a symmetric instance");
    }
    require_valid(inst);
    const std::size_t m = inst.size();
    const ExpectedCost k(inst.costs.front(), inst.priors.front());
    const double c = inst.budget;

    SymAllocReport r;
    r.v_star = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < m; ++n) {
        PerGroupSize row{n};
        if (auto v = find_vstar(n, m, c, k)) {
            row.feasible = true;
            row.value = v->value;
            row.beta = v->beta;
            r.lipschitz_bound = std::max(r.lipschitz_bound, v->lipschitz);
            if (v->value < r.v_star) {
                r.v_star = v->value;
                r.beta_star = v->beta;
                r.n_star = n;
            }
        }
        r.per_n_table.push_back(row);
    }

    const double md = static_cast<double>(m);
    if (c >= md * k.a()) {
        const double level = std::min(k.b(), c / md);
        const double v = md * k.evaluate(level);
        if (v < r.v_star) {
            r.v_star = v;
            r.n_star = m;
            r.beta_star = 0.0;
            r.full_convex_group = true;
        }
    }

    std::vector<double> rates(m, 0.0);
    if (r.full_convex_group) {
        std::fill(rates.begin(), rates.end(), std::min(k.b(), c / md));
    } else {
        rates[0] = r.beta_star;
        if (r.n_star > 0) {
            const double level = std::clamp((c - r.beta_star) / static_cast<double>(r.n_star), 0.0, k.b());
            for (std::size_t i = 1; i <= r.n_star; ++i) {
                rates[i] = level;
            }
        }
    }
    r.allocation = Allocation::with_budget(std::move(rates), c);
    r.normalized_objective = r.v_star / md;
    return r;
}

}  // namespace shortfall
