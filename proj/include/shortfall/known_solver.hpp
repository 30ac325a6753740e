#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <vector>

#include "shortfall/domain.hpp"

namespace shortfall {

struct GreedySolveReport {
    Allocation allocation;
    double lp_objective = 0.0;
    double true_objective = 0.0;
    std::optional<std::size_t> fractional_user;  // the user with 0 < s_i < f_i, if any
    std::vector<std::size_t> sort_order;          // users by V_i(f_i)/f_i, descending
};

/// (1/m) sum_i V_i((f_i - s_i)^+), the long-term dissatisfaction of serving
/// user i at average rate s_i.
inline double true_objective(const KnownInstance& inst, const Allocation& alloc) {
    require_feasible(alloc, inst.budget, inst.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < inst.size(); ++i) {
        sum += inst.costs[i].evaluate(std::max(inst.mean_rates[i] - alloc.rates[i], 0.0));
    }
    return sum / static_cast<double>(inst.size());
}

/// (1/m) sum_i (1 - s_i/f_i) V_i(f_i), the linearised surrogate objective.
inline double linprog_objective(const KnownInstance& inst, const Allocation& alloc) {
    require_feasible(alloc, inst.budget, inst.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < inst.size(); ++i) {
        const double f = inst.mean_rates[i];
        const double s = alloc.rates[i];
        if (s > f) {
            throw domain_error("linearised objective requires s_i <= f_i");
        }
        sum += (1.0 - s / f) * inst.costs[i].evaluate(f);
    }
    return sum / static_cast<double>(inst.size());
}

/// Instance whose costs are the chords V~_i(x) = x V_i(f_i)/f_i. Its concave
/// program has the same objective as the linearised one on 0 <= s_i <= f_i.
inline KnownInstance linearized(const KnownInstance& inst) {
    KnownInstance out = inst;
    for (std::size_t i = 0; i < inst.size(); ++i) {
        const double f = inst.mean_rates[i];
        out.costs[i] = CostFunction::linear(inst.costs[i].evaluate(f) / f);
    }
    return out;
}

namespace detail {

inline GreedySolveReport greedy_fill(const KnownInstance& inst) {
    const std::size_t m = inst.size();
    std::vector<double> ratio(m);
    for (std::size_t i = 0; i < m; ++i) {
        ratio[i] = inst.costs[i].evaluate(inst.mean_rates[i]) / inst.mean_rates[i];
    }
    GreedySolveReport r;
    r.sort_order.resize(m);
    std::iota(r.sort_order.begin(), r.sort_order.end(), std::size_t{0});
    std::sort(r.sort_order.begin(), r.sort_order.end(), [&ratio](std::size_t x, std::size_t y) {
        return ratio[x] > ratio[y] || (ratio[x] == ratio[y] && x < y);
    });

    std::vector<double> rates(m, 0.0);
    double remaining = inst.budget;
    for (std::size_t i : r.sort_order) {
        const double f = inst.mean_rates[i];
        if (f <= remaining) {
            rates[i] = f;
            remaining -= f;
        } else {
            if (remaining > 0.0) {
                rates[i] = remaining;
                r.fractional_user = i;
            }
            break;
        }
    }

    double lp = 0.0;
    double conc = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double f = inst.mean_rates[i];
        const double vf = inst.costs[i].evaluate(f);
        lp += (1.0 - rates[i] / f) * vf;
        conc += rates[i] == f ? 0.0 : inst.costs[i].evaluate(f - rates[i]);
    }
    r.lp_objective = lp / static_cast<double>(m);
    r.true_objective = conc / static_cast<double>(m);
    r.allocation = Allocation::with_budget(std::move(rates), inst.budget);
    return r;
}

}  // namespace detail

/// Greedy solution of the linearised program: fill users to s_i = f_i in
/// decreasing order of V_i(f_i)/f_i (ties: lower index first); the first user
/// that does not fit takes whatever budget is left. O(m log m).
inline GreedySolveReport solve_linprog(const KnownInstance& inst) {
    if (auto report = validate_parameters(inst); !report.empty()) {
        throw precondition_error("invalid instance: " + join(report));
    }
    return detail::greedy_fill(inst);
}

/// solve_linprog without any validation.
/// Callers must have validated the instance already.
inline GreedySolveReport solve_linprog_unchecked(const KnownInstance& inst) { return detail::greedy_fill(inst); }

}  // namespace shortfall
