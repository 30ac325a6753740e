#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "shortfall/domain.hpp"
#include "shortfall/expected_cost.hpp"
#include "shortfall/known_solver.hpp"

namespace shortfall {

struct OracleResult {
    Allocation allocation;
    double objective = 0.0;
    std::uint64_t corners_evaluated = 0;
    // Grid oracle only: Lipschitz bound of (1/m) sum_i K_i under moving each
    // coordinate by one grid step, measured on the grid.
    std::optional<double> lipschitz_bound;
};

inline constexpr std::size_t kDefaultCornerLimit = 15;
inline constexpr std::size_t kDefaultGridLimit = 3;

namespace detail {

inline bool lex_less(const std::vector<double>& x, const std::vector<double>& y) {
    return std::lexicographical_compare(x.begin(), x.end(), y.begin(), y.end());
}

struct CornerSearch {
    const KnownInstance& inst;
    std::vector<double> full_cost;  // V_i(f_i)
    std::vector<bool> in_set;
    std::vector<double> best_rates;
    double best = std::numeric_limits<double>::infinity();
    std::uint64_t corners = 0;

    explicit CornerSearch(const KnownInstance& instance)
        : inst(instance), full_cost(instance.size()), in_set(instance.size(), false) {
        for (std::size_t i = 0; i < inst.size(); ++i) {
            full_cost[i] = inst.costs[i].evaluate(inst.mean_rates[i]);
        }
    }

    // The running total drifts by an ulp or so; recomputing in index order makes
    // equal corners compare bit-identically so ties break lexicographically.
    void offer(std::vector<double>& rates, double) {
        ++corners;
        double total = 0.0;
        for (std::size_t i = 0; i < inst.size(); ++i) {
            total += rates[i] >= inst.mean_rates[i] ? 0.0 : inst.costs[i].evaluate(inst.mean_rates[i] - rates[i]);
        }
        if (total < best || (total == best && lex_less(rates, best_rates))) {
            best = total;
            best_rates = rates;
        }
    }

    // Users [0, next) are decided; `used` is their total service and
    // `unserved` the summed V_i(f_i) of users outside the saturated set.
    void recurse(std::size_t next, double used, double unserved) {
        const std::size_t m = inst.size();
        if (next < m) {
            recurse(next + 1, used, unserved + full_cost[next]);
            if (used + inst.mean_rates[next] <= inst.budget) {
                in_set[next] = true;
                recurse(next + 1, used + inst.mean_rates[next], unserved);
                in_set[next] = false;
            }
            return;
        }
        std::vector<double> rates(m, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            if (in_set[i]) {
                rates[i] = inst.mean_rates[i];
            }
        }
        offer(rates, unserved);
        const double left = inst.budget - used;
        if (left <= 0.0) {
            return;
        }
        for (std::size_t j = 0; j < m; ++j) {
            if (in_set[j]) {
                continue;
            }
            const double f = inst.mean_rates[j];
            const double give = std::min(f, left);
            rates[j] = give;
            const double rest = give == f ? 0.0 : inst.costs[j].evaluate(f - give);
            offer(rates, unserved - full_cost[j] + rest);
            rates[j] = 0.0;
        }
    }
};

}  // namespace detail

/// Exact minimiser of (1/m) sum_i V_i((f_i - s_i)^+) subject to sum s_i <= c
/// by enumerating every corner of {0 <= s_i <= f_i, sum s_i <= c}: a set of
/// saturated users plus at most one user taking the leftover. O(2^m m).
inline OracleResult solve_concave_exact(const KnownInstance& inst, std::size_t max_users = kDefaultCornerLimit) {
    require_valid(inst);
    if (inst.size() > max_users) {
        throw size_error("corner enumeration limited to " + std::to_string(max_users) + " users, got " +
                         std::to_string(inst.size()));
    }
    detail::CornerSearch search(inst);
    search.recurse(0, 0.0, 0.0);
    OracleResult r;
    r.allocation = Allocation::with_budget(search.best_rates, inst.budget);
    r.objective = true_objective(inst, r.allocation);
    r.corners_evaluated = search.corners;
    return r;
}

namespace detail {

inline std::vector<double> rate_grid(double hi, double step) {
    std::vector<double> g;
    const auto n = static_cast<std::size_t>(std::floor(hi / step + 1e-9));
    g.reserve(n + 2);
    for (std::size_t k = 0; k <= n; ++k) {
        g.push_back(std::min(static_cast<double>(k) * step, hi));
    }
    if (g.back() < hi - 1e-12) {
        g.push_back(hi);
    }
    return g;
}

}  // namespace detail

/// Exhaustive grid search for min (1/m) sum_i K_i(s_i) s.t. sum s_i <= c with
/// s_i in {0, h, 2h, ..., b_i}. The last coordinate is resolved with a
/// prefix-minimum table, which visits the same set of grid points as the
/// plain nested loops.
inline OracleResult solve_expected_grid(const UnknownInstance& inst, double grid_step,
                                        std::size_t max_users = kDefaultGridLimit) {
    require_valid(inst);
    if (!(grid_step > 0.0)) {
        throw precondition_error("grid step must be positive");
    }
    const std::size_t m = inst.size();
    if (m > max_users) {
        throw size_error("grid oracle limited to " + std::to_string(max_users) + " users, got " +
                         std::to_string(m));
    }

    std::vector<std::vector<double>> grid(m);
    std::vector<std::vector<double>> kval(m);
    double lipschitz = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        // Users with identical (cost, prior) share one table.
        std::size_t twin = i;
        for (std::size_t j = 0; j < i; ++j) {
            if (inst.priors[j] == inst.priors[i] && inst.costs[j] == inst.costs[i]) {
                twin = j;
                break;
            }
        }
        if (twin != i) {
            grid[i] = grid[twin];
            kval[i] = kval[twin];
        } else {
            ExpectedCost ec(inst.costs[i], inst.priors[i]);
            grid[i] = detail::rate_grid(ec.b(), grid_step);
            kval[i].resize(grid[i].size());
            for (std::size_t k = 0; k < grid[i].size(); ++k) {
                kval[i][k] = ec.evaluate(grid[i][k]);
            }
        }
        double steepest = 0.0;
        for (std::size_t k = 1; k < kval[i].size(); ++k) {
            steepest = std::max(steepest, std::abs(kval[i][k] - kval[i][k - 1]) / grid_step);
        }
        lipschitz += steepest;
    }
    lipschitz /= static_cast<double>(m);

    // prefix_min[k] = min_{j <= k} K_last(grid[j]), with the smallest argmin.
    const auto& last_grid = grid[m - 1];
    const auto& last_k = kval[m - 1];
    std::vector<double> prefix_min(last_grid.size());
    std::vector<std::size_t> prefix_arg(last_grid.size());
    for (std::size_t k = 0; k < last_grid.size(); ++k) {
        if (k == 0 || last_k[k] < prefix_min[k - 1]) {
            prefix_min[k] = last_k[k];
            prefix_arg[k] = k;
        } else {
            prefix_min[k] = prefix_min[k - 1];
            prefix_arg[k] = prefix_arg[k - 1];
        }
    }

    const double cap = inst.budget + kFeasibilityTol;
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> best_idx(m, 0);
    std::vector<std::size_t> idx(m, 0);
    std::uint64_t visited = 0;

    // Odometer over the first m-1 coordinates in lexicographic order.
    auto last_index_for = [&](double used) -> std::optional<std::size_t> {
        const double room = cap - used;
        if (room < 0.0) {
            return std::nullopt;
        }
        auto it = std::upper_bound(last_grid.begin(), last_grid.end(), room);
        if (it == last_grid.begin()) {
            return std::nullopt;
        }
        return static_cast<std::size_t>(it - last_grid.begin()) - 1;
    };
    while (true) {
        double used = 0.0;
        double partial = 0.0;
        for (std::size_t i = 0; i + 1 < m; ++i) {
            used += grid[i][idx[i]];
            partial += kval[i][idx[i]];
        }
        if (auto top = last_index_for(used)) {
            visited += *top + 1;
            const double total = partial + prefix_min[*top];
            if (total < best) {
                best = total;
                best_idx = idx;
                best_idx[m - 1] = prefix_arg[*top];
            }
        }
        // advance
        std::size_t pos = m - 1;
        bool done = true;
        while (pos-- > 0) {
            if (idx[pos] + 1 < grid[pos].size()) {
                ++idx[pos];
                // skip the rest of this coordinate once it alone is over budget
                double head = 0.0;
                for (std::size_t i = 0; i <= pos; ++i) {
                    head += grid[i][idx[i]];
                }
                if (head > cap) {
                    idx[pos] = grid[pos].size() - 1;
                    for (std::size_t i = pos + 1; i + 1 < m; ++i) {
                        idx[i] = 0;
                    }
                    continue;
                }
                for (std::size_t i = pos + 1; i + 1 < m; ++i) {
                    idx[i] = 0;
                }
                done = false;
                break;
            }
            idx[pos] = 0;
        }
        if (done) {
            break;
        }
    }

    std::vector<double> rates(m);
    for (std::size_t i = 0; i < m; ++i) {
        rates[i] = grid[i][best_idx[i]];
    }
    OracleResult r;
    r.allocation = Allocation::with_budget(std::move(rates), inst.budget);
    r.objective = best / static_cast<double>(m);
    r.corners_evaluated = visited;
    r.lipschitz_bound = lipschitz;
    return r;
}

/// (1/m) sum_i K_i(s_i) for an allocation of an unknown-consumption instance.
inline double expected_objective(const UnknownInstance& inst, const Allocation& alloc) {
    require_feasible(alloc, inst.budget, inst.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < inst.size(); ++i) {
        ExpectedCost ec(inst.costs[i], inst.priors[i]);
        sum += ec.evaluate(std::min(alloc.rates[i], ec.b()));
    }
    return sum / static_cast<double>(inst.size());
}

}  // namespace shortfall
