#pragma once

// Implementation of the command-line subcommands. Each command takes a parsed
// scenario plus options, writes its result to a stream, and returns an exit
// status: 0 success, 1 verification failure, 2 input error.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "shortfall/domain.hpp"
#include "shortfall/expected_cost.hpp"
#include "shortfall/global_oracle.hpp"
#include "shortfall/known_solver.hpp"
#include "shortfall/scenario.hpp"
#include "shortfall/simulator.hpp"
#include "shortfall/unknown_solver.hpp"

#ifndef SHORTFALL_BUILD_ID
#define SHORTFALL_BUILD_ID "unknown"
#endif

namespace shortfall::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerificationFailed = 1;
inline constexpr int kExitInputError = 2;
inline constexpr double kVerifyGridStep = 0.005;
inline constexpr std::uint64_t kDefaultHorizon = 100000;

enum class Format { json, csv };

struct CommandOptions {
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> horizon;
    Format format = Format::json;
    bool oracle = false;
    std::optional<std::string> trace_path;
    unsigned workers = 1;
};

/// Worker count from SHORTFALL_WORKERS, else the hardware concurrency.
inline unsigned worker_count() {
    if (const char* env = std::getenv("SHORTFALL_WORKERS")) {
        const int n = std::atoi(env);
        if (n > 0) {
            return static_cast<unsigned>(n);
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Rounds to 12 significant digits so the JSON printer emits at most 12.
inline double sig12(double v) {
    if (!std::isfinite(v) || v == 0.0) {
        return v;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return std::strtod(buf, nullptr);
}

inline std::string fmt12(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline nlohmann::ordered_json numbers(const std::vector<double>& xs) {
    auto arr = nlohmann::ordered_json::array();
    for (double x : xs) {
        arr.push_back(sig12(x));
    }
    return arr;
}

inline nlohmann::ordered_json header(std::string_view command) {
    nlohmann::ordered_json j;
    j["build"] = SHORTFALL_BUILD_ID;
    j["command"] = command;
    return j;
}

/// Writes via a temporary file and rename so readers never see a partial file.
inline void write_atomically(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        }
        out << content;
        if (!out) {
            throw std::runtime_error("failed writing " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// solve-known
// ---------------------------------------------------------------------------

inline int solve_known(const Scenario& sc, const CommandOptions& opt, std::ostream& out) {
    if (sc.kind != ProblemKind::known) {
        throw precondition_error("solve-known needs a scenario with kind = known");
    }
    const auto inst = sc.known();
    const auto rep = solve_linprog(inst);
    std::optional<OracleResult> oracle;
    if (opt.oracle && inst.size() <= kDefaultCornerLimit) {
        oracle = solve_concave_exact(inst);
    }

    if (opt.format == Format::csv) {
        out << "# build: " << SHORTFALL_BUILD_ID << '\n';
        out << "user,mean_rate,rate,shortfall,dissatisfaction\n";
        for (std::size_t i = 0; i < inst.size(); ++i) {
            const double f = inst.mean_rates[i];
            const double s = rep.allocation.rates[i];
            const double k = std::max(f - s, 0.0);
            out << i << ',' << fmt12(f) << ',' << fmt12(s) << ',' << fmt12(k) << ','
                << fmt12(inst.costs[i].evaluate(k)) << '\n';
        }
        return kExitOk;
    }

    auto j = header("solve_known");
    j["users"] = inst.size();
    j["budget"] = sig12(inst.budget);
    j["allocation"] = numbers(rep.allocation.rates);
    j["slack"] = sig12(rep.allocation.slack);
    j["lp_objective"] = sig12(rep.lp_objective);
    j["true_objective"] = sig12(rep.true_objective);
    j["fractional_user"] = rep.fractional_user ? nlohmann::ordered_json(*rep.fractional_user) : nullptr;
    j["sort_order"] = rep.sort_order;
    if (opt.oracle) {
        nlohmann::ordered_json o;
        if (oracle) {
            double vmax = 0.0;
            for (std::size_t i = 0; i < inst.size(); ++i) {
                vmax = std::max(vmax, inst.costs[i].evaluate(inst.mean_rates[i]));
            }
            o["objective"] = sig12(oracle->objective);
            o["allocation"] = numbers(oracle->allocation.rates);
            o["corners_evaluated"] = oracle->corners_evaluated;
            o["gap"] = sig12(rep.true_objective - oracle->objective);
            o["gap_bound"] = sig12(2.0 * vmax / static_cast<double>(inst.size()));
        } else {
            o["skipped"] = "user count exceeds " + std::to_string(kDefaultCornerLimit);
        }
        j["oracle"] = o;
    }
    out << j.dump(2) << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------
// solve-unknown
// ---------------------------------------------------------------------------

inline int solve_unknown(const Scenario& sc, const CommandOptions& opt, std::ostream& out) {
    if (sc.kind != ProblemKind::unknown) {
        throw precondition_error("solve-unknown needs a scenario with kind = unknown");
    }
    const auto inst = sc.unknown();
    const auto rep = sym_alloc(inst);
    std::optional<OracleResult> oracle;
    if (opt.oracle && inst.size() <= kDefaultGridLimit) {
        oracle = solve_expected_grid(inst, kVerifyGridStep);
    }

    if (opt.format == Format::csv) {
        const ExpectedCost k(inst.costs.front(), inst.priors.front());
        out << "# build: " << SHORTFALL_BUILD_ID << '\n';
        out << "user,rate,expected_cost\n";
        for (std::size_t i = 0; i < inst.size(); ++i) {
            const double s = rep.allocation.rates[i];
            out << i << ',' << fmt12(s) << ',' << fmt12(k.evaluate(std::min(s, k.b()))) << '\n';
        }
        return kExitOk;
    }

    auto j = header("solve_unknown");
    j["users"] = inst.size();
    j["budget"] = sig12(inst.budget);
    j["allocation"] = numbers(rep.allocation.rates);
    j["slack"] = sig12(rep.allocation.slack);
    j["n_star"] = rep.n_star;
    j["beta_star"] = sig12(rep.beta_star);
    j["v_star"] = sig12(rep.v_star);
    j["normalized_objective"] = sig12(rep.normalized_objective);
    j["full_convex_group"] = rep.full_convex_group;
    j["lipschitz_bound"] = sig12(rep.lipschitz_bound);
    auto table = nlohmann::ordered_json::array();
    for (const auto& row : rep.per_n_table) {
        nlohmann::ordered_json r;
        r["n"] = row.n;
        r["feasible"] = row.feasible;
        r["value"] = row.feasible ? nlohmann::ordered_json(sig12(row.value)) : nullptr;
        r["beta"] = row.feasible ? nlohmann::ordered_json(sig12(row.beta)) : nullptr;
        table.push_back(r);
    }
    j["per_n"] = table;
    if (opt.oracle) {
        nlohmann::ordered_json o;
        if (oracle) {
            o["grid_step"] = kVerifyGridStep;
            o["objective"] = sig12(oracle->objective);
            o["allocation"] = numbers(oracle->allocation.rates);
            o["lipschitz_bound"] = sig12(oracle->lipschitz_bound.value_or(0.0));
        } else {
            o["skipped"] = "user count exceeds " + std::to_string(kDefaultGridLimit);
        }
        j["oracle"] = o;
    }
    out << j.dump(2) << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

inline Allocation solver_policy(const Scenario& sc) {
    if (sc.kind == ProblemKind::known) {
        return solve_linprog(sc.known()).allocation;
    }
    return sym_alloc(sc.unknown()).allocation;
}

inline std::uint64_t horizon_of(const Scenario& sc, const CommandOptions& opt) {
    if (opt.horizon) {
        return *opt.horizon;
    }
    return sc.simulation ? sc.simulation->horizon : kDefaultHorizon;
}

inline std::uint64_t seed_of(const Scenario& sc, const CommandOptions& opt) {
    if (opt.seed) {
        return *opt.seed;
    }
    return sc.simulation ? sc.simulation->seed : 1;
}

inline SimulationResult simulate_policy(const Scenario& sc, const Allocation& policy, std::uint64_t horizon,
                                        std::uint64_t seed, std::ostream* trace = nullptr) {
    const auto users = sc.processes();
    std::vector<CostFunction> costs;
    for (const auto& u : sc.users) {
        costs.push_back(u.cost);
    }
    const auto availability = sc.availability();
    SimulationOptions opt;
    opt.horizon = horizon;
    opt.seed = seed;
    opt.buffer_cap = sc.simulation ? sc.simulation->buffer : std::nullopt;
    opt.batches = sc.simulation ? sc.simulation->batches : 100;
    opt.trace = trace;
    opt.costs = costs;
    return run(users, availability, policy, opt);
}

inline int simulate(const Scenario& sc, const CommandOptions& opt, std::ostream& out) {
    const auto horizon = horizon_of(sc, opt);
    if (horizon == 0) {
        throw precondition_error("simulation horizon must be at least one slot");
    }
    const auto seed = seed_of(sc, opt);
    const auto policy = solver_policy(sc);

    std::optional<std::ofstream> trace_file;
    if (opt.trace_path) {
        trace_file.emplace(*opt.trace_path, std::ios::binary | std::ios::trunc);
        if (!*trace_file) {
            throw precondition_error("cannot open trace file " + *opt.trace_path);
        }
        *trace_file << std::setprecision(12);
    }
    const auto res = simulate_policy(sc, policy, horizon, seed, trace_file ? &*trace_file : nullptr);
    const auto users = sc.processes();

    if (opt.format == Format::csv) {
        out << "# build: " << SHORTFALL_BUILD_ID << '\n';
        out << "user,policy_rate,mean_consumption,mean_shortfall,predicted_shortfall,shortfall_stderr,"
               "mean_service,final_queue,max_queue,dissatisfaction\n";
        for (std::size_t i = 0; i < users.size(); ++i) {
            out << i << ',' << fmt12(policy.rates[i]) << ',' << fmt12(users[i].mean()) << ','
                << fmt12(res.mean_shortfall[i]) << ','
                << fmt12(std::max(users[i].mean() - res.mean_service[i], 0.0)) << ','
                << fmt12(res.shortfall_stderr[i]) << ',' << fmt12(res.mean_service[i]) << ','
                << fmt12(res.final_queue[i]) << ',' << fmt12(res.max_queue[i]) << ','
                << fmt12(res.dissatisfaction[i]) << '\n';
        }
        return kExitOk;
    }

    auto j = header("simulate");
    j["seed"] = seed;
    j["horizon"] = horizon;
    j["policy"] = numbers(policy.rates);
    std::vector<double> predicted;
    for (std::size_t i = 0; i < users.size(); ++i) {
        predicted.push_back(std::max(users[i].mean() - res.mean_service[i], 0.0));
    }
    j["mean_shortfall"] = numbers(res.mean_shortfall);
    j["predicted_shortfall"] = numbers(predicted);
    j["shortfall_stderr"] = numbers(res.shortfall_stderr);
    j["mean_service"] = numbers(res.mean_service);
    j["mean_consumption"] = numbers(res.mean_consumption);
    j["final_queue"] = numbers(res.final_queue);
    j["max_queue"] = numbers(res.max_queue);
    j["queue_growth"] = numbers(res.queue_growth);
    j["mean_availability"] = sig12(res.mean_availability);
    j["dissatisfaction"] = numbers(res.dissatisfaction);
    j["normalized_dissatisfaction"] = sig12(res.normalized_dissatisfaction.value_or(0.0));
    out << j.dump(2) << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

struct CheckRow {
    std::string name;
    bool passed = false;
    double value = 0.0;
    double bound = 0.0;
    std::string detail;
};

namespace detail {

inline std::vector<CheckRow> known_checks_solver(const KnownInstance& inst) {
    std::vector<CheckRow> rows;
    const auto rep = solve_linprog(inst);
    const std::size_t m = inst.size();

    std::size_t inside = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const double s = rep.allocation.rates[i];
        inside += (s > 0.0 && s < inst.mean_rates[i]) ? 1 : 0;
    }
    rows.push_back({"linalloc structure", inside <= 1, static_cast<double>(inside), 1.0,
                    "users strictly inside (0, f_i)"});

    const double demand = std::accumulate(inst.mean_rates.begin(), inst.mean_rates.end(), 0.0);
    const double used = rep.allocation.total();
    const double target = std::min(inst.budget, demand);
    rows.push_back({"linalloc budget use", std::abs(used - target) <= kFeasibilityTol, used, target,
                    "sum of rates vs min(budget, sum f_i)"});

    if (m <= kDefaultCornerLimit) {
        const auto oracle = solve_concave_exact(inst);
        double vmax = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            vmax = std::max(vmax, inst.costs[i].evaluate(inst.mean_rates[i]));
        }
        const double gap = rep.true_objective - oracle.objective;
        const double bound = 2.0 * vmax / static_cast<double>(m) + 1e-9;
        rows.push_back({"linalloc vs corner oracle", gap <= bound && gap >= -1e-9, gap, bound,
                        "true objective gap against exact corner enumeration"});

        std::size_t oracle_inside = 0;
        for (std::size_t i = 0; i < m; ++i) {
            const double s = oracle.allocation.rates[i];
            oracle_inside += (s > 0.0 && s < inst.mean_rates[i]) ? 1 : 0;
        }
        rows.push_back({"corner oracle structure", oracle_inside <= 1, static_cast<double>(oracle_inside), 1.0,
                        "users strictly inside (0, f_i)"});

        const auto lin = linearized(inst);
        const auto lin_oracle = solve_concave_exact(lin);
        const double lp = linprog_objective(inst, rep.allocation);
        rows.push_back({"linprog optimality", lp <= lin_oracle.objective + 1e-9, lp, lin_oracle.objective + 1e-9,
                        "greedy vs corner oracle on the linearised costs"});
    } else {
        rows.push_back({"linalloc vs corner oracle", true, 0.0, 0.0,
                        "skipped: more than " + std::to_string(kDefaultCornerLimit) + " users"});
    }
    return rows;
}

inline std::vector<CheckRow> shortfall_law_checks(const Scenario& sc, const Allocation& policy,
                                                  std::uint64_t horizon, std::uint64_t seed) {
    std::vector<CheckRow> rows;
    const auto res = simulate_policy(sc, policy, horizon, seed);
    const auto users = sc.processes();
    const bool capped = sc.simulation && sc.simulation->buffer;
    bool ok = true;
    double worst = 0.0;
    double worst_bound = 0.0;
    for (std::size_t i = 0; i < users.size(); ++i) {
        const double predicted = std::max(users[i].mean() - res.mean_service[i], 0.0);
        const double tol = 3.0 * res.shortfall_stderr[i] + 1e-9;
        const double dev = capped ? predicted - res.mean_shortfall[i] : std::abs(res.mean_shortfall[i] - predicted);
        if (dev > tol) {
            ok = false;
        }
        if (i == 0 || dev - tol > worst - worst_bound) {
            worst = dev;
            worst_bound = tol;
        }
    }
    rows.push_back({capped ? "finite-buffer shortfall bound" : "shortfall law", ok, worst, worst_bound,
                    capped ? "(f - s)^+ - mean shortfall, worst user, vs 3 batch-means stderr"
                           : "|mean shortfall - (f - s)^+|, worst user, vs 3 batch-means stderr"});
    rows.push_back({"per-slot budget", res.budget_violations == 0, static_cast<double>(res.budget_violations), 0.0,
                    "slots with sum S_i(t) > c(t)"});
    return rows;
}

inline std::vector<CheckRow> curvature_checks(const UnknownInstance& inst) {
    std::vector<CheckRow> rows;
    std::vector<std::size_t> distinct;
    for (std::size_t i = 0; i < inst.size(); ++i) {
        bool dup = false;
        for (std::size_t j : distinct) {
            dup = dup || (inst.costs[j] == inst.costs[i] && inst.priors[j] == inst.priors[i]);
        }
        if (!dup) {
            distinct.push_back(i);
        }
    }
    for (std::size_t i : distinct) {
        const auto r = check_curvature(ExpectedCost(inst.costs[i], inst.priors[i]), 101);
        const std::string tag = "curvature (user " + std::to_string(i) + ")";
        rows.push_back({tag, r.ok(), r.concave_segment_empty ? r.min_second_diff_convex : r.max_second_diff_concave,
                        r.tolerance,
                        "max 2nd diff on (0,a) = " + fmt12(r.max_second_diff_concave) + ", min on (a,b) = " +
                            fmt12(r.min_second_diff_convex) + (r.monotone ? "" : ", not monotone")});
    }
    return rows;
}

inline std::vector<CheckRow> symalloc_checks(const UnknownInstance& inst) {
    std::vector<CheckRow> rows;
    const auto rep = sym_alloc(inst);
    const double a = inst.priors.front().lo();
    const double b = inst.priors.front().hi();

    const auto feas = validate_allocation(rep.allocation, inst.budget);
    bool in_box = true;
    for (double s : rep.allocation.rates) {
        in_box = in_box && s <= b + kFeasibilityTol;
    }
    rows.push_back({"symalloc feasibility", feas.empty() && in_box, rep.allocation.total(), inst.budget,
                    "sum of rates vs budget, rates in [0, b]"});

    std::optional<double> convex_level;
    bool equal = true;
    std::size_t concave_nonzero = 0;
    for (std::size_t i = 0; i < rep.allocation.size(); ++i) {
        const double s = rep.allocation.rates[i];
        // the beta user may sit exactly at a next to a group above it
        if (i == 0 && !rep.full_convex_group && std::abs(s - a) <= kBetaTolerance) {
            continue;
        }
        if (s >= a) {
            if (convex_level && std::abs(*convex_level - s) > kFeasibilityTol * std::max(1.0, s)) {
                equal = false;
            }
            convex_level = s;
        } else if (s > 0.0) {
            ++concave_nonzero;
        }
    }
    rows.push_back({"symalloc equal convex group", equal, equal ? 0.0 : 1.0, 0.0,
                    "users at rate >= a share one rate"});
    rows.push_back({"symalloc concave users", concave_nonzero <= 1, static_cast<double>(concave_nonzero), 1.0,
                    "users with rate in (0, a)"});

    if (inst.size() <= kDefaultGridLimit) {
        const auto grid = solve_expected_grid(inst, kVerifyGridStep);
        const double diff = std::abs(rep.normalized_objective - grid.objective);
        const double bound = kVerifyGridStep * grid.lipschitz_bound.value_or(0.0) + 1e-6;
        rows.push_back({"symalloc vs grid oracle", diff <= bound, diff, bound,
                        "|sym_alloc - grid oracle (step 0.005)|"});
    } else {
        rows.push_back({"symalloc vs grid oracle", true, 0.0, 0.0,
                        "skipped: more than " + std::to_string(kDefaultGridLimit) + " users"});
    }
    return rows;
}

inline void run_parallel(std::vector<std::function<std::vector<CheckRow>()>>& tasks,
                         std::vector<std::vector<CheckRow>>& results, unsigned workers) {
    results.assign(tasks.size(), {});
    std::vector<std::string> errors(tasks.size());
    std::size_t next = 0;
    std::mutex lock;
    auto worker = [&] {
        while (true) {
            std::size_t mine = 0;
            {
                std::lock_guard<std::mutex> g(lock);
                if (next >= tasks.size()) {
                    return;
                }
                mine = next++;
            }
            try {
                results[mine] = tasks[mine]();
            } catch (const std::exception& e) {
                errors[mine] = e.what();
            }
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(tasks.size())));
    std::vector<std::thread> pool;
    for (unsigned i = 1; i < n; ++i) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& t : pool) {
        t.join();
    }
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (!errors[i].empty()) {
            results[i] = {{"check " + std::to_string(i), false, 0.0, 0.0, "error: " + errors[i]}};
        }
    }
}

}  // namespace detail

struct VerifyOutcome {
    std::vector<CheckRow> rows;
    bool passed() const {
        return std::all_of(rows.begin(), rows.end(), [](const CheckRow& r) { return r.passed; });
    }
};

inline VerifyOutcome run_checks(const Scenario& sc, const CommandOptions& opt) {
    const auto horizon = horizon_of(sc, opt);
    if (horizon == 0) {
        throw precondition_error("simulation horizon must be at least one slot");
    }
    const auto seed = seed_of(sc, opt);
    std::vector<std::function<std::vector<CheckRow>()>> tasks;
    if (sc.kind == ProblemKind::known) {
        const auto inst = sc.known();
        tasks.emplace_back([inst] { return detail::known_checks_solver(inst); });
        tasks.emplace_back([&sc, horizon, seed] {
            return detail::shortfall_law_checks(sc, solver_policy(sc), horizon, seed);
        });
    } else {
        const auto inst = sc.unknown();
        tasks.emplace_back([inst] { return detail::curvature_checks(inst); });
        if (inst.symmetric) {
            tasks.emplace_back([inst] { return detail::symalloc_checks(inst); });
            tasks.emplace_back([&sc, horizon, seed] {
                return detail::shortfall_law_checks(sc, solver_policy(sc), horizon, seed);
            });
        }
    }
    std::vector<std::vector<CheckRow>> results;
    detail::run_parallel(tasks, results, opt.workers);
    VerifyOutcome out;
    for (auto& r : results) {
        out.rows.insert(out.rows.end(), r.begin(), r.end());
    }
    return out;
}

inline void print_table(const VerifyOutcome& v, std::ostream& out) {
    std::size_t width = 5;
    for (const auto& r : v.rows) {
        width = std::max(width, r.name.size());
    }
    out << std::left << std::setw(static_cast<int>(width)) << "check" << "  result  value         bound\n";
    for (const auto& r : v.rows) {
        out << std::left << std::setw(static_cast<int>(width)) << r.name << "  " << (r.passed ? "PASS  " : "FAIL  ")
            << "  " << std::setw(12) << fmt12(r.value) << "  " << std::setw(12) << fmt12(r.bound) << "  " << r.detail
            << '\n';
    }
    out << (v.passed() ? "all checks passed" : "verification FAILED") << '\n';
}

inline std::string verify_report(const Scenario& sc, const CommandOptions& opt, const VerifyOutcome& v) {
    if (opt.format == Format::csv) {
        std::ostringstream out;
        out << "# build: " << SHORTFALL_BUILD_ID << '\n';
        out << "check,passed,value,bound,detail\n";
        for (const auto& r : v.rows) {
            out << '"' << r.name << "\"," << (r.passed ? "true" : "false") << ',' << fmt12(r.value) << ','
                << fmt12(r.bound) << ",\"" << r.detail << "\"\n";
        }
        return out.str();
    }
    auto j = header("verify");
    j["seed"] = seed_of(sc, opt);
    j["horizon"] = horizon_of(sc, opt);
    auto rows = nlohmann::ordered_json::array();
    for (const auto& r : v.rows) {
        nlohmann::ordered_json o;
        o["name"] = r.name;
        o["passed"] = r.passed;
        o["value"] = sig12(r.value);
        o["bound"] = sig12(r.bound);
        o["detail"] = r.detail;
        rows.push_back(o);
    }
    j["checks"] = rows;
    j["passed"] = v.passed();
    return j.dump(2) + '\n';
}

}  // namespace shortfall::cli
