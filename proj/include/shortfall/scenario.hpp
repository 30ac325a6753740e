#pragma once

// Scenario files: a line-oriented "key = value" format with [sections].
//
//   schema = 1
//   kind = known            # known | unknown
//   budget = 4
//   symmetric = false       # unknown instances only
//
//   [user]                  # repeated, one block per user
//   cost = sqrt 1           # linear S | sqrt S | log1p S | pwl x:v x:v ...
//   rate = 4                # known: mean consumption f_i
//   prior = uniform 1 2     # unknown: uniform A B | texp A B RATE | pwc A B W1 W2 ...
//   process = bernoulli 2 0.5   # optional: deterministic F | bernoulli PEAK P | uniform LO HI
//   count = 1               # optional: replicate this block
//
//   [simulation]            # optional
//   horizon = 100000
//   seed = 1
//   availability = constant 4   # constant C | uniform LO HI | cyclo NOISE M1 M2 ...
//   buffer = 5              # optional cap B
//   batches = 100
//
//   [output]                # optional
//   path = result.json
//   format = json           # json | csv
//
// '#' starts a comment. Unknown sections and keys are rejected.

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "shortfall/domain.hpp"
#include "shortfall/simulator.hpp"

namespace shortfall {

enum class ProblemKind { known, unknown };

struct UserSpec {
    CostFunction cost;
    std::optional<double> rate;
    std::optional<Prior> prior;
    std::optional<ConsumptionProcess> process;
    bool operator==(const UserSpec&) const = default;
};

struct SimulationSpec {
    std::uint64_t horizon = 100000;
    std::uint64_t seed = 1;
    std::optional<AvailabilityProcess> availability;
    std::optional<double> buffer;
    std::size_t batches = 100;
    bool operator==(const SimulationSpec&) const = default;
};

struct OutputSpec {
    std::optional<std::string> path;
    std::optional<std::string> format;
    bool operator==(const OutputSpec&) const = default;
};

struct Scenario {
    int schema = 1;
    ProblemKind kind = ProblemKind::known;
    double budget = 0.0;
    bool symmetric = false;
    std::vector<UserSpec> users;
    std::optional<SimulationSpec> simulation;
    OutputSpec output;

    std::size_t size() const { return users.size(); }

    KnownInstance known() const {
        KnownInstance inst;
        inst.budget = budget;
        for (const auto& u : users) {
            inst.costs.push_back(u.cost);
            inst.mean_rates.push_back(u.rate.value_or(0.0));
        }
        return inst;
    }

    UnknownInstance unknown() const {
        UnknownInstance inst;
        inst.budget = budget;
        inst.symmetric = symmetric;
        for (const auto& u : users) {
            inst.costs.push_back(u.cost);
            inst.priors.push_back(u.prior.value_or(Prior{}));
        }
        return inst;
    }

    /// Consumption processes for simulation; users without one consume
    /// deterministically at f_i (known) or at the prior mean (unknown).
    std::vector<ConsumptionProcess> processes() const {
        std::vector<ConsumptionProcess> out;
        for (const auto& u : users) {
            if (u.process) {
                out.push_back(*u.process);
            } else if (kind == ProblemKind::known) {
                out.push_back(ConsumptionProcess::deterministic(u.rate.value_or(0.0)));
            } else {
                out.push_back(ConsumptionProcess::deterministic(u.prior ? u.prior->mean() : 0.0));
            }
        }
        return out;
    }

    AvailabilityProcess availability() const {
        if (simulation && simulation->availability) {
            return *simulation->availability;
        }
        return AvailabilityProcess::constant(budget);
    }

    bool operator==(const Scenario&) const = default;
};

struct ScenarioIssue {
    std::size_t line = 0;  // 0: not tied to a line
    std::string message;
};

class scenario_error : public std::runtime_error {
public:
    explicit scenario_error(std::vector<ScenarioIssue> issues)
        : std::runtime_error(render(issues)), issues_(std::move(issues)) {}
    const std::vector<ScenarioIssue>& issues() const { return issues_; }

private:
    static std::string render(const std::vector<ScenarioIssue>& issues) {
        std::string s;
        for (const auto& i : issues) {
            if (!s.empty()) {
                s += '\n';
            }
            s += i.line ? "line " + std::to_string(i.line) + ": " + i.message : i.message;
        }
        return s;
    }
    std::vector<ScenarioIssue> issues_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> words(std::string_view s) {
    std::vector<std::string> out;
    std::istringstream in{std::string(s)};
    for (std::string w; in >> w;) {
        out.push_back(w);
    }
    return out;
}

inline double to_number(std::string_view s) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || ptr != end || !std::isfinite(v)) {
        throw std::invalid_argument("expected a number, got '" + std::string(s) + "'");
    }
    return v;
}

inline std::uint64_t to_count(std::string_view s) {
    std::uint64_t v = 0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || ptr != end) {
        throw std::invalid_argument("expected a non-negative integer, got '" + std::string(s) + "'");
    }
    return v;
}

inline void expect_args(const std::vector<std::string>& w, std::size_t n, std::string_view what) {
    if (w.size() != n + 1) {
        throw std::invalid_argument(std::string(what) + " '" + w[0] + "' takes " + std::to_string(n) +
                                    " argument(s)");
    }
}

inline CostFunction parse_cost(std::string_view text) {
    auto w = words(text);
    if (w.empty()) {
        throw std::invalid_argument("empty cost");
    }
    if (w[0] == "linear") {
        expect_args(w, 1, "cost");
        return CostFunction::linear(to_number(w[1]));
    }
    if (w[0] == "sqrt") {
        expect_args(w, 1, "cost");
        return CostFunction::sqrt(to_number(w[1]));
    }
    if (w[0] == "log1p") {
        expect_args(w, 1, "cost");
        return CostFunction::log1p(to_number(w[1]));
    }
    if (w[0] == "pwl") {
        std::vector<Breakpoint> pts;
        for (std::size_t i = 1; i < w.size(); ++i) {
            const auto colon = w[i].find(':');
            if (colon == std::string::npos) {
                throw std::invalid_argument("pwl breakpoint must be x:value, got '" + w[i] + "'");
            }
            pts.push_back({to_number(std::string_view(w[i]).substr(0, colon)),
                           to_number(std::string_view(w[i]).substr(colon + 1))});
        }
        return CostFunction::piecewise(std::move(pts));
    }
    throw std::invalid_argument("unknown cost kind '" + w[0] + "'");
}

inline Prior parse_prior(std::string_view text) {
    auto w = words(text);
    if (w.empty()) {
        throw std::invalid_argument("empty prior");
    }
    if (w[0] == "uniform") {
        expect_args(w, 2, "prior");
        return Prior::uniform(to_number(w[1]), to_number(w[2]));
    }
    if (w[0] == "texp") {
        expect_args(w, 3, "prior");
        return Prior::truncated_exponential(to_number(w[1]), to_number(w[2]), to_number(w[3]));
    }
    if (w[0] == "pwc") {
        if (w.size() < 4) {
            throw std::invalid_argument("prior 'pwc' takes A B and at least one weight");
        }
        std::vector<double> weights;
        for (std::size_t i = 3; i < w.size(); ++i) {
            weights.push_back(to_number(w[i]));
        }
        return Prior::piecewise_constant(to_number(w[1]), to_number(w[2]), std::move(weights));
    }
    throw std::invalid_argument("unknown prior kind '" + w[0] + "'");
}

inline ConsumptionProcess parse_process(std::string_view text) {
    auto w = words(text);
    if (w.empty()) {
        throw std::invalid_argument("empty process");
    }
    if (w[0] == "deterministic") {
        expect_args(w, 1, "process");
        return ConsumptionProcess::deterministic(to_number(w[1]));
    }
    if (w[0] == "bernoulli") {
        expect_args(w, 2, "process");
        return ConsumptionProcess::bernoulli(to_number(w[1]), to_number(w[2]));
    }
    if (w[0] == "uniform") {
        expect_args(w, 2, "process");
        return ConsumptionProcess::uniform(to_number(w[1]), to_number(w[2]));
    }
    throw std::invalid_argument("unknown process kind '" + w[0] + "'");
}

inline AvailabilityProcess parse_availability(std::string_view text) {
    auto w = words(text);
    if (w.empty()) {
        throw std::invalid_argument("empty availability");
    }
    if (w[0] == "constant") {
        expect_args(w, 1, "availability");
        return AvailabilityProcess::constant(to_number(w[1]));
    }
    if (w[0] == "uniform") {
        expect_args(w, 2, "availability");
        return AvailabilityProcess::uniform(to_number(w[1]), to_number(w[2]));
    }
    if (w[0] == "cyclo") {
        if (w.size() < 3) {
            throw std::invalid_argument("availability 'cyclo' takes NOISE and at least one phase mean");
        }
        std::vector<double> means;
        for (std::size_t i = 2; i < w.size(); ++i) {
            means.push_back(to_number(w[i]));
        }
        return AvailabilityProcess::cyclostationary(std::move(means), to_number(w[1]));
    }
    throw std::invalid_argument("unknown availability kind '" + w[0] + "'");
}

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string format_cost(const CostFunction& c) {
    return std::visit(
        [](const auto& k) -> std::string {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, Linear>) {
                return "linear " + num(k.slope);
            } else if constexpr (std::is_same_v<T, Sqrt>) {
                return "sqrt " + num(k.scale);
            } else if constexpr (std::is_same_v<T, Log1p>) {
                return "log1p " + num(k.scale);
            } else {
                std::string s = "pwl";
                for (const auto& p : k.points) {
                    s += ' ' + num(p.x) + ':' + num(p.value);
                }
                return s;
            }
        },
        c.kind());
}

inline std::string format_prior(const Prior& p) {
    const std::string span = num(p.lo()) + ' ' + num(p.hi());
    return std::visit(
        [&](const auto& k) -> std::string {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, Uniform>) {
                return "uniform " + span;
            } else if constexpr (std::is_same_v<T, TruncatedExponential>) {
                return "texp " + span + ' ' + num(k.rate);
            } else {
                std::string s = "pwc " + span;
                for (double h : k.heights) {
                    s += ' ' + num(h);
                }
                return s;
            }
        },
        p.kind());
}

inline std::string format_process(const ConsumptionProcess& p) {
    return std::visit(
        [](const auto& k) -> std::string {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, DeterministicDemand>) {
                return "deterministic " + num(k.rate);
            } else if constexpr (std::is_same_v<T, ScaledBernoulliDemand>) {
                return "bernoulli " + num(k.peak) + ' ' + num(k.probability);
            } else {
                return "uniform " + num(k.lo) + ' ' + num(k.hi);
            }
        },
        p.kind());
}

inline std::string format_availability(const AvailabilityProcess& a) {
    return std::visit(
        [](const auto& k) -> std::string {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, ConstantSupply>) {
                return "constant " + num(k.level);
            } else if constexpr (std::is_same_v<T, UniformSupply>) {
                return "uniform " + num(k.lo) + ' ' + num(k.hi);
            } else {
                std::string s = "cyclo " + num(k.noise);
                for (double v : k.phase_means) {
                    s += ' ' + num(v);
                }
                return s;
            }
        },
        a.kind());
}

inline bool to_bool(std::string_view s) {
    if (s == "true") {
        return true;
    }
    if (s == "false") {
        return false;
    }
    throw std::invalid_argument("expected true or false, got '" + std::string(s) + "'");
}

}  // namespace detail

/// Parses and validates a scenario; throws scenario_error listing every
/// problem found, each tagged with its line where one applies.
inline Scenario parse_scenario(std::string_view text) {
    Scenario sc;
    std::vector<ScenarioIssue> issues;
    std::vector<std::size_t> user_lines;  // per expanded user: line of its [user] header

    enum class Section { top, user, simulation, output };
    Section section = Section::top;
    std::map<std::string, std::size_t> seen;  // keys seen in the current section
    bool have_schema = false;
    bool have_kind = false;
    bool have_budget = false;
    std::size_t budget_line = 0;

    struct PendingUser {
        std::size_t line = 0;
        UserSpec spec;
        bool has_cost = false;
        std::uint64_t count = 1;
    };
    std::vector<PendingUser> pending;

    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto eol = text.find('\n', pos);
        std::string_view raw = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++lineno;
        if (const auto hash = raw.find('#'); hash != std::string_view::npos) {
            raw = raw.substr(0, hash);
        }
        const auto line = detail::trim(raw);
        if (line.empty()) {
            continue;
        }
        if (line.front() == '[') {
            seen.clear();
            if (line == "[user]") {
                section = Section::user;
                pending.push_back({lineno, {}, false, 1});
            } else if (line == "[simulation]") {
                if (sc.simulation) {
                    issues.push_back({lineno, "duplicate [simulation] section"});
                }
                section = Section::simulation;
                sc.simulation.emplace();
            } else if (line == "[output]") {
                section = Section::output;
            } else {
                issues.push_back({lineno, "unknown section " + std::string(line)});
                section = Section::top;
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            issues.push_back({lineno, "expected 'key = value'"});
            continue;
        }
        const std::string key(detail::trim(line.substr(0, eq)));
        const auto value = detail::trim(line.substr(eq + 1));
        if (seen.count(key)) {
            issues.push_back({lineno, "duplicate key '" + key + "'"});
            continue;
        }
        seen[key] = lineno;
        try {
            switch (section) {
                case Section::top:
                    if (key == "schema") {
                        sc.schema = static_cast<int>(detail::to_count(value));
                        have_schema = true;
                        if (sc.schema != 1) {
                            issues.push_back({lineno, "unsupported schema version " + std::string(value)});
                        }
                    } else if (key == "kind") {
                        have_kind = true;
                        if (value == "known") {
                            sc.kind = ProblemKind::known;
                        } else if (value == "unknown") {
                            sc.kind = ProblemKind::unknown;
                        } else {
                            issues.push_back({lineno, "kind must be 'known' or 'unknown'"});
                        }
                    } else if (key == "budget") {
                        sc.budget = detail::to_number(value);
                        have_budget = true;
                        budget_line = lineno;
                    } else if (key == "symmetric") {
                        sc.symmetric = detail::to_bool(value);
                    } else {
                        issues.push_back({lineno, "unknown key '" + key + "'"});
                    }
                    break;
                case Section::user: {
                    auto& u = pending.back();
                    if (key == "cost") {
                        u.spec.cost = detail::parse_cost(value);
                        u.has_cost = true;
                    } else if (key == "rate") {
                        u.spec.rate = detail::to_number(value);
                    } else if (key == "prior") {
                        u.spec.prior = detail::parse_prior(value);
                    } else if (key == "process") {
                        u.spec.process = detail::parse_process(value);
                    } else if (key == "count") {
                        u.count = detail::to_count(value);
                        if (u.count == 0) {
                            issues.push_back({lineno, "count must be at least 1"});
                        }
                    } else {
                        issues.push_back({lineno, "unknown key '" + key + "'"});
                    }
                    break;
                }
                case Section::simulation: {
                    auto& sim = *sc.simulation;
                    if (key == "horizon") {
                        sim.horizon = detail::to_count(value);
                    } else if (key == "seed") {
                        sim.seed = detail::to_count(value);
                    } else if (key == "availability") {
                        sim.availability = detail::parse_availability(value);
                    } else if (key == "buffer") {
                        sim.buffer = detail::to_number(value);
                    } else if (key == "batches") {
                        sim.batches = static_cast<std::size_t>(detail::to_count(value));
                    } else {
                        issues.push_back({lineno, "unknown key '" + key + "'"});
                    }
                    break;
                }
                case Section::output:
                    if (key == "path") {
                        sc.output.path = std::string(value);
                    } else if (key == "format") {
                        if (value != "json" && value != "csv") {
                            issues.push_back({lineno, "format must be 'json' or 'csv'"});
                        }
                        sc.output.format = std::string(value);
                    } else {
                        issues.push_back({lineno, "unknown key '" + key + "'"});
                    }
                    break;
            }
        } catch (const std::invalid_argument& e) {
            issues.push_back({lineno, e.what()});
        }
    }

    if (!have_schema) {
        issues.push_back({0, "missing 'schema' field"});
    }
    if (!have_kind) {
        issues.push_back({0, "missing 'kind' field"});
    }
    if (!have_budget) {
        issues.push_back({0, "missing 'budget' field"});
    }
    if (pending.empty()) {
        issues.push_back({0, "scenario must define at least one [user]"});
    }
    for (const auto& u : pending) {
        if (!u.has_cost) {
            issues.push_back({u.line, "user is missing 'cost'"});
        }
        if (sc.kind == ProblemKind::known) {
            if (!u.spec.rate) {
                issues.push_back({u.line, "known-instance user is missing 'rate'"});
            }
            if (u.spec.prior) {
                issues.push_back({u.line, "known-instance user must not have a 'prior'"});
            }
        } else {
            if (!u.spec.prior) {
                issues.push_back({u.line, "unknown-instance user is missing 'prior'"});
            }
            if (u.spec.rate) {
                issues.push_back({u.line, "unknown-instance user must not have a 'rate'"});
            }
        }
        for (std::uint64_t k = 0; k < u.count; ++k) {
            sc.users.push_back(u.spec);
            user_lines.push_back(u.line);
        }
    }
    if (sc.kind == ProblemKind::known && sc.symmetric) {
        issues.push_back({0, "'symmetric' applies to unknown instances only"});
    }
    if (!issues.empty()) {
        throw scenario_error(std::move(issues));
    }

    // Semantic validation, mapped back to lines.
    auto locate = [&](const std::string& msg) -> ScenarioIssue {
        if (msg.rfind("user ", 0) == 0) {
            const auto colon = msg.find(':');
            try {
                const auto idx = static_cast<std::size_t>(detail::to_count(msg.substr(5, colon - 5)));
                if (idx < user_lines.size()) {
                    return {user_lines[idx], msg};
                }
            } catch (const std::invalid_argument&) {
            }
        }
        if (msg.find("budget") != std::string::npos) {
            return {budget_line, msg};
        }
        return {0, msg};
    };
    const auto report =
        sc.kind == ProblemKind::known ? validate_instance(sc.known()) : validate_instance(sc.unknown());
    for (const auto& msg : report) {
        issues.push_back(locate(msg));
    }
    for (std::size_t i = 0; i < sc.users.size(); ++i) {
        if (sc.users[i].process) {
            for (const auto& msg : sc.users[i].process->validate()) {
                issues.push_back({user_lines[i], msg});
            }
        }
    }
    if (sc.simulation) {
        if (sc.simulation->availability) {
            for (const auto& msg : sc.simulation->availability->validate()) {
                issues.push_back({0, msg});
            }
            const double mean = sc.simulation->availability->mean();
            if (std::abs(mean - sc.budget) > kFeasibilityTol * std::max(1.0, sc.budget)) {
                issues.push_back({budget_line, "availability mean " + detail::num(mean) + " must equal the budget"});
            }
        }
        if (sc.simulation->buffer && !(*sc.simulation->buffer >= 0.0)) {
            issues.push_back({0, "buffer cap must be non-negative"});
        }
        if (sc.simulation->batches < 2) {
            issues.push_back({0, "batches must be at least 2"});
        }
    }
    if (!issues.empty()) {
        throw scenario_error(std::move(issues));
    }
    return sc;
}

/// Inverse of parse_scenario; numbers are written with 17 significant digits.
inline std::string serialize_scenario(const Scenario& sc) {
    std::ostringstream out;
    out << "schema = " << sc.schema << '\n';
    out << "kind = " << (sc.kind == ProblemKind::known ? "known" : "unknown") << '\n';
    out << "budget = " << detail::num(sc.budget) << '\n';
    if (sc.kind == ProblemKind::unknown) {
        out << "symmetric = " << (sc.symmetric ? "true" : "false") << '\n';
    }
    for (const auto& u : sc.users) {
        out << "\n[user]\n";
        out << "cost = " << detail::format_cost(u.cost) << '\n';
        if (u.rate) {
            out << "rate = " << detail::num(*u.rate) << '\n';
        }
        if (u.prior) {
            out << "prior = " << detail::format_prior(*u.prior) << '\n';
        }
        if (u.process) {
            out << "process = " << detail::format_process(*u.process) << '\n';
        }
    }
    if (sc.simulation) {
        const auto& sim = *sc.simulation;
        out << "\n[simulation]\n";
        out << "horizon = " << sim.horizon << '\n';
        out << "seed = " << sim.seed << '\n';
        if (sim.availability) {
            out << "availability = " << detail::format_availability(*sim.availability) << '\n';
        }
        if (sim.buffer) {
            out << "buffer = " << detail::num(*sim.buffer) << '\n';
        }
        out << "batches = " << sim.batches << '\n';
    }
    if (sc.output.path || sc.output.format) {
        out << "\n[output]\n";
        if (sc.output.path) {
            out << "path = " << *sc.output.path << '\n';
        }
        if (sc.output.format) {
            out << "format = " << *sc.output.format << '\n';
        }
    }
    return out.str();
}

}  // namespace shortfall
