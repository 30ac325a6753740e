#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "shortfall/domain.hpp"
#include "shortfall/rng.hpp"

namespace shortfall {

// ---------------------------------------------------------------------------
// Processes
// ---------------------------------------------------------------------------

struct ConstantSupply {
    double level = 0.0;
    bool operator==(const ConstantSupply&) const = default;
};
struct UniformSupply {
    double lo = 0.0;
    double hi = 0.0;
    bool operator==(const UniformSupply&) const = default;
};
/// c(t) = phase_means[t mod P] + noise * (2u - 1), u ~ U[0, 1).
struct CyclostationarySupply {
    std::vector<double> phase_means;
    double noise = 0.0;
    bool operator==(const CyclostationarySupply&) const = default;
};

class AvailabilityProcess {
public:
    using Kind = std::variant<ConstantSupply, UniformSupply, CyclostationarySupply>;

    AvailabilityProcess() = default;
    AvailabilityProcess(Kind kind) : kind_(std::move(kind)) {}  // NOLINT(google-explicit-constructor)

    static AvailabilityProcess constant(double level) { return {ConstantSupply{level}}; }
    static AvailabilityProcess uniform(double lo, double hi) { return {UniformSupply{lo, hi}}; }
    static AvailabilityProcess cyclostationary(std::vector<double> means, double noise) {
        return {CyclostationarySupply{std::move(means), noise}};
    }

    const Kind& kind() const { return kind_; }

    /// Analytic long-term average.
    double mean() const {
        return std::visit(
            [](const auto& k) -> double {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, ConstantSupply>) {
                    return k.level;
                } else if constexpr (std::is_same_v<T, UniformSupply>) {
                    return 0.5 * (k.lo + k.hi);
                } else {
                    return std::accumulate(k.phase_means.begin(), k.phase_means.end(), 0.0) /
                           static_cast<double>(k.phase_means.size());
                }
            },
            kind_);
    }

    double at(const CounterRng& rng, std::uint64_t stream, std::uint64_t t) const {
        return std::visit(
            [&](const auto& k) -> double {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, ConstantSupply>) {
                    return k.level;
                } else if constexpr (std::is_same_v<T, UniformSupply>) {
                    return k.lo + (k.hi - k.lo) * rng.uniform(stream, t);
                } else {
                    const double base = k.phase_means[t % k.phase_means.size()];
                    if (k.noise == 0.0) {
                        return base;
                    }
                    return std::max(0.0, base + k.noise * (2.0 * rng.uniform(stream, t) - 1.0));
                }
            },
            kind_);
    }

    ValidationReport validate() const {
        ValidationReport out;
        std::visit(
            [&](const auto& k) {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, ConstantSupply>) {
                    if (!(k.level >= 0.0)) {
                        out.push_back("availability level must be non-negative");
                    }
                } else if constexpr (std::is_same_v<T, UniformSupply>) {
                    if (!(k.lo >= 0.0 && k.hi >= k.lo)) {
                        out.push_back("availability range must satisfy 0 <= lo <= hi");
                    }
                } else {
                    if (k.phase_means.empty()) {
                        out.push_back("cyclostationary availability needs at least one phase");
                        return;
                    }
                    const double low = *std::min_element(k.phase_means.begin(), k.phase_means.end());
                    if (!(k.noise >= 0.0) || !(low - k.noise >= 0.0)) {
                        out.push_back("cyclostationary availability must stay non-negative (noise <= min phase mean)");
                    }
                }
            },
            kind_);
        if (out.empty() && !(mean() > 0.0)) {
            out.push_back("availability mean must be positive");
        }
        return out;
    }

    bool operator==(const AvailabilityProcess&) const = default;

private:
    Kind kind_ = ConstantSupply{1.0};
};

struct DeterministicDemand {
    double rate = 0.0;
    bool operator==(const DeterministicDemand&) const = default;
};
/// F = peak with probability p, else 0; mean peak * p.
struct ScaledBernoulliDemand {
    double peak = 0.0;
    double probability = 0.0;
    bool operator==(const ScaledBernoulliDemand&) const = default;
};
struct UniformDemand {
    double lo = 0.0;
    double hi = 0.0;
    bool operator==(const UniformDemand&) const = default;
};

class ConsumptionProcess {
public:
    using Kind = std::variant<DeterministicDemand, ScaledBernoulliDemand, UniformDemand>;

    ConsumptionProcess() = default;
    ConsumptionProcess(Kind kind) : kind_(std::move(kind)) {}  // NOLINT(google-explicit-constructor)

    static ConsumptionProcess deterministic(double rate) { return {DeterministicDemand{rate}}; }
    static ConsumptionProcess bernoulli(double peak, double probability) {
        return {ScaledBernoulliDemand{peak, probability}};
    }
    static ConsumptionProcess uniform(double lo, double hi) { return {UniformDemand{lo, hi}}; }

    const Kind& kind() const { return kind_; }

    double mean() const {
        return std::visit(
            [](const auto& k) -> double {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, DeterministicDemand>) {
                    return k.rate;
                } else if constexpr (std::is_same_v<T, ScaledBernoulliDemand>) {
                    return k.peak * k.probability;
                } else {
                    return 0.5 * (k.lo + k.hi);
                }
            },
            kind_);
    }

    double peak() const {
        return std::visit(
            [](const auto& k) -> double {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, DeterministicDemand>) {
                    return k.rate;
                } else if constexpr (std::is_same_v<T, ScaledBernoulliDemand>) {
                    return k.peak;
                } else {
                    return k.hi;
                }
            },
            kind_);
    }

    double at(const CounterRng& rng, std::uint64_t stream, std::uint64_t t) const {
        return std::visit(
            [&](const auto& k) -> double {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, DeterministicDemand>) {
                    return k.rate;
                } else if constexpr (std::is_same_v<T, ScaledBernoulliDemand>) {
                    return rng.uniform(stream, t) < k.probability ? k.peak : 0.0;
                } else {
                    return k.lo + (k.hi - k.lo) * rng.uniform(stream, t);
                }
            },
            kind_);
    }

    ValidationReport validate() const {
        ValidationReport out;
        std::visit(
            [&](const auto& k) {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, DeterministicDemand>) {
                    if (!(k.rate >= 0.0)) {
                        out.push_back("consumption rate must be non-negative");
                    }
                } else if constexpr (std::is_same_v<T, ScaledBernoulliDemand>) {
                    if (!(k.peak >= 0.0) || !(k.probability >= 0.0 && k.probability <= 1.0)) {
                        out.push_back("bernoulli consumption needs peak >= 0 and probability in [0, 1]");
                    }
                } else {
                    if (!(k.lo >= 0.0 && k.hi >= k.lo)) {
                        out.push_back("consumption range must satisfy 0 <= lo <= hi");
                    }
                }
            },
            kind_);
        return out;
    }

    bool operator==(const ConsumptionProcess&) const = default;

private:
    Kind kind_ = DeterministicDemand{1.0};
};

// ---------------------------------------------------------------------------
// Dynamics
// ---------------------------------------------------------------------------

struct StepResult {
    double next_queue = 0.0;
    double shortfall = 0.0;
};

namespace detail {

inline StepResult step_unchecked(double q, double s, double f, std::optional<double> cap) {
    const double held = q + s;
    StepResult r;
    r.shortfall = f > held ? f - held : 0.0;
    r.next_queue = held > f ? held - f : 0.0;
    if (cap && r.next_queue > *cap) {
        r.next_queue = *cap;
    }
    return r;
}

/// Neumaier compensated sum; keeps long horizons of repeated values exact.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

}  // namespace detail

/// One slot of buffer dynamics. Shortfall is what the buffer plus fresh
/// service cannot cover; with a cap, the surplus above the cap is discarded
/// after the shortfall has been accounted.
inline StepResult step(double queue, double service, double consumption, std::optional<double> cap = std::nullopt) {
    if (!(queue >= 0.0) || !(service >= 0.0) || !(consumption >= 0.0)) {
        throw domain_error("step inputs must be non-negative");
    }
    if (cap && (!(*cap >= 0.0) || queue > *cap)) {
        throw domain_error("queue level must lie in [0, B]");
    }
    return detail::step_unchecked(queue, service, consumption, cap);
}

struct SimulationOptions {
    std::uint64_t horizon = 0;
    std::uint64_t seed = 0;
    std::optional<double> buffer_cap;
    std::size_t batches = 100;
    std::ostream* trace = nullptr;                 // per-slot CSV, 12 significant digits
    std::span<const CostFunction> costs = {};      // fills the dissatisfaction fields when non-empty
};

struct SimulationResult {
    std::uint64_t horizon = 0;
    std::vector<double> mean_shortfall;     // kappa_bar_i
    std::vector<double> shortfall_stderr;   // batch-means standard error of kappa_bar_i
    std::vector<double> mean_service;       // realised average of S_i(t)
    std::vector<double> mean_consumption;   // realised average of F_i(t)
    std::vector<double> final_queue;        // Q_i(T)
    std::vector<double> max_queue;
    std::vector<double> queue_growth;       // Q_i(T) / T
    std::vector<std::uint64_t> empty_slots; // slots ending with Q_i = 0
    double mean_availability = 0.0;
    std::uint64_t budget_violations = 0;    // slots with sum_i S_i(t) > c(t); always 0
    std::vector<double> dissatisfaction;    // V_i(kappa_bar_i), when costs are given
    std::optional<double> normalized_dissatisfaction;

    bool operator==(const SimulationResult&) const = default;
};

namespace detail {

inline double batch_stderr(const std::vector<double>& means) {
    const std::size_t n = means.size();
    if (n < 2) {
        return 0.0;
    }
    const double avg = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double x : means) {
        ss += (x - avg) * (x - avg);
    }
    return std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
}

}  // namespace detail

/// Simulates the proportional policy S_i(t) = s_i c(t) / c_bar, where c_bar
/// is the analytic mean of the availability process.
inline SimulationResult run(std::span<const ConsumptionProcess> users, const AvailabilityProcess& availability,
                            const Allocation& policy, const SimulationOptions& opt) {
    if (opt.horizon < 1) {
        throw precondition_error("simulation horizon must be at least one slot");
    }
    if (auto rep = availability.validate(); !rep.empty()) {
        throw precondition_error("invalid availability process: " + join(rep));
    }
    for (std::size_t i = 0; i < users.size(); ++i) {
        if (auto rep = users[i].validate(); !rep.empty()) {
            throw precondition_error("user " + std::to_string(i) + ": " + join(rep));
        }
    }
    if (opt.buffer_cap && !(*opt.buffer_cap >= 0.0)) {
        throw precondition_error("buffer cap must be non-negative");
    }
    if (!opt.costs.empty() && opt.costs.size() != users.size()) {
        throw precondition_error("one cost function per user required");
    }
    const double c_bar = availability.mean();
    require_feasible(policy, c_bar, users.size());

    const std::size_t m = users.size();
    const CounterRng rng(opt.seed);
    const std::uint64_t T = opt.horizon;
    const std::size_t batches = static_cast<std::size_t>(std::min<std::uint64_t>(std::max<std::size_t>(opt.batches, 1), T));
    const std::uint64_t batch_len = T / batches;

    std::vector<double> q(m, 0.0);
    std::vector<double> s(m, 0.0);
    std::vector<detail::CompensatedSum> kappa_sum(m), service_sum(m), demand_sum(m);
    std::vector<detail::CompensatedSum> batch_sum(m);
    std::vector<std::vector<double>> batch_means(m);
    detail::CompensatedSum supply_sum;

    SimulationResult res;
    res.horizon = T;
    res.max_queue.assign(m, 0.0);
    res.empty_slots.assign(m, 0);

    if (opt.trace) {
        *opt.trace << std::setprecision(12) << "t,c";
        for (std::size_t i = 0; i < m; ++i) {
            *opt.trace << ",S_" << i << ",F_" << i << ",Q_" << i << ",kappa_" << i;
        }
        *opt.trace << '\n';
    }

    std::uint64_t batch_start = 0;
    std::size_t batch_index = 0;
    for (std::uint64_t t = 0; t < T; ++t) {
        const double c = availability.at(rng, 0, t);
        supply_sum.add(c);
        const double ratio = c / c_bar;
        double total = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            s[i] = policy.rates[i] * ratio;
            total += s[i];
        }
        // Rounding in the products may push the sum a few ulps above c(t).
        while (total > c) {
            const double shrink = std::nextafter(c / total, 0.0);
            total = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                s[i] *= shrink;
                total += s[i];
            }
        }
        if (total > c) {
            ++res.budget_violations;
        }
        if (opt.trace) {
            *opt.trace << t << ',' << c;
        }
        for (std::size_t i = 0; i < m; ++i) {
            const double f = users[i].at(rng, i + 1, t);
            const auto r = detail::step_unchecked(q[i], s[i], f, opt.buffer_cap);
            if (opt.trace) {
                *opt.trace << ',' << s[i] << ',' << f << ',' << q[i] << ',' << r.shortfall;
            }
            q[i] = r.next_queue;
            kappa_sum[i].add(r.shortfall);
            batch_sum[i].add(r.shortfall);
            service_sum[i].add(s[i]);
            demand_sum[i].add(f);
            res.max_queue[i] = std::max(res.max_queue[i], q[i]);
            if (q[i] == 0.0) {
                ++res.empty_slots[i];
            }
        }
        if (opt.trace) {
            *opt.trace << '\n';
        }
        const bool last_batch = batch_index + 1 == batches;
        if ((!last_batch && t + 1 - batch_start == batch_len) || t + 1 == T) {
            const auto len = static_cast<double>(t + 1 - batch_start);
            for (std::size_t i = 0; i < m; ++i) {
                batch_means[i].push_back(batch_sum[i].value() / len);
                batch_sum[i] = {};
            }
            batch_start = t + 1;
            ++batch_index;
        }
    }

    const auto Td = static_cast<double>(T);
    res.mean_availability = supply_sum.value() / Td;
    for (std::size_t i = 0; i < m; ++i) {
        res.mean_shortfall.push_back(kappa_sum[i].value() / Td);
        res.shortfall_stderr.push_back(detail::batch_stderr(batch_means[i]));
        res.mean_service.push_back(service_sum[i].value() / Td);
        res.mean_consumption.push_back(demand_sum[i].value() / Td);
        res.final_queue.push_back(q[i]);
        res.queue_growth.push_back(q[i] / Td);
    }
    if (!opt.costs.empty()) {
        double total = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            res.dissatisfaction.push_back(opt.costs[i](res.mean_shortfall[i]));
            total += res.dissatisfaction.back();
        }
        res.normalized_dissatisfaction = total / static_cast<double>(m);
    }
    return res;
}

struct StabilityTrace {
    std::vector<std::pair<std::uint64_t, double>> checkpoints;  // (t, Q(t)/t)
    std::uint64_t empty_slots = 0;                              // slots with Q(t) = 0
    double final_growth = 0.0;                                  // Q(T)/T
};

/// Single queue served at constant rate s < f; samples Q(t)/t at
/// logarithmically spaced t (ten per decade) and at T.
inline StabilityTrace stability_trace(const ConsumptionProcess& consumption, double service, std::uint64_t horizon,
                                      std::uint64_t seed = 0) {
    if (auto rep = consumption.validate(); !rep.empty()) {
        throw precondition_error("invalid consumption process: " + join(rep));
    }
    if (!(service >= 0.0) || !(service < consumption.mean())) {
        throw precondition_error("stability trace requires 0 <= s < f");
    }
    if (horizon < 1000) {
        throw precondition_error("stability trace requires T >= 1000");
    }
    std::vector<std::uint64_t> marks;
    for (int k = 10;; ++k) {
        const auto t = static_cast<std::uint64_t>(std::llround(std::pow(10.0, k / 10.0)));
        if (t >= horizon) {
            break;
        }
        if (marks.empty() || marks.back() != t) {
            marks.push_back(t);
        }
    }
    marks.push_back(horizon);

    const CounterRng rng(seed);
    StabilityTrace out;
    double q = 0.0;
    std::size_t next = 0;
    for (std::uint64_t t = 1; t <= horizon; ++t) {
        q = detail::step_unchecked(q, service, consumption.at(rng, 1, t - 1), std::nullopt).next_queue;
        if (q == 0.0) {
            ++out.empty_slots;
        }
        if (t == marks[next]) {
            out.checkpoints.emplace_back(t, q / static_cast<double>(t));
            ++next;
        }
    }
    out.final_growth = q / static_cast<double>(horizon);
    return out;
}

}  // namespace shortfall
