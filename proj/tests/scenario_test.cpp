#include <gtest/gtest.h>

#include "shortfall/scenario.hpp"

using namespace shortfall;

namespace {

const char* kKnown = R"(schema = 1
kind = known
budget = 4

[user]
cost = sqrt 1
rate = 4

[user]
cost = linear 1
rate = 2
)";

const char* kUnknown = R"(schema = 1
kind = unknown
budget = 2.5
symmetric = true

[user]
cost = pwl 0:0 1:1 3:2
prior = texp 1 2 0.7
process = bernoulli 3 0.5
count = 3

[simulation]
horizon = 5000
seed = 42
availability = cyclo 0.25 2 3
buffer = 2
batches = 50

[output]
path = out.csv
format = csv
)";

std::vector<ScenarioIssue> issues_of(const std::string& text) {
    try {
        parse_scenario(text);
    } catch (const scenario_error& e) {
        return e.issues();
    }
    return {};
}

bool has_issue(const std::vector<ScenarioIssue>& issues, std::size_t line, const std::string& needle) {
    for (const auto& i : issues) {
        if (i.line == line && i.message.find(needle) != std::string::npos) {
            return true;
        }
    }
    return false;
}

}  // namespace

TEST(ParseScenario, MinimalKnown) {
    const auto sc = parse_scenario(kKnown);
    EXPECT_EQ(sc.size(), 2u);
    EXPECT_EQ(sc.kind, ProblemKind::known);
    const auto inst = sc.known();
    EXPECT_EQ(inst.mean_rates, (std::vector<double>{4, 2}));
    EXPECT_EQ(inst.costs[0], CostFunction::sqrt(1));
    EXPECT_EQ(inst.budget, 4.0);
    EXPECT_FALSE(sc.simulation.has_value());
    EXPECT_EQ(sc.availability().mean(), 4.0);
    EXPECT_EQ(sc.processes()[1], ConsumptionProcess::deterministic(2));
}

TEST(ParseScenario, FullUnknown) {
    const auto sc = parse_scenario(kUnknown);
    EXPECT_EQ(sc.size(), 3u);
    EXPECT_TRUE(sc.symmetric);
    const auto inst = sc.unknown();
    EXPECT_EQ(inst.priors[2], Prior::truncated_exponential(1, 2, 0.7));
    EXPECT_EQ(inst.costs[1], CostFunction::piecewise({{0, 0}, {1, 1}, {3, 2}}));
    ASSERT_TRUE(sc.simulation.has_value());
    EXPECT_EQ(sc.simulation->horizon, 5000u);
    EXPECT_EQ(sc.simulation->seed, 42u);
    EXPECT_EQ(sc.simulation->buffer, std::optional<double>(2.0));
    EXPECT_EQ(sc.simulation->batches, 50u);
    EXPECT_EQ(sc.availability().mean(), 2.5);
    EXPECT_EQ(sc.output.path, std::optional<std::string>("out.csv"));
    EXPECT_EQ(sc.output.format, std::optional<std::string>("csv"));
}

TEST(ParseScenario, NegativeBudget) {
    std::string text = kKnown;
    text.replace(text.find("budget = 4"), 10, "budget = -1");
    const auto issues = issues_of(text);
    EXPECT_TRUE(has_issue(issues, 3, "budget must be positive"));
}

TEST(ParseScenario, SymmetricWithDifferentPriors) {
    const std::string text = R"(schema = 1
kind = unknown
budget = 1
symmetric = true
[user]
cost = linear 1
prior = uniform 0 1
[user]
cost = linear 1
prior = uniform 0 2
)";
    EXPECT_TRUE(has_issue(issues_of(text), 8, "identical priors"));
}

TEST(ParseScenario, UnknownKeysAndSectionsRejected) {
    const std::string text = R"(schema = 1
kind = known
budget = 1
colour = blue
[user]
cost = linear 1
rate = 1
rte = 2
[plots]
)";
    const auto issues = issues_of(text);
    EXPECT_TRUE(has_issue(issues, 4, "unknown key 'colour'"));
    EXPECT_TRUE(has_issue(issues, 8, "unknown key 'rte'"));
    EXPECT_TRUE(has_issue(issues, 9, "plots"));
}

TEST(ParseScenario, SyntaxErrorsCarryLines) {
    const std::string text = R"(schema = 1
kind = known
budget = 1
[user]
cost = cubic 1
rate = abc
this line has no equals sign
)";
    const auto issues = issues_of(text);
    EXPECT_TRUE(has_issue(issues, 5, "cubic"));
    EXPECT_TRUE(has_issue(issues, 6, "abc"));
    EXPECT_EQ(std::count_if(issues.begin(), issues.end(), [](const auto& i) { return i.line == 7; }), 1);
}

TEST(ParseScenario, MissingFields) {
    const auto issues = issues_of("schema = 1\n");
    EXPECT_TRUE(has_issue(issues, 0, "kind"));
    EXPECT_TRUE(has_issue(issues, 0, "budget"));
    EXPECT_TRUE(has_issue(issues, 0, "[user]"));
}

TEST(ParseScenario, AvailabilityMustMatchBudget) {
    std::string text = kKnown;
    text += "[simulation]\navailability = constant 3\n";
    EXPECT_TRUE(has_issue(issues_of(text), 3, "must equal the budget"));
}

TEST(ParseScenario, ValidationErrorPointsAtUserBlock) {
    std::string text = kKnown;
    text.replace(text.find("rate = 2"), 8, "rate = 0");
    EXPECT_TRUE(has_issue(issues_of(text), 9, "mean rate must be positive"));
}

TEST(ParseScenario, Comments) {
    std::string text = "# leading comment\n";
    text += kKnown;
    text.replace(text.find("budget = 4"), 10, "budget = 4   # trailing");
    EXPECT_EQ(parse_scenario(text).budget, 4.0);
}

TEST(SerializeScenario, RoundTrip) {
    for (const char* text : {kKnown, kUnknown}) {
        const auto sc = parse_scenario(text);
        const auto again = parse_scenario(serialize_scenario(sc));
        EXPECT_EQ(again, sc);
        EXPECT_EQ(serialize_scenario(again), serialize_scenario(sc));
    }
}

TEST(SerializeScenario, RoundTripKeepsAwkwardNumbers) {
    Scenario sc;
    sc.kind = ProblemKind::known;
    sc.budget = 0.1 + 0.2;
    sc.users.push_back({CostFunction::log1p(1.0 / 3.0), 2.0 / 7.0, std::nullopt,
                        ConsumptionProcess::uniform(0, 4.0 / 7.0)});
    sc.users.push_back({CostFunction::piecewise({{0, 0}, {0.1, 0.3}, {1e-3 + 1, 0.7}}), 1e-5, std::nullopt,
                        std::nullopt});
    const auto again = parse_scenario(serialize_scenario(sc));
    EXPECT_EQ(again, sc);
}
