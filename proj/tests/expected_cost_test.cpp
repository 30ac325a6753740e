#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "shortfall/expected_cost.hpp"

using namespace shortfall;

TEST(EvalK, UniformLinearExamples) {
    const ExpectedCost k(CostFunction::linear(1), Prior::uniform(1, 2));
    EXPECT_TRUE(k.uses_closed_form());
    EXPECT_DOUBLE_EQ(eval_K(k, 0.0), 1.5);
    EXPECT_DOUBLE_EQ(eval_K(k, 1.5), 0.125);
    EXPECT_EQ(eval_K(k, 2.0), 0.0);
}

TEST(EvalK, ZeroAtUpperEndForEveryFamily) {
    const std::vector<Prior> priors{Prior::uniform(0.5, 2), Prior::truncated_exponential(0.5, 2, 1.3),
                                    Prior::piecewise_constant(0.5, 2, {3, 2, 1})};
    const std::vector<CostFunction> costs{CostFunction::linear(1), CostFunction::sqrt(2), CostFunction::log1p(1),
                                          CostFunction::piecewise({{0, 0}, {1, 2}, {2, 2.5}})};
    for (const auto& p : priors) {
        for (const auto& v : costs) {
            EXPECT_EQ(eval_K(ExpectedCost(v, p), p.hi()), 0.0);
            EXPECT_NEAR(ExpectedCost(v, p, KMethod::quadrature).evaluate(p.hi() - 1e-12), 0.0, 1e-9);
        }
    }
}

TEST(EvalK, OutsideDomainThrows) {
    const ExpectedCost k(CostFunction::linear(1), Prior::uniform(1, 2));
    EXPECT_THROW(eval_K(k, -0.1), domain_error);
    EXPECT_THROW(eval_K(k, 2.1), domain_error);
}

// Reference values computed independently with 30-digit arbitrary-precision
// quadrature.
TEST(EvalK, TruncatedExponentialSqrtReference) {
    const ExpectedCost k(CostFunction::sqrt(1), Prior::truncated_exponential(1, 3, 1));
    EXPECT_FALSE(k.uses_closed_form());
    EXPECT_NEAR(k(0.0), 1.283810245362796, 1e-9);
    EXPECT_NEAR(k(0.5), 1.0636751234204882, 1e-9);
    EXPECT_NEAR(k(1.0), 0.75695279425965285, 1e-9);
    EXPECT_NEAR(k(2.0), 0.16122545385868679, 1e-9);
    EXPECT_NEAR(k(2.9), 0.0034355253128696391, 1e-9);
}

TEST(EvalK, TruncatedExponentialLog1pReference) {
    const ExpectedCost k(CostFunction::log1p(1), Prior::truncated_exponential(0.5, 2, 2));
    EXPECT_NEAR(k(0.0), 0.63735158056546199, 1e-9);
    EXPECT_NEAR(k(0.25), 0.49304387545326499, 1e-9);
    EXPECT_NEAR(k(1.0), 0.09276053364389219, 1e-9);
    EXPECT_NEAR(k(1.5), 0.01648600017344761, 1e-9);
}

TEST(EvalK, PiecewisePriorSqrtReference) {
    const ExpectedCost k(CostFunction::sqrt(1), Prior::piecewise_constant(1, 3, {0.5, 0.3, 0.2}));
    EXPECT_NEAR(k(0.0), 1.3259845215053825, 1e-9);
    EXPECT_NEAR(k(1.2), 0.66740203465499758, 1e-9);
    EXPECT_NEAR(k(2.5), 0.070710678118654756, 1e-9);
}

TEST(EvalK, UniformSqrtAndLog1pMatchAntiderivatives) {
    for (double s = 0.0; s <= 3.0; s += 0.03) {
        const ExpectedCost sq(CostFunction::sqrt(1.7), Prior::uniform(1, 3));
        const ExpectedCost lg(CostFunction::log1p(0.6), Prior::uniform(1, 3));
        ASSERT_NEAR(sq.evaluate(s), ref::uniform_sqrt_k(1, 3, 1.7, s), 1e-9) << s;
        ASSERT_NEAR(lg.evaluate(s), ref::uniform_log1p_k(1, 3, 0.6, s), 1e-9) << s;
    }
}

TEST(EvalK, ClosedFormAgreesWithQuadrature) {
    const std::vector<CostFunction> costs{CostFunction::linear(1.3),
                                          CostFunction::piecewise({{0, 0}, {0.4, 1}, {1.1, 1.5}, {2, 1.6}})};
    for (const auto& v : costs) {
        const Prior p = Prior::uniform(0.7, 2.9);
        const ExpectedCost exact(v, p);
        const ExpectedCost numeric(v, p, KMethod::quadrature);
        ASSERT_TRUE(exact.uses_closed_form());
        for (int j = 0; j <= 100; ++j) {
            const double s = p.hi() * j / 100.0;
            ASSERT_NEAR(exact(s), numeric(s), 1e-8) << s;
        }
    }
    for (int j = 0; j <= 100; ++j) {
        const double s = 2.9 * j / 100.0;
        ASSERT_NEAR(ExpectedCost(CostFunction::linear(1.3), Prior::uniform(0.7, 2.9))(s),
                    ref::uniform_linear_k(0.7, 2.9, 1.3, s), 1e-12);
    }
}

TEST(EvalKProperties, NonIncreasingAndNonNegative) {
    ref::Generator gen(31);
    for (int rep = 0; rep < 60; ++rep) {
        const double a = gen.uniform(0, 2);
        const double b = a + gen.uniform(0.2, 3);
        const Prior p = rep % 3 == 0   ? Prior::uniform(a, b)
                        : rep % 3 == 1 ? Prior::truncated_exponential(a, b, gen.uniform(0.1, 4))
                                       : Prior::piecewise_constant(a, b, {4, 4, 2, 1});
        const ExpectedCost k(gen.cost(static_cast<std::size_t>(rep)), p);
        double prev = k(0.0);
        for (int j = 1; j <= 200; ++j) {
            const double cur = k(j == 200 ? b : b * j / 200.0);
            ASSERT_GE(cur, -1e-12);
            ASSERT_LE(cur, prev + 1e-9);
            prev = cur;
        }
    }
}

TEST(EvalKProperties, MonteCarloAtZero) {
    const std::vector<std::pair<CostFunction, Prior>> cases{
        {CostFunction::sqrt(1), Prior::truncated_exponential(1, 3, 1)},
        {CostFunction::log1p(2), Prior::piecewise_constant(0.5, 2.5, {3, 1})},
        {CostFunction::piecewise({{0, 0}, {1, 2}, {3, 3}}), Prior::uniform(0, 4)},
    };
    std::mt19937_64 rng(32);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (const auto& [v, p] : cases) {
        const int n = 1000000;
        double sum = 0.0;
        double sq = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x = v(ref::sample_prior(p, u(rng)));
            sum += x;
            sq += x * x;
        }
        const double mean = sum / n;
        const double se = std::sqrt((sq / n - mean * mean) / (n - 1));
        EXPECT_NEAR(ExpectedCost(v, p)(0.0), mean, 3 * se);
    }
}

TEST(CheckCurvature, UniformLinearOffsetSupport) {
    const ExpectedCost k(CostFunction::linear(1), Prior::uniform(1, 2));
    const auto r = check_curvature(k, 11);
    EXPECT_TRUE(r.ok());
    EXPECT_FALSE(r.concave_segment_empty);
    EXPECT_NEAR(r.max_second_diff_concave, 0.0, 1e-14);
    // K = (b - s)^2 / (2 (b - a)) on [a, b]: second difference h^2 / (b - a)
    const double h = 1.0 / 11;
    EXPECT_NEAR(r.min_second_diff_convex, h * h, 1e-14);
}

TEST(CheckCurvature, ZeroLowerEnd) {
    const auto r = check_curvature(ExpectedCost(CostFunction::linear(1), Prior::uniform(0, 1)), 21);
    EXPECT_TRUE(r.concave_segment_empty);
    EXPECT_FALSE(r.notes.empty());
    EXPECT_GT(r.min_second_diff_convex, 0.0);
    EXPECT_TRUE(r.ok());
}

TEST(CheckCurvature, TruncatedExponentialSqrt) {
    const auto r = check_curvature(ExpectedCost(CostFunction::sqrt(1), Prior::truncated_exponential(1, 3, 1)), 41);
    EXPECT_TRUE(r.ok());
    EXPECT_LT(r.max_second_diff_concave, 0.0);
}

TEST(CheckCurvature, RejectsTinyGrid) {
    EXPECT_THROW(check_curvature(ExpectedCost(CostFunction::linear(1), Prior::uniform(0, 1)), 4),
                 precondition_error);
}

TEST(CheckCurvature, DetectsIncreasingPriorViolation) {
    // An increasing density breaks the convex segment; the check must notice.
    const Prior increasing(0.0, 1.0, PiecewiseConstantNonIncreasing{{0.2, 1.8}});
    const auto r = check_curvature(ExpectedCost(CostFunction::sqrt(1), increasing), 41);
    EXPECT_FALSE(r.convex_ok());
}

TEST(CheckCurvature, MatrixOfPriorsAndCosts) {
    const std::vector<Prior> priors{Prior::uniform(1, 2), Prior::uniform(0, 3),
                                    Prior::truncated_exponential(1, 3, 1),
                                    Prior::truncated_exponential(0.5, 2, 4),
                                    Prior::piecewise_constant(1, 3, {0.5, 0.3, 0.2})};
    const std::vector<CostFunction> costs{CostFunction::linear(1), CostFunction::sqrt(1), CostFunction::log1p(1),
                                          CostFunction::piecewise({{0, 0}, {0.7, 1}, {1.9, 1.4}})};
    for (const auto& p : priors) {
        for (const auto& v : costs) {
            const auto r = check_curvature(ExpectedCost(v, p), 33);
            EXPECT_TRUE(r.ok()) << r.max_second_diff_concave << ' ' << r.min_second_diff_convex;
        }
    }
}
