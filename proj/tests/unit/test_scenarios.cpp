#include <gtest/gtest.h>

#include <cmath>

#include "maescale/error.hpp"
#include "maescale/random.hpp"
#include "maescale/scenarios.hpp"

using namespace maescale;

TEST(ReferenceScenarios, RowsAreTheReferenceConstants) {
    const auto t = builtin_table1();
    ASSERT_EQ(t.size(), 3u);
    EXPECT_EQ(t[0].label, "Current Test");
    EXPECT_EQ(t[0].i_thousands, 200.0);
    EXPECT_EQ(t[0].ppi, 256.0);
    EXPECT_EQ(t[0].param_count, 300000000);
    EXPECT_EQ(t[0].expected_pct, 40.0);
    EXPECT_EQ(t[1].i_thousands, 2400.0);
    EXPECT_EQ(t[1].ppi, 1280.0);
    EXPECT_EQ(t[1].param_count, 9600000000);
    EXPECT_EQ(t[1].expected_pct, 65.0);
    EXPECT_EQ(t[2].i_thousands, 12600.0);
    EXPECT_EQ(t[2].ppi, 4096.0);
    EXPECT_EQ(t[2].param_count, 522000000000);
    EXPECT_EQ(t[2].expected_pct, 91.0);
}

TEST(ReferenceScenarios, OnlyTheLastRowIsHumanLevel) {
    const auto t = builtin_table1();
    EXPECT_FALSE(is_human_level(*t[0].expected_pct));
    EXPECT_FALSE(is_human_level(*t[1].expected_pct));
    EXPECT_TRUE(is_human_level(*t[2].expected_pct));
}

TEST(ReferenceScenarios, SerializesExactly) {
    EXPECT_EQ(scenarios_to_csv(builtin_table1()),
              "label,i_thousands,ppi,param_count,expected_pct\n"
              "Current Test,200,256,300000000,40\n"
              "4 x Test,2400,1280,9600000000,65\n"
              "10 x Test,12600,4096,522000000000,91\n");
}

TEST(ScenarioCsv, RoundTripsIncludingQuotesAndMissingExpected) {
    std::vector<ScenarioSpec> specs = builtin_table1();
    specs.push_back({"odd, \"label\"", 3.5, 48, 12, std::nullopt});
    const auto back = scenarios_from_csv(scenarios_to_csv(specs));
    ASSERT_EQ(back.size(), specs.size());
    EXPECT_EQ(back[3].label, specs[3].label);
    EXPECT_FALSE(back[3].expected_pct.has_value());
    EXPECT_EQ(back[2].param_count, 522000000000);
    EXPECT_THROW(scenarios_from_csv("label,i\nx,1\n"), ConfigError);
    EXPECT_THROW(scenarios_from_csv("label,i_thousands,ppi,param_count,expected_pct\nx,-1,2,3,4\n"),
                 ConfigError);
}

TEST(Evaluate, BoundaryIsInclusive) {
    const ScenarioSpec s{"edge", std::exp(2.0), std::exp(5.0), 0, 90.0};
    const auto o = evaluate_scenario({9, 0, 0}, s);
    EXPECT_NEAR(o.predicted_pct, 90.0, 1e-12);
    EXPECT_TRUE(is_human_level(90.0));
    EXPECT_FALSE(is_human_level(std::nextafter(90.0, 0.0)));
}

TEST(Evaluate, ResidualAndClamp) {
    const ScenarioSpec s{"x", 1.0, 1.0, 0, 40.0};
    const auto o = evaluate_scenario({2, 4, 5}, s);
    EXPECT_EQ(o.predicted_pct, 40.0);
    EXPECT_EQ(o.residual_vs_expected, 0.0);
    const auto big = evaluate_scenario({10, 4, 5}, s);
    EXPECT_EQ(big.clamped_pct, 100.0);
    EXPECT_TRUE(big.human_level);
    EXPECT_THROW(evaluate_scenario({1, 1, 1}, {"bad", 0.0, 1.0, 0, {}}), DomainError);
}

TEST(Threshold, ClosedFormExamples) {
    const auto p = solve_threshold_ppi({9, 0, 0}, std::exp(2.0), 90.0);
    ASSERT_TRUE(p.reachable());
    EXPECT_NEAR(*p.value, std::exp(5.0), 1e-9);
    const auto i = solve_threshold_i({9, 0, 0}, std::exp(5.0), 90.0);
    ASSERT_TRUE(i.reachable());
    EXPECT_NEAR(*i.value, std::exp(2.0), 1e-12);
}

TEST(Threshold, UnreachableCases) {
    const auto neg = solve_threshold_ppi({-1, 2, 2}, 10.0);
    EXPECT_FALSE(neg.reachable());
    EXPECT_NE(neg.diagnosis.find("negative"), std::string::npos);
    const auto zero = solve_threshold_i({3, 0, -std::log(64.0)}, 64.0);
    EXPECT_FALSE(zero.reachable());
    EXPECT_NE(zero.diagnosis.find("zero"), std::string::npos);
    EXPECT_FALSE(solve_threshold_ppi({1e-300, 10, 0}, 1.0).reachable());
    EXPECT_THROW(solve_threshold_ppi({1, 1, 1}, 0.0), DomainError);
    EXPECT_THROW(solve_threshold_i({1, 1, 1}, -1.0), DomainError);
}

TEST(Threshold, RoundTripProperty) {
    Rng rng(17);
    int solved = 0;
    for (int k = 0; k < 500; ++k) {
        const CanonicalScalingParams p{rng.uniform(0.2, 3), rng.uniform(0, 6), rng.uniform(0, 6)};
        const double i = rng.uniform(0.1, 1000), ppi = rng.uniform(4, 4096);
        if (auto s = solve_threshold_ppi(p, i); s.reachable()) {
            EXPECT_NEAR(predict(p, i, *s.value), 90.0, 1e-9);
            ++solved;
        }
        if (auto s = solve_threshold_i(p, ppi); s.reachable()) {
            EXPECT_NEAR(predict(p, *s.value, ppi), 90.0, 1e-9);
            ++solved;
        }
    }
    EXPECT_GT(solved, 500);
}

TEST(Evaluate, DoesNotMutateParams) {
    const CanonicalScalingParams p{1.5, 2.5, 3.5};
    const auto copy = p;
    for (const auto& s : builtin_table1()) (void)evaluate_scenario(p, s);
    EXPECT_EQ(p, copy);
}
