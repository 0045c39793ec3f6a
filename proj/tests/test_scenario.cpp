#include "refmort/errors.hpp"
#include "refmort/scenario.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace refmort;

namespace {

std::string minimal() {
    return "years = 1990 2000\n"
           "ages = 50 69\n"
           "invite_ages = 50 69\n"
           "true_screening_ratio = 0.8\n"
           "baseline_log_rate = -7\n"
           "person_years = 1000\n"
           "spline_df = 2\n"
           "year_coef = 0 0\n"
           "cohort_coef = 0 0\n"
           "age_coef = 1 0\n"
           "region.a = 1995 1 0\n"
           "region.b = never 2 0.1\n"
           "lag_max_months = 3\n"
           "lag.50-60 = probs 0.5 0.3 0.2\n"
           "lag.60-70 = weibull 1 2\n";
}

} // namespace

TEST(Scenario, BuiltinNordicSmall) {
    const auto s = load_scenario("nordic-small");
    EXPECT_EQ(s.name, "nordic-small");
    EXPECT_EQ(s.regions.size(), 6u);
    EXPECT_EQ(s.years, (IntRange{1986, 2009}));
    EXPECT_EQ(s.ages, (IntRange{50, 79}));
    EXPECT_EQ(s.true_screening_ratio, 0.75);
    for (const auto &r : s.regions) {
        ASSERT_TRUE(r.rollout);
        EXPECT_GE(*r.rollout, 1995.0);
        EXPECT_LE(*r.rollout, 2005.0);
    }
    // median lag around three years
    const auto &p = s.lag.probabilities(0);
    double cum = 0.0;
    int median = 0;
    while (cum < 0.5) {
        cum += p[static_cast<std::size_t>(median++)];
    }
    EXPECT_GT(median, 24);
    EXPECT_LT(median, 48);
}

TEST(Scenario, ParsesMinimalText) {
    const auto s = parse_scenario(minimal());
    EXPECT_EQ(s.regions.size(), 2u);
    EXPECT_FALSE(s.regions[1].rollout);
    EXPECT_EQ(s.lag.probabilities(0), (std::vector<double>{0.0, 0.5, 0.3, 0.2}));
    const auto schedule = s.schedule();
    EXPECT_EQ(*schedule.invitation_time("a", 1940), 1995.0);
}

TEST(Scenario, OverridesReplaceKeys) {
    const auto s = parse_scenario(minimal(), {{"true_screening_ratio", "1"}});
    EXPECT_EQ(s.true_screening_ratio, 1.0);
}

TEST(Scenario, WeibullDiscretisation) {
    const auto p = weibull_lag_probabilities(1.0, 10.0, 50);
    EXPECT_EQ(p[0], 0.0);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
    const double norm = 1.0 - std::exp(-5.0);
    EXPECT_NEAR(p[1], (1.0 - std::exp(-0.1)) / norm, 1e-12);
}

TEST(Scenario, InvariantViolationsAreConfigErrors) {
    auto bad = [](const std::string &from, const std::string &to) {
        auto text = minimal();
        text.replace(text.find(from), from.size(), to);
        return text;
    };
    EXPECT_THROW(parse_scenario(bad("probs 0.5 0.3 0.2", "probs 0.5 0.3 0.1")), ConfigError);
    EXPECT_THROW(parse_scenario(bad("person_years = 1000", "person_years = 0")), ConfigError);
    EXPECT_THROW(parse_scenario(bad("region.a = 1995", "region.a = 1980")), ConfigError);
    EXPECT_THROW(parse_scenario(bad("year_coef = 0 0", "year_coef = 0")), ConfigError);
    EXPECT_THROW(parse_scenario(bad("lag.60-70", "lag.61-70")), ConfigError);
    EXPECT_THROW(parse_scenario(bad("ages = 50 69", "ages = 50 69\nmystery = 1")), ConfigError);
    EXPECT_THROW(parse_scenario(bad("true_screening_ratio = 0.8", "true_screening_ratio = x")),
                 ConfigError);
    EXPECT_THROW(parse_scenario(bad("years = 1990 2000\n", "")), ConfigError);
    EXPECT_THROW(load_scenario("no-such-scenario"), ConfigError);
}
