#include "refmort/bootstrap.hpp"
#include "refmort/errors.hpp"
#include "refmort/scenario.hpp"
#include "refmort/simulator.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace refmort;

namespace {

const SimOutput &sample() {
    static const SimOutput sim = simulate(load_scenario("nordic-small"), 9);
    return sim;
}

BootstrapConfig config(int b, std::uint64_t seed, int jobs = 1) {
    BootstrapConfig c;
    c.replicates = b;
    c.seed = seed;
    c.jobs = jobs;
    return c;
}

bool same_bits(const std::vector<double> &a, const std::vector<double> &b) {
    if (a.size() != b.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) {
            return false;
        }
    }
    return true;
}

} // namespace

TEST(Bootstrap, QuantileType7) {
    EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4}, 0.5), 2.5);
    EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.0), 1.0);
    EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4}, 1.0), 4.0);
    EXPECT_DOUBLE_EQ(quantile({0, 10}, 0.025), 0.25);
    EXPECT_THROW(quantile({}, 0.5), InputError);
}

TEST(Bootstrap, ConfigValidation) {
    const auto &sim = sample();
    EXPECT_THROW(bootstrap_estimate(Method::M2, sim.table, sim.hist, config(1, 0)), ConfigError);
    auto c = config(10, 0);
    c.ci_level = 1.0;
    EXPECT_THROW(bootstrap_estimate(Method::M2, sim.table, sim.hist, c), ConfigError);
}

TEST(Bootstrap, TwoReplicatesAreBitIdenticalAcrossRuns) {
    const auto &sim = sample();
    const auto a = bootstrap_estimate(Method::M2, sim.table, sim.hist, config(2, 42));
    const auto b = bootstrap_estimate(Method::M2, sim.table, sim.hist, config(2, 42));
    ASSERT_TRUE(a.ci_low && b.ci_low);
    EXPECT_EQ(std::memcmp(&*a.ci_low, &*b.ci_low, sizeof(double)), 0);
    EXPECT_EQ(std::memcmp(&*a.ci_high, &*b.ci_high, sizeof(double)), 0);
}

TEST(Bootstrap, IndependentOfWorkerCount) {
    const auto &sim = sample();
    for (auto m : {Method::M1, Method::M3}) {
        const auto one = bootstrap_estimate(m, sim.table, sim.hist, config(12, 7, 1));
        const auto four = bootstrap_estimate(m, sim.table, sim.hist, config(12, 7, 4));
        EXPECT_TRUE(same_bits(one.bootstrap->replicates, four.bootstrap->replicates));
    }
    const auto other = bootstrap_estimate(Method::M1, sim.table, sim.hist, config(12, 8, 1));
    const auto one = bootstrap_estimate(Method::M1, sim.table, sim.hist, config(12, 7, 1));
    EXPECT_FALSE(same_bits(one.bootstrap->replicates, other.bootstrap->replicates));
}

TEST(Bootstrap, IntervalIsOrderedAndPositive) {
    const auto &sim = sample();
    const auto r = bootstrap_estimate(Method::M2, sim.table, sim.hist, config(60, 3));
    ASSERT_TRUE(r.ci_low && r.ci_high);
    EXPECT_GT(*r.ci_low, 0.0);
    EXPECT_LE(*r.ci_low, *r.ci_high);
    EXPECT_EQ(r.bootstrap->replicates.size(), 60u);
    EXPECT_EQ(r.bootstrap->failed, 0u);
    EXPECT_FALSE(r.bootstrap->unreliable);
    // point estimate equals the plain estimator on the same data
    EXPECT_EQ(r.screening_rate_ratio, estimate_method2(sim.table).screening_rate_ratio);
}

TEST(Bootstrap, DegenerateScreenedDataPropagatesError) {
    auto t = sample().table;
    for (auto &c : t.cells) {
        if (c.group != ScreeningGroup::NoScreening) {
            c.cases = 0.0;
        }
    }
    EXPECT_THROW(bootstrap_estimate(Method::M1, t, sample().hist, config(5, 1)), EstimationError);
}

TEST(Bootstrap, FailedReplicatesFlagged) {
    // A single screened death: most replicates lose it and M1's ratio becomes 0.
    auto t = sample().table;
    bool kept = false;
    for (auto &c : t.cells) {
        if (c.group == ScreeningGroup::PostNew) {
            c.cases = (!kept && c.prop_target > 0.5) ? 1.0 : 0.0;
            kept = kept || c.cases > 0.0;
        }
    }
    const auto r = bootstrap_estimate(Method::M1, t, sample().hist, config(40, 2));
    EXPECT_GT(r.bootstrap->failed, 4u);
    EXPECT_TRUE(r.bootstrap->unreliable);
    for (std::size_t i = 0; i < r.bootstrap->replicates.size(); ++i) {
        EXPECT_EQ(std::isnan(r.bootstrap->replicates[i]), !r.bootstrap->converged[i]);
    }
}

TEST(Bootstrap, ResamplingMoments) {
    const auto &sim = sample();
    std::mt19937_64 rng(1);
    double total = 0.0;
    const int draws = 200;
    for (int k = 0; k < draws; ++k) {
        const auto h = resample_histogram(sim.hist, rng);
        for (std::size_t b = 0; b < h.band_count(); ++b) {
            EXPECT_EQ(h.band_total(b), sim.hist.band_total(b));
        }
        total += resample_table(sim.table, rng).total_cases();
    }
    const double mean = total / draws;
    const double observed = sim.table.total_cases();
    EXPECT_NEAR(mean, observed, 4.0 * std::sqrt(observed / draws));
}

TEST(Bootstrap, ReplicateCsv) {
    BootstrapSummary s;
    s.replicates = {0.8, NAN};
    s.converged = {true, false};
    std::ostringstream out;
    write_replicates_csv(s, out);
    EXPECT_EQ(out.str(), "replicate,estimate,converged\n0,0.8,1\n1,NA,0\n");
}
