#include "refmort/errors.hpp"
#include "refmort/lag_model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace refmort;

namespace {

LagHistogram one_band(std::vector<std::int64_t> counts) {
    return LagHistogram({{50, 60}}, {std::move(counts)});
}

LagHistogram random_histogram(std::mt19937_64 &rng, int bands, int width) {
    std::uniform_int_distribution<int> n(0, 6);
    std::vector<AgeBand> b;
    std::vector<std::vector<std::int64_t>> counts;
    for (int k = 0; k < bands; ++k) {
        b.push_back({50.0 + 10 * k, 60.0 + 10 * k});
        std::vector<std::int64_t> row(static_cast<std::size_t>(width));
        for (auto &v : row) {
            v = n(rng) > 3 ? n(rng) : 0;
        }
        row[static_cast<std::size_t>(width) / 2] += 1; // nonempty band
        counts.push_back(row);
    }
    return LagHistogram(b, counts);
}

} // namespace

TEST(LagModel, HandCountedSurvival) {
    std::vector<std::int64_t> c(11, 0);
    c[2] = 3;
    c[10] = 1;
    const auto s = estimate_lag_survival(one_band(c));
    EXPECT_DOUBLE_EQ(s.at(0, 6), 0.25);
    EXPECT_EQ(s.at(0, 0), 1.0);
    EXPECT_EQ(s.at(0, 11), 0.0); // beyond support
    EXPECT_EQ(s.at(0, 500), 0.0);
    EXPECT_THROW(s.at(0, -1), InputError);
    EXPECT_EQ(s.at_age(55, 2), 1.0);
    EXPECT_EQ(s.at_age(55, 3), 0.25);
    EXPECT_THROW(s.at_age(61, 0), InputError);
}

TEST(LagModel, EmptyBandNamesBand) {
    const LagHistogram h({{50, 60}, {60, 70}}, {{1, 2}, {0, 0}});
    try {
        estimate_lag_survival(h);
        FAIL();
    } catch (const EstimationError &e) {
        EXPECT_NE(std::string(e.what()).find("60"), std::string::npos) << e.what();
    }
    EXPECT_THROW(mle_lag_params(h), EstimationError);
}

TEST(LagModel, HistogramValidation) {
    EXPECT_THROW(LagHistogram({{50, 60}, {55, 70}}, {{1}, {1}}), ValidationError);
    EXPECT_THROW(LagHistogram({{60, 70}, {50, 60}}, {{1}, {1}}), ValidationError);
    EXPECT_THROW(one_band({1, -1}), ValidationError);
    const LagHistogram padded({{50, 60}, {60, 70}}, {{1}, {1, 2, 3}});
    EXPECT_EQ(padded.counts(0).size(), 3u);
    EXPECT_EQ(padded.max_lag(), 2);
    EXPECT_EQ(padded.total(), 7);
}

TEST(LagModel, HistogramCsvRoundTrip) {
    std::mt19937_64 rng(3);
    const auto h = random_histogram(rng, 3, 40);
    std::ostringstream out;
    h.write_csv(out);
    std::istringstream in(out.str());
    EXPECT_EQ(LagHistogram::read_csv(in), h);

    std::istringstream dup("age_lo,age_hi,lag_months,deaths\n50,60,1,2\n50,60,1,3\n");
    EXPECT_THROW(LagHistogram::read_csv(dup), ValidationError);
    std::istringstream missing("age_lo,age_hi,deaths\n");
    EXPECT_THROW(LagHistogram::read_csv(missing), SchemaError);
}

TEST(LagModel, SurvivalFromParams) {
    // Lag probabilities 0.5, 0.3, 0.2 on lags of 1, 2 and 3 months.
    const LagParameters p({{50, 60}}, {{0.0, 0.5, 0.3, 0.2}});
    EXPECT_EQ(survival_from_params(p, 1, 0), 1.0);
    EXPECT_DOUBLE_EQ(survival_from_params(p, 3, 0), 0.2);
    EXPECT_EQ(survival_from_params(p, 4, 0), 0.0);
    EXPECT_EQ(survival_from_params(p, 0, 0), 1.0);
}

TEST(LagModel, ParameterValidation) {
    EXPECT_THROW(LagParameters({{50, 60}}, {{0.5, 0.4}}), ValidationError);
    EXPECT_THROW(LagParameters({{50, 60}}, {{1.5, -0.5}}), ValidationError);
    EXPECT_NO_THROW(LagParameters({{50, 60}}, {{0.5, 0.5 + 1e-12}}));
}

TEST(LagModel, LogLikelihoodExamples) {
    EXPECT_EQ(lag_log_likelihood(one_band({0, 0}), LagParameters({{50, 60}}, {{0.4, 0.6}})), 0.0);
    const LagParameters p({{50, 60}}, {{2.0 / 3.0, 1.0 / 3.0}});
    EXPECT_NEAR(lag_log_likelihood(one_band({2, 1}), p),
                2 * std::log(2.0 / 3.0) + std::log(1.0 / 3.0), 1e-14);
    // with the coefficient 3!/(2!1!) = 3
    EXPECT_NEAR(lag_log_likelihood(one_band({2, 1}), p, true),
                std::log(3.0) + 2 * std::log(2.0 / 3.0) + std::log(1.0 / 3.0), 1e-13);
    const LagParameters q({{50, 60}}, {{1.0, 0.0}});
    EXPECT_EQ(lag_log_likelihood(one_band({2, 1}), q), -INFINITY);
}

TEST(LagModel, MleIsEmpiricalProportions) {
    auto p = mle_lag_params(one_band({3, 1}));
    EXPECT_DOUBLE_EQ(p.probabilities(0)[0], 0.75);
    EXPECT_DOUBLE_EQ(p.probabilities(0)[1], 0.25);
    p = mle_lag_params(one_band({5, 0, 0}));
    EXPECT_EQ(p.probabilities(0), (std::vector<double>{1.0, 0.0, 0.0}));
    p = mle_lag_params(one_band({2, 2, 2}));
    for (double v : p.probabilities(0)) {
        EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
    }
}

TEST(LagModel, PropertiesOnRandomHistograms) {
    std::mt19937_64 rng(11);
    std::gamma_distribution<double> g(1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const auto h = random_histogram(rng, 3, 30);
        const auto s = estimate_lag_survival(h);
        const auto mle = mle_lag_params(h);
        const double best = lag_log_likelihood(h, mle);
        for (std::size_t b = 0; b < h.band_count(); ++b) {
            EXPECT_EQ(s.at(b, 0), 1.0);
            double sum = 0.0;
            for (double v : mle.probabilities(b)) {
                sum += v;
            }
            EXPECT_NEAR(sum, 1.0, 1e-12);
            for (int d = 0; d <= h.max_lag() + 2; ++d) {
                // bridge between the empirical survival and the parameter form
                EXPECT_NEAR(survival_from_params(mle, d, b), s.at(b, d), 1e-12);
                if (d > 0) {
                    EXPECT_LE(s.at(b, d), s.at(b, d - 1));
                }
            }
        }
        // The MLE beats random probability vectors (100 over all trials).
        for (int k = 0; k < 2; ++k) {
            std::vector<std::vector<double>> probs;
            for (std::size_t b = 0; b < h.band_count(); ++b) {
                std::vector<double> p(30);
                double total = 0.0;
                for (auto &v : p) {
                    v = g(rng);
                    total += v;
                }
                for (auto &v : p) {
                    v /= total;
                }
                probs.push_back(p);
            }
            EXPECT_GE(best, lag_log_likelihood(h, LagParameters(h.bands(), probs)));
        }
    }
}

TEST(LagModel, SurvivalCsvHasDocumentedColumns) {
    const auto s = estimate_lag_survival(one_band({1, 1}));
    std::ostringstream out;
    s.write_csv(out);
    EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "age_lo,age_hi,delta_months,rho");
}

TEST(LagModel, TenYearBandsAndMonths) {
    const auto b = ten_year_bands(50, 79);
    ASSERT_EQ(b.size(), 3u);
    EXPECT_EQ(b[2], (AgeBand{70, 80}));
    EXPECT_EQ(*find_band(b, 69.9), 1u);
    EXPECT_FALSE(find_band(b, 80));
    EXPECT_EQ(months_since(0.5), 6);
    EXPECT_EQ(months_since(0.02), 0);
}
