#include "refmort/apc_model.hpp"
#include "refmort/errors.hpp"
#include "refmort/scenario.hpp"
#include "refmort/simulator.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

using namespace refmort;

namespace {

const SimOutput &sample() {
    static const SimOutput sim = simulate(load_scenario("nordic-small"), 21);
    return sim;
}

} // namespace

TEST(ApcModel, LabelsFollowModelFormula) {
    const auto rows = usable_rows(sample().table.cells);
    const auto d = ApcDesign::from_cells(rows.cells, true);
    const auto labels = d.labels();
    ASSERT_EQ(labels.size(), d.columns());
    EXPECT_EQ(labels.front(), "ns(year)1");
    EXPECT_EQ(labels[5], "ns(cohort)1");
    EXPECT_EQ(labels[10], "ns(age)1");
    EXPECT_EQ(labels.back(), kScreeningLabel);
    EXPECT_EQ(d.regions.size(), 6u);
    EXPECT_TRUE(std::is_sorted(d.regions.begin(), d.regions.end()));
}

TEST(ApcModel, UsableRowsCountsExclusions) {
    std::vector<MortalityCell> cells(3);
    cells[0].person_years = 1.0;
    cells[1].person_years = 0.0;
    cells[2].person_years = 2.0;
    cells[2].prop_target = 0.0;
    const auto rows = usable_rows(cells);
    EXPECT_EQ(rows.cells.size(), 1u);
    EXPECT_EQ(rows.excluded_zero_person_years, 1u);
    EXPECT_EQ(rows.excluded_zero_prop_target, 1u);
}

TEST(ApcModel, UnknownRegionRejected) {
    const auto rows = usable_rows(sample().table.cells);
    const auto d = ApcDesign::from_cells(rows.cells, false);
    auto cell = rows.cells.front();
    cell.region = "atlantis";
    EXPECT_THROW(d.build(std::vector<MortalityCell>{cell}), InputError);
}

// Fitted means do not depend on which of the collinear columns is dropped.
TEST(ApcModel, AliasingAllocationInvariance) {
    const auto rows = usable_rows(sample().table.cells);
    const auto d = ApcDesign::from_cells(rows.cells, true);
    const auto X = d.build(rows.cells);
    const auto offset = log_offsets(rows.cells);
    std::vector<double> y;
    for (const auto &c : rows.cells) {
        y.push_back(c.cases);
    }
    const auto fit = fit_poisson(X, y, offset);
    ASSERT_FALSE(fit.aliased.empty());

    // Put the region block first so a spline column is dropped instead.
    std::vector<Eigen::Index> order(static_cast<std::size_t>(X.cols()));
    std::iota(order.begin(), order.end(), 0);
    std::rotate(order.begin(), order.begin() + 15, order.begin() + 21);
    DesignMatrix P;
    P.values.resize(X.rows(), X.cols());
    for (std::size_t k = 0; k < order.size(); ++k) {
        P.values.col(static_cast<Eigen::Index>(k)) = X.values.col(order[k]);
        P.labels.push_back(X.labels[static_cast<std::size_t>(order[k])]);
    }
    const auto refit = fit_poisson(P, y, offset);
    EXPECT_NE(refit.aliased, fit.aliased);
    const auto a = predict_mean(fit, X, offset);
    const auto b = predict_mean(refit, P, offset);
    EXPECT_LT(((a - b).array() / a.array()).abs().maxCoeff(), 1e-8);
    EXPECT_NEAR(*fit.coefficient(kScreeningLabel), *refit.coefficient(kScreeningLabel), 1e-8);
}

TEST(ApcModel, ExpectedWithoutScreeningDropsTermAndProp) {
    const auto rows = usable_rows(sample().table.cells);
    const auto fit = fit_apc(rows.cells, true);
    const double effect = std::exp(*fit.glm.coefficient(kScreeningLabel));
    for (const auto &c : rows.cells) {
        if (c.group != ScreeningGroup::PostNew) {
            continue;
        }
        const std::vector<MortalityCell> one{c};
        const double with = fit.expected(one)[0];
        const double without = fit.expected_without_screening(one)[0];
        EXPECT_NEAR(with, without * c.prop_target * effect, 1e-12 * without);
        break;
    }
}

TEST(ApcModel, ModelFileRoundTrip) {
    const auto rows = usable_rows(sample().table.cells);
    const auto fit = fit_apc(rows.cells, true);
    std::stringstream io;
    write_model(fit, io);
    const auto back = read_model(io);
    EXPECT_EQ(back.design, fit.design);
    EXPECT_EQ(back.glm.aliased, fit.glm.aliased);
    const auto a = fit.expected(rows.cells);
    const auto b = back.expected(rows.cells);
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_NEAR(a[i], b[i], 1e-12 * a[i]);
    }
    EXPECT_NEAR(*back.glm.standard_error(kScreeningLabel),
                *fit.glm.standard_error(kScreeningLabel), 1e-15);

    std::istringstream bad("refmort-apc-model 9\n");
    EXPECT_THROW(read_model(bad), InputError);
}
