#pragma once

// Result serialisation and plotting output: JSON estimates, the method
// comparison table, yearly mortality trends by diagnosis timing and an SVG
// line chart of those trends.

#include "refmort/estimators.hpp"

#include <nlohmann/json.hpp>

#include <ostream>
#include <string>
#include <vector>

namespace refmort {

nlohmann::json result_to_json(const EstimateResult &result);

/// Fixed-width table: one row per method with estimate and CI.
void write_comparison_table(const std::vector<EstimateResult> &results, std::ostream &out);

/// Deaths and person-years in one calendar year for one series:
/// `no_screening`, `post_old`, `post_new` or `post_total`.
struct TrendRow {
    int year = 0;
    std::string series;
    double person_years = 0.0;
    double observed = 0.0;
    double fitted = 0.0;
    double observed_rate() const { return person_years > 0.0 ? 1e5 * observed / person_years : 0.0; }
    double fitted_rate() const { return person_years > 0.0 ? 1e5 * fitted / person_years : 0.0; }
};

/// Aggregates the table by year. `fit` (optional) supplies fitted deaths;
/// screened pairs contribute their person-years once to each series.
std::vector<TrendRow> mortality_trends(const MortalityTable &table, const ApcFit *fit);

/// `year,series,person_years,observed,fitted,observed_rate,fitted_rate`
/// with rates per 100,000 person-years.
void write_trends_csv(const std::vector<TrendRow> &rows, std::ostream &out);

/// Observed (solid) and fitted (dashed) rates per series against year.
void write_trends_svg(const std::vector<TrendRow> &rows, std::ostream &out,
                      const std::string &title = "Mortality by year and diagnosis timing");

} // namespace refmort
