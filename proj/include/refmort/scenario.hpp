#pragma once

// Synthetic registry scenarios. A scenario fixes the Lexis grid, the regional
// rollout, the true log-rate surface, person-years, the true lag distribution
// and the true screening rate ratio.
//
// File format: one `key = value` per line, `#` starts a comment.
//
//   name = nordic-small
//   years = 1986 2009                  first and last calendar year
//   ages = 50 79                       youngest and oldest attained age
//   invite_ages = 50 69                screening target ages
//   true_screening_ratio = 0.75
//   baseline_log_rate = -7.6
//   person_years = 20000               per cell before region weights
//   target_screened_deaths = 2000      optional: rescales person_years
//   spline_df = 5
//   year_coef = c1 ... c5              natural-spline coefficients
//   cohort_coef = ...
//   age_coef = ...
//   region.<name> = <rollout year | never> <py weight> <log-rate offset>
//   lag_max_months = 180
//   lag.<lo>-<hi> = weibull <shape> <scale months>
//   lag.<lo>-<hi> = probs <p_1> <p_2> ...   (bins from 1 month)

#include "refmort/lag_model.hpp"
#include "refmort/registry.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace refmort {

struct ScenarioRegion {
    std::string name;
    std::optional<double> rollout;
    double weight = 1.0;
    double log_rate_offset = 0.0;
};

struct Scenario {
    std::string name;
    IntRange years;
    IntRange ages;
    int invite_min_age = 0;
    int invite_max_age = 0;
    double true_screening_ratio = 1.0;
    double baseline_log_rate = 0.0;
    double person_years = 0.0;
    std::optional<double> target_screened_deaths;
    int spline_df = 5;
    std::vector<double> year_coef;
    std::vector<double> cohort_coef;
    std::vector<double> age_coef;
    std::vector<ScenarioRegion> regions;
    /// True lag probabilities per band over bins 0 ... lag_max_months.
    LagParameters lag;

    RolloutSchedule schedule() const;
    /// Throws ConfigError on any violated invariant.
    void validate() const;
};

/// Parses the key-value format; `overrides` replace keys from the text.
Scenario parse_scenario(const std::string &text, const std::map<std::string, std::string> &overrides = {},
                        const std::string &source = "scenario");
/// Loads a built-in scenario by name, or a file when `name_or_path` is not one.
Scenario load_scenario(const std::string &name_or_path,
                       const std::map<std::string, std::string> &overrides = {});

/// Scenario files compiled into the library, keyed by name.
const std::map<std::string, std::string> &builtin_scenarios();

/// Discretised Weibull lag: bin i (1 <= i <= max) gets F(i) - F(i - 1),
/// renormalised over the truncated support; bin 0 gets nothing.
std::vector<double> weibull_lag_probabilities(double shape, double scale_months, int max_months);

} // namespace refmort
