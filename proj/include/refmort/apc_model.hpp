#pragma once

// Age-period-cohort-region log-rate model: design construction from
// mortality cells, fitting, prediction and a plain-text serialisation.
//
// Column order follows the conventional model formula
//   ns(year, 5) + ns(cohort, 5) + ns(age, 5) + region - 1 [+ scr_indicator]

#include "refmort/poisson_glm.hpp"
#include "refmort/registry.hpp"
#include "refmort/spline.hpp"

#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace refmort {

inline constexpr int kDefaultSplineDf = 5;
inline constexpr const char *kScreeningLabel = "scr_indicator";

/// Covariate layout: knots for each smooth term, region levels and whether the
/// screening indicator column is present.
struct ApcDesign {
    KnotSet period_knots;
    KnotSet cohort_knots;
    KnotSet age_knots;
    std::vector<std::string> regions;
    bool screening_term = false;

    /// Knots from the distinct year, cohort and age values of `cells`.
    static ApcDesign from_cells(std::span<const MortalityCell> cells, bool screening_term,
                                int df = kDefaultSplineDf);

    std::vector<std::string> labels() const;
    std::size_t columns() const;
    /// Design rows for `cells`; throws InputError for an unknown region.
    DesignMatrix build(std::span<const MortalityCell> cells) const;
    void fill_row(const MortalityCell &cell, std::span<double> row) const;

    friend bool operator==(const ApcDesign &, const ApcDesign &) = default;
};

struct ApcFit {
    ApcDesign design;
    GlmFit glm;

    /// Expected deaths exp(x beta) * person_years * prop_target for each cell.
    std::vector<double> expected(std::span<const MortalityCell> cells) const;
    /// Expected deaths ignoring prop_target and the screening term: the
    /// no-screening mean for the stratum.
    std::vector<double> expected_without_screening(std::span<const MortalityCell> cells) const;
};

/// Cells usable in a log-linear fit: positive person-years and prop_target.
struct FitRows {
    std::vector<MortalityCell> cells;
    std::size_t excluded_zero_person_years = 0;
    std::size_t excluded_zero_prop_target = 0;
};
FitRows usable_rows(std::span<const MortalityCell> cells);

/// log(person_years) + log(prop_target) per cell.
std::vector<double> log_offsets(std::span<const MortalityCell> cells);

/// Fits the APC-region model to `cells` (all must be usable rows).
ApcFit fit_apc(std::span<const MortalityCell> cells, bool screening_term,
               const GlmOptions &options = {}, int df = kDefaultSplineDf);

/// Text format, one record per line:
///   refmort-apc-model 1
///   knots <year|cohort|age> <lower> <upper> <interior...>
///   regions <r1> <r2> ...
///   screening <0|1>
///   coef <label> <value|aliased> [<standard error>]
///   deviance <value>
///   iterations <n> converged <0|1>
void write_model(const ApcFit &fit, std::ostream &out);
/// Restores design and coefficients (covariance restored on the diagonal only).
ApcFit read_model(std::istream &in);

} // namespace refmort
