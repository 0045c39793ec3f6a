#pragma once

// Stratum-level mortality data: one row per Lexis cell (year x birth cohort x
// region x screening group), ingestion from CSV, validation and the risk-time
// split that turns raw screened strata into the aligned analysis table.

#include "refmort/lag_model.hpp"

#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace refmort {

enum class ScreeningGroup {
    NoScreening, ///< stratum without a screening history
    PostOld,     ///< post-invitation deaths diagnosed before first invitation
    PostNew,     ///< post-invitation deaths diagnosed after first invitation
};

std::string_view to_string(ScreeningGroup group);
/// Parses `none | post_old | post_new`; throws ValidationError otherwise.
ScreeningGroup parse_screening_group(std::string_view text);

/// Closed integer interval.
struct IntRange {
    int min = 0;
    int max = 0;
    bool contains(int v) const noexcept { return v >= min && v <= max; }
    friend bool operator==(const IntRange &, const IntRange &) = default;
};

struct MortalityCell {
    int year = 0;
    int cohort = 0;
    std::string region;
    ScreeningGroup group = ScreeningGroup::NoScreening;
    double person_years = 0.0;
    /// Death count. Integral for registry data; expected (noiseless) tables
    /// produced by the simulator carry real-valued means here.
    double cases = 0.0;
    /// Years since first invitation at the midpoint of the stratum's
    /// post-invitation interval; absent for NoScreening cells.
    std::optional<double> time_since_invitation;
    /// Multiplier on expected deaths: 1 without screening history, rho for
    /// PostOld and 1 - rho for PostNew.
    double prop_target = 1.0;
    int scr_indicator = 0;

    /// Synthetic age, always derived.
    int age() const noexcept { return year - cohort; }

    friend bool operator==(const MortalityCell &, const MortalityCell &) = default;
};

struct MortalityTable {
    std::vector<MortalityCell> cells;
    IntRange age_range;
    IntRange study_window;

    std::size_t size() const noexcept { return cells.size(); }
    bool empty() const noexcept { return cells.empty(); }
    /// Risk time with each screened PostOld/PostNew pair counted once.
    double total_person_years() const;
    double total_cases() const;

    friend bool operator==(const MortalityTable &, const MortalityTable &) = default;
};

/// Canonical column names of the analysis CSV, overridable per file.
struct ColumnMap {
    std::string year = "year";
    std::string cohort = "cohort";
    std::string region = "region";
    std::string screening_group = "screening_group";
    std::string person_years = "person_years";
    std::string cases = "cases";
    std::string time_since_invitation = "time_since_invitation";
    std::string prop_target = "prop_target";
    std::string scr_indicator = "scr_indicator";
};

/// One invariant violation. `row` is the 0-based cell index.
struct ValidationIssue {
    std::size_t row = 0;
    std::string key;
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;
    bool ok() const noexcept { return issues.empty(); }
    std::string summary(std::size_t max_lines = 20) const;
};

/// Checks every MortalityCell / MortalityTable invariant and reports all
/// violations; never throws.
ValidationReport validate(const MortalityTable &table);

/// Reads and validates the analysis CSV. Age range and study window are taken
/// from the data. Throws SchemaError for a missing column and
/// ValidationError (with line number) for bad rows or duplicate keys.
MortalityTable parse_mortality_csv(std::istream &in, const ColumnMap &schema = {},
                                   const std::string &source = "mortality csv");
MortalityTable parse_mortality_csv(const std::string &path, const ColumnMap &schema = {});
void write_mortality_csv(const MortalityTable &table, std::ostream &out);

/// Per-region screening rollout. A region without `first_invitation` is
/// never screened. Cohorts are invited from the later of the rollout date and
/// reaching `min_age`, provided they are no older than `max_age` at rollout.
struct RolloutEntry {
    std::optional<double> first_invitation;
    int min_age = 0;
    int max_age = 0;
};

class RolloutSchedule {
public:
    RolloutSchedule() = default;
    explicit RolloutSchedule(std::map<std::string, RolloutEntry> entries);

    const std::map<std::string, RolloutEntry> &entries() const noexcept { return entries_; }
    bool has_region(const std::string &region) const { return entries_.contains(region); }
    const RolloutEntry &entry(const std::string &region) const;

    /// First invitation time for `cohort` in `region`, or nullopt when the
    /// cohort is never invited there.
    std::optional<double> invitation_time(const std::string &region, int cohort) const;

    /// Throws ConfigError when a rollout date lies outside [start, end + 1).
    void check_window(IntRange window) const;

    static RolloutSchedule read_csv(std::istream &in, const std::string &source = "schedule csv");
    static RolloutSchedule read_csv_file(const std::string &path);
    void write_csv(std::ostream &out) const;

private:
    std::map<std::string, RolloutEntry> entries_;
};

/// Pre-split stratum: screened rows carry deaths already classified by
/// diagnosis before/after first invitation.
struct RawCell {
    int year = 0;
    int cohort = 0;
    std::string region;
    bool screened = false;
    double person_years = 0.0;
    double cases_pre_dx = 0.0;
    double cases_post_dx = 0.0;

    int age() const noexcept { return year - cohort; }
    friend bool operator==(const RawCell &, const RawCell &) = default;
};

struct RawTable {
    std::vector<RawCell> cells;
    friend bool operator==(const RawTable &, const RawTable &) = default;
};

/// Raw CSV: `year, cohort, region, screening_group, person_years,
/// cases_pre_dx, cases_post_dx` with screening_group `none | screened`.
/// A file in the split (analysis) format is refused as already split.
RawTable parse_raw_csv(std::istream &in, const std::string &source = "raw csv");
RawTable parse_raw_csv(const std::string &path);
void write_raw_csv(const RawTable &raw, std::ostream &out);

/// Stratum time since invitation: midpoint of [max(year, invitation), year + 1)
/// minus the invitation time.
double stratum_time_since_invitation(int year, double invitation);

/// Splits each screened raw stratum into a PostOld/PostNew pair sharing its
/// person-years, with prop_target rho and 1 - rho taken from `lag` for the
/// stratum's age band and months since invitation. Unscreened strata pass
/// through with prop_target 1. Throws ConfigError for a region without a
/// schedule entry and ValidationError for a screened stratum that precedes
/// its invitation.
MortalityTable split_risk_time(const RawTable &raw, const RolloutSchedule &schedule,
                               const LagSurvival &lag);

/// Recomputes prop_target on every screened cell from its stored time since
/// invitation and a new lag survival table.
MortalityTable reapply_lag(const MortalityTable &table, const LagSurvival &lag);

/// Months since invitation for a screened cell; throws for NoScreening cells.
int delta_months(const MortalityCell &cell);

} // namespace refmort
