#include "refmort/registry.hpp"

#include "refmort/csv.hpp"
#include "refmort/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

namespace refmort {

namespace {

constexpr double kPairTolerance = 1e-12;

std::string key_string(int year, int cohort, const std::string &region) {
    return "(year " + std::to_string(year) + ", cohort " + std::to_string(cohort) + ", region " +
           region + ")";
}

std::string key_string(const MortalityCell &c) {
    return key_string(c.year, c.cohort, c.region) + " " + std::string(to_string(c.group));
}

std::string row_prefix(const std::string &source, std::size_t line) {
    return source + " line " + std::to_string(line) + ": ";
}

} // namespace

std::string_view to_string(ScreeningGroup group) {
    switch (group) {
    case ScreeningGroup::NoScreening:
        return "none";
    case ScreeningGroup::PostOld:
        return "post_old";
    case ScreeningGroup::PostNew:
        return "post_new";
    }
    return "none";
}

ScreeningGroup parse_screening_group(std::string_view text) {
    if (text == "none") {
        return ScreeningGroup::NoScreening;
    }
    if (text == "post_old") {
        return ScreeningGroup::PostOld;
    }
    if (text == "post_new") {
        return ScreeningGroup::PostNew;
    }
    throw ValidationError("unknown screening_group '" + std::string(text) +
                          "' (expected none, post_old or post_new)");
}

double MortalityTable::total_person_years() const {
    double sum = 0.0;
    for (const auto &c : cells) {
        if (c.group != ScreeningGroup::PostOld) {
            sum += c.person_years;
        }
    }
    return sum;
}

double MortalityTable::total_cases() const {
    double sum = 0.0;
    for (const auto &c : cells) {
        sum += c.cases;
    }
    return sum;
}

std::string ValidationReport::summary(std::size_t max_lines) const {
    std::ostringstream out;
    for (std::size_t i = 0; i < issues.size() && i < max_lines; ++i) {
        out << "row " << issues[i].row << " " << issues[i].key << ": " << issues[i].message
            << '\n';
    }
    if (issues.size() > max_lines) {
        out << "... and " << (issues.size() - max_lines) << " more\n";
    }
    return out.str();
}

ValidationReport validate(const MortalityTable &table) {
    ValidationReport report;
    auto flag = [&](std::size_t row, const MortalityCell &c, std::string message) {
        report.issues.push_back({row, key_string(c), std::move(message)});
    };

    using Key = std::tuple<int, int, std::string, ScreeningGroup>;
    std::map<Key, std::size_t> seen;
    struct Pair {
        std::optional<std::size_t> old_row;
        std::optional<std::size_t> new_row;
    };
    std::map<std::tuple<int, int, std::string>, Pair> pairs;

    for (std::size_t i = 0; i < table.cells.size(); ++i) {
        const auto &c = table.cells[i];
        if (!std::isfinite(c.person_years) || c.person_years < 0.0) {
            flag(i, c, "person_years must be a nonnegative number");
        }
        if (!std::isfinite(c.cases) || c.cases < 0.0) {
            flag(i, c, "cases must be a nonnegative number");
        }
        const bool post_new = c.group == ScreeningGroup::PostNew;
        if (c.scr_indicator != (post_new ? 1 : 0)) {
            flag(i, c, "scr_indicator must be 1 exactly for post_new cells");
        }
        if (c.group == ScreeningGroup::NoScreening) {
            if (c.prop_target != 1.0) {
                flag(i, c, "prop_target must be 1 for cells without screening history");
            }
            if (c.time_since_invitation) {
                flag(i, c, "time_since_invitation must be empty for cells without screening");
            }
        } else {
            if (!(c.prop_target >= 0.0 && c.prop_target <= 1.0)) {
                flag(i, c, "prop_target must lie in [0, 1]");
            }
            if (!c.time_since_invitation || !std::isfinite(*c.time_since_invitation) ||
                *c.time_since_invitation < 0.0) {
                flag(i, c, "screened cells need a nonnegative time_since_invitation");
            }
            auto &pair = pairs[{c.year, c.cohort, c.region}];
            (c.group == ScreeningGroup::PostOld ? pair.old_row : pair.new_row) = i;
        }
        if (!table.age_range.contains(c.age())) {
            flag(i, c, "age " + std::to_string(c.age()) + " outside study age range");
        }
        if (!table.study_window.contains(c.year)) {
            flag(i, c, "year outside study window");
        }
        if (!seen.emplace(Key{c.year, c.cohort, c.region, c.group}, i).second) {
            flag(i, c, "duplicate cell key");
        }
    }

    for (const auto &[key, pair] : pairs) {
        const auto &[year, cohort, region] = key;
        if (!pair.old_row || !pair.new_row) {
            const auto row = pair.old_row ? *pair.old_row : *pair.new_row;
            report.issues.push_back({row, key_string(year, cohort, region),
                                     "screened stratum lacks its post_old/post_new partner"});
            continue;
        }
        const auto &o = table.cells[*pair.old_row];
        const auto &n = table.cells[*pair.new_row];
        if (o.person_years != n.person_years) {
            report.issues.push_back({*pair.new_row, key_string(year, cohort, region),
                                     "post_old and post_new person_years differ"});
        }
        const double sum = o.prop_target + n.prop_target;
        if (std::abs(sum - 1.0) > kPairTolerance) {
            report.issues.push_back({*pair.new_row, key_string(year, cohort, region),
                                     "post_old and post_new prop_target sum to " +
                                         csv::format_double(sum) + ", not 1"});
        }
        if (o.time_since_invitation != n.time_since_invitation) {
            report.issues.push_back({*pair.new_row, key_string(year, cohort, region),
                                     "post_old and post_new time_since_invitation differ"});
        }
    }
    std::stable_sort(report.issues.begin(), report.issues.end(),
                     [](const auto &a, const auto &b) { return a.row < b.row; });
    return report;
}

MortalityTable parse_mortality_csv(std::istream &in, const ColumnMap &schema,
                                   const std::string &source) {
    const auto doc = csv::read(in);
    const auto c_year = doc.require_column(schema.year, source);
    const auto c_cohort = doc.require_column(schema.cohort, source);
    const auto c_region = doc.require_column(schema.region, source);
    const auto c_group = doc.require_column(schema.screening_group, source);
    const auto c_py = doc.require_column(schema.person_years, source);
    const auto c_cases = doc.require_column(schema.cases, source);
    const auto c_tsi = doc.require_column(schema.time_since_invitation, source);
    const auto c_prop = doc.require_column(schema.prop_target, source);
    const auto c_scr = doc.require_column(schema.scr_indicator, source);

    MortalityTable table;
    std::vector<std::size_t> lines;
    table.cells.reserve(doc.rows.size());
    for (const auto &row : doc.rows) {
        const auto &f = row.fields;
        MortalityCell c;
        c.year = static_cast<int>(csv::parse_integer(f[c_year], row.line, schema.year));
        c.cohort = static_cast<int>(csv::parse_integer(f[c_cohort], row.line, schema.cohort));
        c.region = f[c_region];
        if (c.region.empty()) {
            throw ValidationError(row_prefix(source, row.line) + "empty region");
        }
        try {
            c.group = parse_screening_group(f[c_group]);
        } catch (const ValidationError &e) {
            throw ValidationError(row_prefix(source, row.line) + e.what());
        }
        c.person_years = csv::parse_double(f[c_py], row.line, schema.person_years);
        c.cases = static_cast<double>(csv::parse_integer(f[c_cases], row.line, schema.cases));
        if (c.person_years < 0.0) {
            throw ValidationError(row_prefix(source, row.line) + "negative person_years");
        }
        if (c.cases < 0.0) {
            throw ValidationError(row_prefix(source, row.line) + "negative cases");
        }
        if (!f[c_tsi].empty()) {
            c.time_since_invitation =
                csv::parse_double(f[c_tsi], row.line, schema.time_since_invitation);
        }
        c.prop_target = csv::parse_double(f[c_prop], row.line, schema.prop_target);
        c.scr_indicator =
            static_cast<int>(csv::parse_integer(f[c_scr], row.line, schema.scr_indicator));
        table.cells.push_back(std::move(c));
        lines.push_back(row.line);
    }

    if (!table.cells.empty()) {
        auto [ymin, ymax] = std::minmax_element(
            table.cells.begin(), table.cells.end(),
            [](const auto &a, const auto &b) { return a.year < b.year; });
        auto [amin, amax] = std::minmax_element(
            table.cells.begin(), table.cells.end(),
            [](const auto &a, const auto &b) { return a.age() < b.age(); });
        table.study_window = {ymin->year, ymax->year};
        table.age_range = {amin->age(), amax->age()};
    }

    const auto report = validate(table);
    if (!report.ok()) {
        const auto &first = report.issues.front();
        throw ValidationError(row_prefix(source, lines[first.row]) + first.key + ": " +
                              first.message +
                              (report.issues.size() > 1
                                   ? " (+" + std::to_string(report.issues.size() - 1) +
                                         " more issues)"
                                   : std::string{}));
    }
    return table;
}

MortalityTable parse_mortality_csv(const std::string &path, const ColumnMap &schema) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open mortality file '" + path + "'");
    }
    return parse_mortality_csv(in, schema, path);
}

void write_mortality_csv(const MortalityTable &table, std::ostream &out) {
    out << "year,cohort,region,screening_group,person_years,cases,time_since_invitation,"
           "prop_target,scr_indicator\n";
    for (const auto &c : table.cells) {
        out << c.year << ',' << c.cohort << ',' << c.region << ',' << to_string(c.group) << ','
            << csv::format_double(c.person_years) << ',' << csv::format_double(c.cases) << ','
            << (c.time_since_invitation ? csv::format_double(*c.time_since_invitation) : "")
            << ',' << csv::format_double(c.prop_target) << ',' << c.scr_indicator << '\n';
    }
}

RolloutSchedule::RolloutSchedule(std::map<std::string, RolloutEntry> entries)
    : entries_(std::move(entries)) {
    for (const auto &[region, e] : entries_) {
        if (e.min_age > e.max_age) {
            throw ConfigError("schedule for region " + region + ": min_age exceeds max_age");
        }
        if (e.first_invitation && !std::isfinite(*e.first_invitation)) {
            throw ConfigError("schedule for region " + region + ": invalid invitation date");
        }
    }
}

const RolloutEntry &RolloutSchedule::entry(const std::string &region) const {
    auto it = entries_.find(region);
    if (it == entries_.end()) {
        throw ConfigError("rollout schedule has no entry for region '" + region + "'");
    }
    return it->second;
}

std::optional<double> RolloutSchedule::invitation_time(const std::string &region,
                                                       int cohort) const {
    const auto &e = entry(region);
    if (!e.first_invitation) {
        return std::nullopt;
    }
    const double rollout = *e.first_invitation;
    if (rollout - cohort >= e.max_age + 1) {
        return std::nullopt;
    }
    return std::max(rollout, static_cast<double>(cohort + e.min_age));
}

void RolloutSchedule::check_window(IntRange window) const {
    for (const auto &[region, e] : entries_) {
        if (e.first_invitation &&
            (*e.first_invitation < window.min || *e.first_invitation >= window.max + 1)) {
            throw ConfigError("rollout date for region " + region + " lies outside the study window");
        }
    }
}

RolloutSchedule RolloutSchedule::read_csv(std::istream &in, const std::string &source) {
    const auto doc = csv::read(in);
    const auto c_region = doc.require_column("region", source);
    const auto c_date = doc.require_column("first_invitation_year", source);
    const auto c_min = doc.require_column("min_age", source);
    const auto c_max = doc.require_column("max_age", source);
    std::map<std::string, RolloutEntry> entries;
    for (const auto &row : doc.rows) {
        RolloutEntry e;
        if (!row.fields[c_date].empty() && row.fields[c_date] != "never") {
            e.first_invitation =
                csv::parse_double(row.fields[c_date], row.line, "first_invitation_year");
        }
        e.min_age = static_cast<int>(csv::parse_integer(row.fields[c_min], row.line, "min_age"));
        e.max_age = static_cast<int>(csv::parse_integer(row.fields[c_max], row.line, "max_age"));
        if (!entries.emplace(row.fields[c_region], e).second) {
            throw ConfigError(row_prefix(source, row.line) + "second schedule entry for region '" +
                              row.fields[c_region] + "'");
        }
    }
    return RolloutSchedule(std::move(entries));
}

RolloutSchedule RolloutSchedule::read_csv_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open schedule file '" + path + "'");
    }
    return read_csv(in, path);
}

void RolloutSchedule::write_csv(std::ostream &out) const {
    out << "region,first_invitation_year,min_age,max_age\n";
    for (const auto &[region, e] : entries_) {
        out << region << ','
            << (e.first_invitation ? csv::format_double(*e.first_invitation) : "") << ','
            << e.min_age << ',' << e.max_age << '\n';
    }
}

RawTable parse_raw_csv(std::istream &in, const std::string &source) {
    const auto doc = csv::read(in);
    if (doc.column("prop_target") || doc.column("scr_indicator")) {
        throw InputError(source + ": table is already split (has prop_target/scr_indicator "
                                  "columns); refusing to split it again");
    }
    const auto c_year = doc.require_column("year", source);
    const auto c_cohort = doc.require_column("cohort", source);
    const auto c_region = doc.require_column("region", source);
    const auto c_group = doc.require_column("screening_group", source);
    const auto c_py = doc.require_column("person_years", source);
    const auto c_pre = doc.require_column("cases_pre_dx", source);
    const auto c_post = doc.require_column("cases_post_dx", source);

    RawTable raw;
    std::set<std::tuple<int, int, std::string, bool>> keys;
    for (const auto &row : doc.rows) {
        const auto &f = row.fields;
        RawCell c;
        c.year = static_cast<int>(csv::parse_integer(f[c_year], row.line, "year"));
        c.cohort = static_cast<int>(csv::parse_integer(f[c_cohort], row.line, "cohort"));
        c.region = f[c_region];
        if (f[c_group] == "none") {
            c.screened = false;
        } else if (f[c_group] == "screened") {
            c.screened = true;
        } else {
            throw ValidationError(row_prefix(source, row.line) + "screening_group must be " +
                                  "'none' or 'screened' in raw data, found '" + f[c_group] + "'");
        }
        c.person_years = csv::parse_double(f[c_py], row.line, "person_years");
        c.cases_pre_dx =
            static_cast<double>(csv::parse_integer(f[c_pre], row.line, "cases_pre_dx"));
        c.cases_post_dx =
            f[c_post].empty()
                ? 0.0
                : static_cast<double>(csv::parse_integer(f[c_post], row.line, "cases_post_dx"));
        if (c.person_years < 0.0) {
            throw ValidationError(row_prefix(source, row.line) + "negative person_years");
        }
        if (c.cases_pre_dx < 0.0 || c.cases_post_dx < 0.0) {
            throw ValidationError(row_prefix(source, row.line) + "negative death count");
        }
        if (!c.screened && c.cases_post_dx != 0.0) {
            throw ValidationError(row_prefix(source, row.line) +
                                  "unscreened stratum cannot have post-invitation diagnoses");
        }
        if (!keys.emplace(c.year, c.cohort, c.region, c.screened).second) {
            throw ValidationError(row_prefix(source, row.line) + "duplicate stratum " +
                                  key_string(c.year, c.cohort, c.region));
        }
        raw.cells.push_back(std::move(c));
    }
    return raw;
}

RawTable parse_raw_csv(const std::string &path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open raw mortality file '" + path + "'");
    }
    return parse_raw_csv(in, path);
}

void write_raw_csv(const RawTable &raw, std::ostream &out) {
    out << "year,cohort,region,screening_group,person_years,cases_pre_dx,cases_post_dx\n";
    for (const auto &c : raw.cells) {
        out << c.year << ',' << c.cohort << ',' << c.region << ','
            << (c.screened ? "screened" : "none") << ',' << csv::format_double(c.person_years)
            << ',' << csv::format_double(c.cases_pre_dx) << ','
            << csv::format_double(c.cases_post_dx) << '\n';
    }
}

double stratum_time_since_invitation(int year, double invitation) {
    const double start = std::max(static_cast<double>(year), invitation);
    return 0.5 * (start + static_cast<double>(year) + 1.0) - invitation;
}

int delta_months(const MortalityCell &cell) {
    if (!cell.time_since_invitation) {
        throw InputError("cell " + key_string(cell) + " has no time since invitation");
    }
    return months_since(*cell.time_since_invitation);
}

MortalityTable split_risk_time(const RawTable &raw, const RolloutSchedule &schedule,
                               const LagSurvival &lag) {
    MortalityTable table;
    table.cells.reserve(raw.cells.size() * 2);
    for (const auto &r : raw.cells) {
        if (!schedule.has_region(r.region)) {
            throw ConfigError("region '" + r.region + "' has no rollout schedule entry");
        }
        MortalityCell base;
        base.year = r.year;
        base.cohort = r.cohort;
        base.region = r.region;
        base.person_years = r.person_years;
        if (!r.screened) {
            base.group = ScreeningGroup::NoScreening;
            base.cases = r.cases_pre_dx + r.cases_post_dx;
            table.cells.push_back(std::move(base));
            continue;
        }
        const auto invitation = schedule.invitation_time(r.region, r.cohort);
        if (!invitation) {
            throw ValidationError("screened stratum " + key_string(r.year, r.cohort, r.region) +
                                  " belongs to a cohort that is never invited");
        }
        if (*invitation >= r.year + 1) {
            throw ValidationError("screened stratum " + key_string(r.year, r.cohort, r.region) +
                                  " precedes its first invitation");
        }
        const double tsi = stratum_time_since_invitation(r.year, *invitation);
        const double rho = lag.at_age(r.age(), months_since(tsi));
        base.time_since_invitation = tsi;

        MortalityCell old_cell = base;
        old_cell.group = ScreeningGroup::PostOld;
        old_cell.cases = r.cases_pre_dx;
        old_cell.prop_target = rho;
        MortalityCell new_cell = std::move(base);
        new_cell.group = ScreeningGroup::PostNew;
        new_cell.cases = r.cases_post_dx;
        new_cell.prop_target = 1.0 - rho;
        new_cell.scr_indicator = 1;
        table.cells.push_back(std::move(old_cell));
        table.cells.push_back(std::move(new_cell));
    }
    if (!table.cells.empty()) {
        int ymin = table.cells.front().year, ymax = ymin;
        int amin = table.cells.front().age(), amax = amin;
        for (const auto &c : table.cells) {
            ymin = std::min(ymin, c.year);
            ymax = std::max(ymax, c.year);
            amin = std::min(amin, c.age());
            amax = std::max(amax, c.age());
        }
        table.study_window = {ymin, ymax};
        table.age_range = {amin, amax};
    }
    return table;
}

MortalityTable reapply_lag(const MortalityTable &table, const LagSurvival &lag) {
    MortalityTable out = table;
    for (auto &c : out.cells) {
        if (c.group == ScreeningGroup::NoScreening) {
            continue;
        }
        const double rho = lag.at_age(c.age(), delta_months(c));
        c.prop_target = c.group == ScreeningGroup::PostOld ? rho : 1.0 - rho;
    }
    return out;
}

} // namespace refmort
