#include "refmort/scenario.hpp"

#include "refmort/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace refmort {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> words(const std::string &value) {
    std::istringstream in(value);
    std::vector<std::string> out;
    for (std::string w; in >> w;) {
        out.push_back(w);
    }
    return out;
}

class Reader {
public:
    Reader(std::map<std::string, std::string> values, std::string source)
        : values_(std::move(values)), source_(std::move(source)) {}

    const std::map<std::string, std::string> &values() const { return values_; }

    const std::string &required(const std::string &key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) {
            throw ConfigError(source_ + ": missing key '" + key + "'");
        }
        return it->second;
    }

    double number(const std::string &key, const std::string &text) const {
        double v = 0.0;
        const auto *end = text.data() + text.size();
        const auto [ptr, ec] = std::from_chars(text.data(), end, v);
        if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
            throw ConfigError(source_ + ": key '" + key + "' expects a number, got '" + text + "'");
        }
        return v;
    }

    int integer(const std::string &key, const std::string &text) const {
        const double v = number(key, text);
        if (v != std::floor(v) || std::abs(v) > 1e9) {
            throw ConfigError(source_ + ": key '" + key + "' expects an integer, got '" + text + "'");
        }
        return static_cast<int>(v);
    }

    std::vector<double> numbers(const std::string &key) const {
        std::vector<double> out;
        for (const auto &w : words(required(key))) {
            out.push_back(number(key, w));
        }
        return out;
    }

    double scalar(const std::string &key) const { return number(key, trim(required(key))); }

    IntRange range(const std::string &key) const {
        const auto w = words(required(key));
        if (w.size() != 2) {
            throw ConfigError(source_ + ": key '" + key + "' expects two integers");
        }
        return {integer(key, w[0]), integer(key, w[1])};
    }

    const std::string &source() const { return source_; }

private:
    std::map<std::string, std::string> values_;
    std::string source_;
};

AgeBand parse_band(const std::string &key, const std::string &text, const std::string &source) {
    const auto dash = text.find('-');
    try {
        if (dash == std::string::npos) {
            throw std::invalid_argument(text);
        }
        std::size_t used = 0;
        const double lo = std::stod(text.substr(0, dash), &used);
        const double hi = std::stod(text.substr(dash + 1));
        return {lo, hi};
    } catch (const std::exception &) {
        throw ConfigError(source + ": key '" + key + "' needs an age band like 50-60");
    }
}

} // namespace

std::vector<double> weibull_lag_probabilities(double shape, double scale_months, int max_months) {
    if (!(shape > 0.0) || !(scale_months > 0.0) || max_months < 1) {
        throw ConfigError("Weibull lag needs positive shape, scale and maximum");
    }
    auto cdf = [&](double t) { return -std::expm1(-std::pow(t / scale_months, shape)); };
    std::vector<double> p(static_cast<std::size_t>(max_months) + 1, 0.0);
    for (int i = 1; i <= max_months; ++i) {
        p[static_cast<std::size_t>(i)] = cdf(i) - cdf(i - 1);
    }
    const double total = cdf(max_months);
    for (auto &v : p) {
        v /= total;
    }
    return p;
}

RolloutSchedule Scenario::schedule() const {
    std::map<std::string, RolloutEntry> entries;
    for (const auto &r : regions) {
        entries[r.name] = RolloutEntry{r.rollout, invite_min_age, invite_max_age};
    }
    return RolloutSchedule(std::move(entries));
}

void Scenario::validate() const {
    const std::string where = "scenario '" + name + "': ";
    if (years.min > years.max || ages.min > ages.max) {
        throw ConfigError(where + "empty year or age range");
    }
    if (invite_min_age > invite_max_age || invite_min_age < ages.min || invite_max_age > ages.max) {
        throw ConfigError(where + "invite ages must lie within the age range");
    }
    if (!(true_screening_ratio > 0.0) || !std::isfinite(true_screening_ratio)) {
        throw ConfigError(where + "true_screening_ratio must be positive");
    }
    if (!(person_years > 0.0) || !std::isfinite(person_years)) {
        throw ConfigError(where + "person_years must be positive");
    }
    if (target_screened_deaths && !(*target_screened_deaths > 0.0)) {
        throw ConfigError(where + "target_screened_deaths must be positive");
    }
    for (const auto *coef : {&year_coef, &cohort_coef, &age_coef}) {
        if (coef->size() != static_cast<std::size_t>(spline_df)) {
            throw ConfigError(where + "spline coefficient lists need spline_df entries");
        }
    }
    if (regions.empty()) {
        throw ConfigError(where + "no regions");
    }
    std::set<std::string> names;
    for (const auto &r : regions) {
        if (!names.insert(r.name).second) {
            throw ConfigError(where + "region '" + r.name + "' listed twice");
        }
        if (!(r.weight > 0.0)) {
            throw ConfigError(where + "region '" + r.name + "' needs a positive weight");
        }
        if (r.rollout && (*r.rollout < years.min || *r.rollout >= years.max + 1)) {
            throw ConfigError(where + "rollout of region '" + r.name +
                              "' lies outside the study window");
        }
    }
    if (lag.band_count() == 0) {
        throw ConfigError(where + "no lag bands");
    }
    for (std::size_t b = 0; b < lag.band_count(); ++b) {
        const auto &p = lag.probabilities(b);
        const double sum = std::accumulate(p.begin(), p.end(), 0.0);
        if (std::abs(sum - 1.0) > 1e-9) {
            throw ConfigError(where + "lag probabilities of band " + lag.bands()[b].label() +
                              " do not sum to 1");
        }
    }
    for (int a = invite_min_age; a <= ages.max; ++a) {
        if (!find_band(lag.bands(), a)) {
            throw ConfigError(where + "no lag band covers age " + std::to_string(a));
        }
    }
}

Scenario parse_scenario(const std::string &text, const std::map<std::string, std::string> &overrides,
                        const std::string &source) {
    std::map<std::string, std::string> values;
    std::istringstream in(text);
    std::string line;
    for (int number = 1; std::getline(in, line); ++number) {
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        if (trim(line).empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(number) + ": expected key = value");
        }
        const auto key = trim(std::string_view(line).substr(0, eq));
        if (!values.emplace(key, trim(std::string_view(line).substr(eq + 1))).second) {
            throw ConfigError(source + ":" + std::to_string(number) + ": duplicate key '" + key + "'");
        }
    }
    for (const auto &[k, v] : overrides) {
        values[k] = v;
    }
    const Reader r(std::move(values), source);

    Scenario s;
    s.name = r.values().contains("name") ? r.required("name") : source;
    s.years = r.range("years");
    s.ages = r.range("ages");
    const auto invite = r.range("invite_ages");
    s.invite_min_age = invite.min;
    s.invite_max_age = invite.max;
    s.true_screening_ratio = r.scalar("true_screening_ratio");
    s.baseline_log_rate = r.scalar("baseline_log_rate");
    s.person_years = r.scalar("person_years");
    if (r.values().contains("target_screened_deaths")) {
        s.target_screened_deaths = r.scalar("target_screened_deaths");
    }
    s.spline_df = r.values().contains("spline_df") ? r.integer("spline_df", trim(r.required("spline_df")))
                                                   : 5;
    s.year_coef = r.numbers("year_coef");
    s.cohort_coef = r.numbers("cohort_coef");
    s.age_coef = r.numbers("age_coef");
    const int max_lag = r.integer("lag_max_months", trim(r.required("lag_max_months")));

    std::vector<AgeBand> bands;
    std::vector<std::vector<double>> probs;
    for (const auto &[key, value] : r.values()) {
        if (key.starts_with("region.")) {
            const auto w = words(value);
            if (w.size() != 3) {
                throw ConfigError(source + ": " + key + " expects <rollout|never> <weight> <offset>");
            }
            ScenarioRegion region;
            region.name = key.substr(7);
            if (w[0] != "never") {
                region.rollout = r.number(key, w[0]);
            }
            region.weight = r.number(key, w[1]);
            region.log_rate_offset = r.number(key, w[2]);
            s.regions.push_back(std::move(region));
        } else if (key.starts_with("lag.")) {
            bands.push_back(parse_band(key, key.substr(4), source));
            const auto w = words(value);
            if (w.empty()) {
                throw ConfigError(source + ": " + key + " is empty");
            }
            if (w[0] == "weibull" && w.size() == 3) {
                probs.push_back(weibull_lag_probabilities(r.number(key, w[1]), r.number(key, w[2]),
                                                          max_lag));
            } else if (w[0] == "probs" && w.size() >= 2 &&
                       w.size() - 1 <= static_cast<std::size_t>(max_lag)) {
                std::vector<double> p(static_cast<std::size_t>(max_lag) + 1, 0.0);
                for (std::size_t i = 1; i < w.size(); ++i) {
                    p[i] = r.number(key, w[i]);
                    if (p[i] < 0.0) {
                        throw ConfigError(source + ": " + key + " has a negative probability");
                    }
                }
                probs.push_back(std::move(p));
            } else {
                throw ConfigError(source + ": " + key +
                                  " expects 'weibull <shape> <scale>' or 'probs <p1> ...'"
                                  " with at most lag_max_months entries");
            }
        } else if (!std::set<std::string>{"name", "years", "ages", "invite_ages",
                                          "true_screening_ratio", "baseline_log_rate",
                                          "person_years", "target_screened_deaths", "spline_df",
                                          "year_coef", "cohort_coef", "age_coef",
                                          "lag_max_months"}
                        .contains(key)) {
            throw ConfigError(source + ": unknown key '" + key + "'");
        }
    }
    // Bands come out of the map in key order, which need not be age order.
    std::vector<std::size_t> order(bands.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return bands[a].lo < bands[b].lo; });
    std::vector<AgeBand> sorted_bands;
    std::vector<std::vector<double>> sorted_probs;
    for (auto i : order) {
        sorted_bands.push_back(bands[i]);
        sorted_probs.push_back(probs[i]);
    }
    try {
        s.lag = LagParameters(std::move(sorted_bands), std::move(sorted_probs));
    } catch (const InputError &e) {
        throw ConfigError(source + ": " + e.what());
    }
    s.validate();
    return s;
}

Scenario load_scenario(const std::string &name_or_path,
                       const std::map<std::string, std::string> &overrides) {
    const auto &builtin = builtin_scenarios();
    if (const auto it = builtin.find(name_or_path); it != builtin.end()) {
        return parse_scenario(it->second, overrides, name_or_path);
    }
    std::ifstream in(name_or_path);
    if (!in) {
        throw ConfigError("unknown scenario '" + name_or_path +
                          "' (not a built-in name or readable file)");
    }
    std::ostringstream text;
    text << in.rdbuf();
    return parse_scenario(text.str(), overrides, name_or_path);
}

} // namespace refmort
