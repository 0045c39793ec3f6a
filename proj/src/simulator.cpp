#include "refmort/simulator.hpp"

#include "refmort/errors.hpp"
#include "refmort/spline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace refmort {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    // splitmix64 finaliser over the combined state
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double draw_poisson(double mean, std::mt19937_64 &rng) {
    if (!(mean > 0.0)) {
        return 0.0;
    }
    std::poisson_distribution<std::int64_t> dist(mean);
    return static_cast<double>(dist(rng));
}

std::vector<std::int64_t> draw_multinomial(std::int64_t n, const std::vector<double> &probabilities,
                                           std::mt19937_64 &rng) {
    std::vector<std::int64_t> out(probabilities.size(), 0);
    double remaining_mass = std::accumulate(probabilities.begin(), probabilities.end(), 0.0);
    std::int64_t remaining = n;
    for (std::size_t i = 0; i < probabilities.size() && remaining > 0; ++i) {
        const double p = probabilities[i];
        if (!(p > 0.0)) {
            continue;
        }
        if (p >= remaining_mass) {
            out[i] = remaining;
            remaining = 0;
            break;
        }
        std::binomial_distribution<std::int64_t> dist(remaining, std::min(1.0, p / remaining_mass));
        out[i] = dist(rng);
        remaining -= out[i];
        remaining_mass -= p;
    }
    return out;
}

namespace {

std::vector<double> grid(int lo, int hi) {
    std::vector<double> v;
    for (int x = lo; x <= hi; ++x) {
        v.push_back(x);
    }
    return v;
}

// Smooth log-rate terms over the scenario's full Lexis grid.
struct Surface {
    KnotSet year_knots;
    KnotSet cohort_knots;
    KnotSet age_knots;
    const Scenario *s = nullptr;

    explicit Surface(const Scenario &scenario) : s(&scenario) {
        year_knots = knots_from_data(grid(s->years.min, s->years.max), s->spline_df);
        cohort_knots = knots_from_data(grid(s->years.min - s->ages.max, s->years.max - s->ages.min),
                                       s->spline_df);
        age_knots = knots_from_data(grid(s->ages.min, s->ages.max), s->spline_df);
    }

    static double term(double x, const KnotSet &knots, const std::vector<double> &coef) {
        std::vector<double> row(coef.size());
        natural_basis_row(x, knots, row);
        return std::inner_product(row.begin(), row.end(), coef.begin(), 0.0);
    }

    double log_rate(int year, int cohort, const ScenarioRegion &region) const {
        return s->baseline_log_rate + region.log_rate_offset + term(year, year_knots, s->year_coef) +
               term(cohort, cohort_knots, s->cohort_coef) + term(year - cohort, age_knots, s->age_coef);
    }
};

// One Lexis cell's share of risk time before and after invitation.
struct CellPlan {
    int year = 0;
    int cohort = 0;
    const ScenarioRegion *region = nullptr;
    double rate = 0.0;            ///< deaths per person-year
    double py_before = 0.0;       ///< person-years without screening history (unscaled)
    double py_after = 0.0;        ///< person-years after invitation (unscaled)
    double lag_survival = 1.0;    ///< true L at the stratum's months since invitation
    double time_since_invitation = 0.0;
};

std::vector<CellPlan> plan_cells(const Scenario &s, const LagSurvival &truth) {
    const Surface surface(s);
    const auto schedule = s.schedule();
    std::vector<CellPlan> plans;
    for (const auto &region : s.regions) {
        for (int year = s.years.min; year <= s.years.max; ++year) {
            for (int age = s.ages.min; age <= s.ages.max; ++age) {
                CellPlan p;
                p.year = year;
                p.cohort = year - age;
                p.region = &region;
                p.rate = std::exp(surface.log_rate(year, p.cohort, region));
                const double py = s.person_years * region.weight;
                const auto invitation = schedule.invitation_time(region.name, p.cohort);
                if (!invitation || *invitation >= year + 1) {
                    p.py_before = py;
                } else {
                    const double start = std::max<double>(year, *invitation);
                    p.py_before = py * (start - year);
                    p.py_after = py * (year + 1 - start);
                    p.time_since_invitation = stratum_time_since_invitation(year, *invitation);
                    p.lag_survival = truth.at_age(age, months_since(p.time_since_invitation));
                }
                plans.push_back(p);
            }
        }
    }
    return plans;
}

double screened_deaths(const std::vector<CellPlan> &plans, double ratio) {
    double total = 0.0;
    for (const auto &p : plans) {
        total += p.rate * p.py_after * (p.lag_survival + ratio * (1.0 - p.lag_survival));
    }
    return total;
}

double person_years_scale(const Scenario &s, const std::vector<CellPlan> &plans) {
    if (!s.target_screened_deaths) {
        return 1.0;
    }
    const double base = screened_deaths(plans, s.true_screening_ratio);
    if (!(base > 0.0)) {
        throw ConfigError("scenario '" + s.name + "' has no screened strata to scale");
    }
    return *s.target_screened_deaths / base;
}

// Expected raw strata; `scale` multiplies every person-year.
RawTable raw_means(const Scenario &s, const std::vector<CellPlan> &plans, double scale) {
    RawTable raw;
    for (const auto &p : plans) {
        if (p.py_before > 0.0) {
            RawCell c;
            c.year = p.year;
            c.cohort = p.cohort;
            c.region = p.region->name;
            c.person_years = p.py_before * scale;
            c.cases_pre_dx = p.rate * c.person_years;
            raw.cells.push_back(std::move(c));
        }
        if (p.py_after > 0.0) {
            RawCell c;
            c.year = p.year;
            c.cohort = p.cohort;
            c.region = p.region->name;
            c.screened = true;
            c.person_years = p.py_after * scale;
            const double mu = p.rate * c.person_years;
            c.cases_pre_dx = mu * p.lag_survival;
            c.cases_post_dx = mu * (1.0 - p.lag_survival) * s.true_screening_ratio;
            raw.cells.push_back(std::move(c));
        }
    }
    return raw;
}

} // namespace

LagSurvival true_lag_survival(const Scenario &scenario) {
    std::vector<std::vector<double>> rho;
    for (std::size_t b = 0; b < scenario.lag.band_count(); ++b) {
        const auto &p = scenario.lag.probabilities(b);
        std::vector<double> curve(p.size(), 0.0);
        double tail = 0.0;
        for (std::size_t i = p.size(); i-- > 0;) {
            tail += p[i];
            curve[i] = std::min(1.0, tail);
        }
        if (!curve.empty()) {
            curve[0] = 1.0;
        }
        rho.push_back(std::move(curve));
    }
    return LagSurvival(scenario.lag.bands(), std::move(rho));
}

SimTruth scenario_truth(const Scenario &scenario) {
    scenario.validate();
    SimTruth t;
    t.true_screening_ratio = scenario.true_screening_ratio;
    t.lag = scenario.lag;
    t.lag_survival = true_lag_survival(scenario);
    const auto plans = plan_cells(scenario, t.lag_survival);
    t.person_years_scale = person_years_scale(scenario, plans);
    t.expected_screened_deaths =
        screened_deaths(plans, scenario.true_screening_ratio) * t.person_years_scale;
    for (const auto &p : plans) {
        t.expected_total_deaths += p.rate * p.py_before * t.person_years_scale;
    }
    t.expected_total_deaths += t.expected_screened_deaths;
    return t;
}

RawTable expected_raw(const Scenario &scenario) {
    const auto truth = scenario_truth(scenario);
    return raw_means(scenario, plan_cells(scenario, truth.lag_survival), truth.person_years_scale);
}

MortalityTable expected_cells(const Scenario &scenario) {
    const auto truth = scenario_truth(scenario);
    return split_risk_time(expected_raw(scenario), scenario.schedule(), truth.lag_survival);
}

LagHistogram expected_histogram(const Scenario &scenario, double deaths_per_band) {
    std::vector<std::vector<std::int64_t>> counts;
    for (std::size_t b = 0; b < scenario.lag.band_count(); ++b) {
        std::vector<std::int64_t> row;
        for (double p : scenario.lag.probabilities(b)) {
            row.push_back(std::llround(p * deaths_per_band));
        }
        counts.push_back(std::move(row));
    }
    return LagHistogram(scenario.lag.bands(), std::move(counts));
}

SimOutput simulate(const Scenario &scenario, std::uint64_t seed) {
    SimOutput out;
    out.truth = scenario_truth(scenario);
    out.schedule = scenario.schedule();
    const auto means = raw_means(scenario, plan_cells(scenario, out.truth.lag_survival),
                                 out.truth.person_years_scale);

    std::mt19937_64 rng(derive_seed(seed, 0));
    out.raw.cells.reserve(means.cells.size());
    std::vector<std::int64_t> band_deaths(scenario.lag.band_count(), 0);
    for (const auto &m : means.cells) {
        RawCell c = m;
        c.cases_pre_dx = draw_poisson(m.cases_pre_dx, rng);
        c.cases_post_dx = draw_poisson(m.cases_post_dx, rng);
        if (!c.screened) {
            if (const auto b = find_band(scenario.lag.bands(), c.age())) {
                band_deaths[*b] += static_cast<std::int64_t>(c.cases_pre_dx);
            }
        }
        out.raw.cells.push_back(std::move(c));
    }

    // Lags of the deaths without screening history, one multinomial per band.
    std::mt19937_64 lag_rng(derive_seed(seed, 1));
    std::vector<std::vector<std::int64_t>> counts;
    for (std::size_t b = 0; b < scenario.lag.band_count(); ++b) {
        counts.push_back(draw_multinomial(band_deaths[b], scenario.lag.probabilities(b), lag_rng));
    }
    out.hist = LagHistogram(scenario.lag.bands(), std::move(counts));
    out.table = split_risk_time(out.raw, out.schedule, estimate_lag_survival(out.hist));
    return out;
}

} // namespace refmort
