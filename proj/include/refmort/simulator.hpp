#pragma once

// Stratum-level Poisson simulation of a screened registry from a scenario.
// Expected deaths per Lexis cell are exp(APC + region) * person-years, split
// after invitation into deaths diagnosed before invitation (share L, the true
// lag survival at the stratum's months since invitation) and after invitation
// (share 1 - L, multiplied by the true screening rate ratio).

#include "refmort/lag_model.hpp"
#include "refmort/registry.hpp"
#include "refmort/scenario.hpp"

#include <cstdint>
#include <random>

namespace refmort {

struct SimTruth {
    double true_screening_ratio = 1.0;
    /// Factor applied to the scenario's person_years (target_screened_deaths).
    double person_years_scale = 1.0;
    LagParameters lag;
    LagSurvival lag_survival;
    double expected_screened_deaths = 0.0;
    double expected_total_deaths = 0.0;
};

struct SimOutput {
    RawTable raw;
    RolloutSchedule schedule;
    LagHistogram hist;
    /// `raw` split with the empirical lag survival of `hist`.
    MortalityTable table;
    SimTruth truth;
};

/// Draws one registry. Deterministic given (scenario, seed).
SimOutput simulate(const Scenario &scenario, std::uint64_t seed);

/// Noiseless raw table: every count is its expected value.
RawTable expected_raw(const Scenario &scenario);

/// Noiseless analysis table: expected deaths as real-valued counts and the
/// true lag survival as prop_target.
MortalityTable expected_cells(const Scenario &scenario);

/// Lag histogram with `deaths_per_band` deaths spread exactly (rounded) over
/// the true lag probabilities.
LagHistogram expected_histogram(const Scenario &scenario, double deaths_per_band);

/// Truth record for `scenario` without drawing anything.
SimTruth scenario_truth(const Scenario &scenario);

/// Survival implied by the scenario's lag probabilities on bins 0 ... max.
LagSurvival true_lag_survival(const Scenario &scenario);

/// Mixes a base seed with a stream index into an independent 64-bit seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// Poisson draw; returns 0 for a zero mean.
double draw_poisson(double mean, std::mt19937_64 &rng);

/// Multinomial draw by sequential binomials.
std::vector<std::int64_t> draw_multinomial(std::int64_t n, const std::vector<double> &probabilities,
                                           std::mt19937_64 &rng);

} // namespace refmort
