#pragma once

// Parametric bootstrap: cell counts resampled as Poisson around the observed
// counts, lag histograms as multinomials around the empirical proportions,
// and the whole pipeline (lag survival, offsets, fit) re-run per replicate.

#include "refmort/estimators.hpp"

#include <cstdint>
#include <ostream>
#include <random>

namespace refmort {

struct BootstrapConfig {
    int replicates = 1000;
    std::uint64_t seed = 0;
    double ci_level = 0.95;
    int jobs = 1;
};

/// Point estimate on the data as given plus a percentile CI from the
/// replicates. Failed replicates are excluded; more than 10% failures marks
/// the interval unreliable. Throws ConfigError for B < 2 or a level outside
/// (0, 1), and propagates point-estimate errors.
EstimateResult bootstrap_estimate(Method method, const MortalityTable &table,
                                  const LagHistogram &hist, const BootstrapConfig &config,
                                  const EstimatorOptions &options = {});

/// One replicate's data, drawn from `rng`.
MortalityTable resample_table(const MortalityTable &table, std::mt19937_64 &rng);
LagHistogram resample_histogram(const LagHistogram &hist, std::mt19937_64 &rng);

/// Type-7 quantile of unsorted `values`; requires a nonempty input.
double quantile(std::vector<double> values, double q);

/// `replicate,estimate,converged` with one row per replicate.
void write_replicates_csv(const BootstrapSummary &summary, std::ostream &out);

} // namespace refmort
