#pragma once

// Empirical distribution of the lag from diagnosis to cause-specific death,
// estimated from pre-screening deaths and used to align post-invitation strata.
//
// Lags are binned in whole months: bin i holds deaths whose lag is i months
// (i = 0 ... M). Both the survival table and the parameter vector share that
// binning, and survival at delta is the mass in bins i >= delta.

#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace refmort {

/// Half-open age interval [lo, hi) in years.
struct AgeBand {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double age) const noexcept { return age >= lo && age < hi; }
    std::string label() const;
    friend bool operator==(const AgeBand &, const AgeBand &) = default;
};

/// Index of the band containing `age`, or nullopt.
std::optional<std::size_t> find_band(const std::vector<AgeBand> &bands, double age);

/// Ten-year bands covering [min_age, max_age], the default grouping.
std::vector<AgeBand> ten_year_bands(int min_age, int max_age);

/// Time since invitation in years converted to whole months (nearest).
int months_since(double years);

class LagHistogram {
public:
    LagHistogram() = default;
    /// `counts[b][i]` is the number of deaths in band b with a lag of i months.
    /// Rows are zero-padded to a common length. Throws ValidationError on
    /// overlapping or unordered bands or negative counts.
    LagHistogram(std::vector<AgeBand> bands, std::vector<std::vector<std::int64_t>> counts);

    const std::vector<AgeBand> &bands() const noexcept { return bands_; }
    const std::vector<std::int64_t> &counts(std::size_t band) const { return counts_.at(band); }
    std::size_t band_count() const noexcept { return bands_.size(); }
    /// Largest representable lag M (bins run 0 ... M).
    int max_lag() const noexcept { return static_cast<int>(width_) - 1; }
    std::int64_t band_total(std::size_t band) const;
    std::int64_t total() const;

    static LagHistogram read_csv(std::istream &in, const std::string &source = "lag csv");
    static LagHistogram read_csv_file(const std::string &path);
    void write_csv(std::ostream &out) const;

    friend bool operator==(const LagHistogram &, const LagHistogram &) = default;

private:
    std::vector<AgeBand> bands_;
    std::vector<std::vector<std::int64_t>> counts_;
    std::size_t width_ = 0;
};

/// rho[b][delta]: probability that a death in band b was diagnosed at least
/// delta months earlier, for delta = 0 ... M. Zero beyond M.
class LagSurvival {
public:
    LagSurvival() = default;
    LagSurvival(std::vector<AgeBand> bands, std::vector<std::vector<double>> rho);

    const std::vector<AgeBand> &bands() const noexcept { return bands_; }
    const std::vector<double> &curve(std::size_t band) const { return rho_.at(band); }
    int max_lag() const noexcept;

    /// Survival at `delta_months` for `band`. Negative delta throws; delta past
    /// the observed support returns 0.
    double at(std::size_t band, int delta_months) const;
    /// Survival for the band containing `age`; throws InputError when no band covers it.
    double at_age(double age, int delta_months) const;

    void write_csv(std::ostream &out) const;

private:
    std::vector<AgeBand> bands_;
    std::vector<std::vector<double>> rho_;
};

/// Lag probabilities per band over bins 0 ... k-1; each row sums to one.
class LagParameters {
public:
    LagParameters() = default;
    LagParameters(std::vector<AgeBand> bands, std::vector<std::vector<double>> probabilities);

    const std::vector<AgeBand> &bands() const noexcept { return bands_; }
    const std::vector<double> &probabilities(std::size_t band) const { return probs_.at(band); }
    std::size_t band_count() const noexcept { return bands_.size(); }

private:
    std::vector<AgeBand> bands_;
    std::vector<std::vector<double>> probs_;
};

/// Empirical survival: rho[delta] = sum_{i >= delta} n_i / sum_i n_i.
/// Throws EstimationError naming the first band with no deaths.
LagSurvival estimate_lag_survival(const LagHistogram &hist);

/// Survival implied by lag probabilities: 1 - sum_{i < delta} p_i, clamped to
/// [0, 1]; 1 at delta <= 0 and 0 once delta passes the parameter support.
double survival_from_params(const LagParameters &params, int delta_months, std::size_t band);

/// Multinomial log-likelihood of `hist` under `params`, summed over bands.
/// The multinomial coefficient is constant in the parameters and is only
/// added when `include_coefficient` is set. Returns -infinity when a
/// positive count sits on a zero-probability bin.
double lag_log_likelihood(const LagHistogram &hist, const LagParameters &params,
                          bool include_coefficient = false);

/// Multinomial MLE: empirical proportions per band.
LagParameters mle_lag_params(const LagHistogram &hist);

} // namespace refmort
