#include "refmort/lag_model.hpp"

#include "refmort/csv.hpp"
#include "refmort/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

namespace refmort {

std::string AgeBand::label() const {
    return "[" + csv::format_double(lo) + ", " + csv::format_double(hi) + ")";
}

std::optional<std::size_t> find_band(const std::vector<AgeBand> &bands, double age) {
    for (std::size_t b = 0; b < bands.size(); ++b) {
        if (bands[b].contains(age)) {
            return b;
        }
    }
    return std::nullopt;
}

std::vector<AgeBand> ten_year_bands(int min_age, int max_age) {
    std::vector<AgeBand> bands;
    const int first = min_age - (((min_age % 10) + 10) % 10);
    for (int lo = first; lo <= max_age; lo += 10) {
        bands.push_back({static_cast<double>(lo), static_cast<double>(lo + 10)});
    }
    return bands;
}

int months_since(double years) { return static_cast<int>(std::lround(years * 12.0)); }

namespace {

void check_bands(const std::vector<AgeBand> &bands) {
    for (std::size_t b = 0; b < bands.size(); ++b) {
        if (!(bands[b].lo < bands[b].hi)) {
            throw ValidationError("age band " + bands[b].label() + " is empty");
        }
        if (b > 0 && bands[b].lo < bands[b - 1].hi) {
            throw ValidationError("age bands " + bands[b - 1].label() + " and " +
                                  bands[b].label() + " overlap or are out of order");
        }
    }
}

} // namespace

LagHistogram::LagHistogram(std::vector<AgeBand> bands,
                           std::vector<std::vector<std::int64_t>> counts)
    : bands_(std::move(bands)), counts_(std::move(counts)) {
    if (bands_.size() != counts_.size()) {
        throw ValidationError("lag histogram: band count does not match count rows");
    }
    check_bands(bands_);
    for (const auto &row : counts_) {
        width_ = std::max(width_, row.size());
        if (std::any_of(row.begin(), row.end(), [](auto n) { return n < 0; })) {
            throw ValidationError("lag histogram: negative death count");
        }
    }
    for (auto &row : counts_) {
        row.resize(width_, 0);
    }
}

std::int64_t LagHistogram::band_total(std::size_t band) const {
    const auto &row = counts_.at(band);
    return std::accumulate(row.begin(), row.end(), std::int64_t{0});
}

std::int64_t LagHistogram::total() const {
    std::int64_t sum = 0;
    for (std::size_t b = 0; b < bands_.size(); ++b) {
        sum += band_total(b);
    }
    return sum;
}

LagHistogram LagHistogram::read_csv(std::istream &in, const std::string &source) {
    const auto doc = csv::read(in);
    const auto c_lo = doc.require_column("age_lo", source);
    const auto c_hi = doc.require_column("age_hi", source);
    const auto c_lag = doc.require_column("lag_months", source);
    const auto c_n = doc.require_column("deaths", source);

    std::map<std::pair<double, double>, std::map<long long, std::int64_t>> cells;
    for (const auto &row : doc.rows) {
        const double lo = csv::parse_double(row.fields[c_lo], row.line, "age_lo");
        const double hi = csv::parse_double(row.fields[c_hi], row.line, "age_hi");
        const long long lag = csv::parse_integer(row.fields[c_lag], row.line, "lag_months");
        const long long n = csv::parse_integer(row.fields[c_n], row.line, "deaths");
        if (lag < 0) {
            throw ValidationError(source + " line " + std::to_string(row.line) +
                                  ": negative lag_months");
        }
        if (n < 0) {
            throw ValidationError(source + " line " + std::to_string(row.line) +
                                  ": negative deaths");
        }
        auto &band = cells[{lo, hi}];
        if (!band.emplace(lag, n).second) {
            throw ValidationError(source + " line " + std::to_string(row.line) +
                                  ": duplicate (age band, lag) entry");
        }
    }

    std::vector<AgeBand> bands;
    std::vector<std::vector<std::int64_t>> counts;
    for (const auto &[key, lags] : cells) {
        bands.push_back({key.first, key.second});
        const long long width = lags.empty() ? 0 : lags.rbegin()->first + 1;
        std::vector<std::int64_t> row(static_cast<std::size_t>(width), 0);
        for (const auto &[lag, n] : lags) {
            row[static_cast<std::size_t>(lag)] = n;
        }
        counts.push_back(std::move(row));
    }
    return LagHistogram(std::move(bands), std::move(counts));
}

LagHistogram LagHistogram::read_csv_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open lag file '" + path + "'");
    }
    return read_csv(in, path);
}

void LagHistogram::write_csv(std::ostream &out) const {
    out << "age_lo,age_hi,lag_months,deaths\n";
    for (std::size_t b = 0; b < bands_.size(); ++b) {
        for (std::size_t i = 0; i < width_; ++i) {
            if (counts_[b][i] == 0 && i + 1 != width_) {
                continue;
            }
            out << csv::format_double(bands_[b].lo) << ',' << csv::format_double(bands_[b].hi)
                << ',' << i << ',' << counts_[b][i] << '\n';
        }
    }
}

LagSurvival::LagSurvival(std::vector<AgeBand> bands, std::vector<std::vector<double>> rho)
    : bands_(std::move(bands)), rho_(std::move(rho)) {
    if (bands_.size() != rho_.size()) {
        throw ValidationError("lag survival: band count does not match curves");
    }
    check_bands(bands_);
}

int LagSurvival::max_lag() const noexcept {
    std::size_t width = 0;
    for (const auto &row : rho_) {
        width = std::max(width, row.size());
    }
    return static_cast<int>(width) - 1;
}

double LagSurvival::at(std::size_t band, int delta_months) const {
    if (delta_months < 0) {
        throw InputError("negative time since invitation (" + std::to_string(delta_months) +
                         " months)");
    }
    const auto &row = rho_.at(band);
    const auto idx = static_cast<std::size_t>(delta_months);
    return idx < row.size() ? row[idx] : 0.0;
}

double LagSurvival::at_age(double age, int delta_months) const {
    const auto band = find_band(bands_, age);
    if (!band) {
        throw InputError("no lag age band covers age " + csv::format_double(age));
    }
    return at(*band, delta_months);
}

void LagSurvival::write_csv(std::ostream &out) const {
    out << "age_lo,age_hi,delta_months,rho\n";
    for (std::size_t b = 0; b < bands_.size(); ++b) {
        for (std::size_t d = 0; d < rho_[b].size(); ++d) {
            out << csv::format_double(bands_[b].lo) << ',' << csv::format_double(bands_[b].hi)
                << ',' << d << ',' << csv::format_double(rho_[b][d]) << '\n';
        }
    }
}

LagParameters::LagParameters(std::vector<AgeBand> bands,
                             std::vector<std::vector<double>> probabilities)
    : bands_(std::move(bands)), probs_(std::move(probabilities)) {
    if (bands_.size() != probs_.size()) {
        throw ValidationError("lag parameters: band count does not match probability rows");
    }
    check_bands(bands_);
    for (std::size_t b = 0; b < probs_.size(); ++b) {
        double sum = 0.0;
        for (double p : probs_[b]) {
            if (!(p >= 0.0 && p <= 1.0)) {
                throw ValidationError("lag parameters: probability outside [0, 1] in band " +
                                      bands_[b].label());
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-10) {
            throw ValidationError("lag parameters: probabilities in band " + bands_[b].label() +
                                  " sum to " + csv::format_double(sum));
        }
    }
}

LagSurvival estimate_lag_survival(const LagHistogram &hist) {
    std::vector<std::vector<double>> rho;
    rho.reserve(hist.band_count());
    for (std::size_t b = 0; b < hist.band_count(); ++b) {
        const auto &counts = hist.counts(b);
        const auto total = hist.band_total(b);
        if (total <= 0) {
            throw EstimationError("lag band " + hist.bands()[b].label() + " has no deaths");
        }
        // Integer suffix sums keep rho[0] == 1 exactly and the curve monotone.
        std::vector<double> curve(counts.size());
        std::int64_t tail = 0;
        for (std::size_t i = counts.size(); i-- > 0;) {
            tail += counts[i];
            curve[i] = static_cast<double>(tail) / static_cast<double>(total);
        }
        rho.push_back(std::move(curve));
    }
    return LagSurvival(hist.bands(), std::move(rho));
}

double survival_from_params(const LagParameters &params, int delta_months, std::size_t band) {
    if (band >= params.band_count()) {
        throw InputError("lag parameters have no band " + std::to_string(band));
    }
    if (delta_months <= 0) {
        return 1.0;
    }
    const auto &p = params.probabilities(band);
    const auto stop = std::min(static_cast<std::size_t>(delta_months), p.size());
    if (stop == p.size()) {
        return 0.0;
    }
    double head = 0.0;
    for (std::size_t i = 0; i < stop; ++i) {
        head += p[i];
    }
    return std::clamp(1.0 - head, 0.0, 1.0);
}

double lag_log_likelihood(const LagHistogram &hist, const LagParameters &params,
                          bool include_coefficient) {
    if (hist.bands() != params.bands()) {
        throw InputError("lag histogram and parameters use different age bands");
    }
    double total = 0.0;
    for (std::size_t b = 0; b < hist.band_count(); ++b) {
        const auto &n = hist.counts(b);
        const auto &p = params.probabilities(b);
        for (std::size_t i = 0; i < n.size(); ++i) {
            if (n[i] == 0) {
                continue;
            }
            const double prob = i < p.size() ? p[i] : 0.0;
            if (prob <= 0.0) {
                return -std::numeric_limits<double>::infinity();
            }
            total += static_cast<double>(n[i]) * std::log(prob);
        }
        if (include_coefficient) {
            total += std::lgamma(static_cast<double>(hist.band_total(b)) + 1.0);
            for (auto k : n) {
                total -= std::lgamma(static_cast<double>(k) + 1.0);
            }
        }
    }
    return total;
}

LagParameters mle_lag_params(const LagHistogram &hist) {
    std::vector<std::vector<double>> probs;
    probs.reserve(hist.band_count());
    for (std::size_t b = 0; b < hist.band_count(); ++b) {
        const auto total = hist.band_total(b);
        if (total <= 0) {
            throw EstimationError("lag band " + hist.bands()[b].label() + " has no deaths");
        }
        const auto &counts = hist.counts(b);
        std::vector<double> row(counts.size());
        for (std::size_t i = 0; i < counts.size(); ++i) {
            row[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
        }
        probs.push_back(std::move(row));
    }
    return LagParameters(hist.bands(), std::move(probs));
}

} // namespace refmort
