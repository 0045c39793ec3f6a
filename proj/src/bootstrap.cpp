#include "refmort/bootstrap.hpp"

#include "refmort/csv.hpp"
#include "refmort/errors.hpp"
#include "refmort/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

namespace refmort {

MortalityTable resample_table(const MortalityTable &table, std::mt19937_64 &rng) {
    MortalityTable out = table;
    for (auto &c : out.cells) {
        c.cases = draw_poisson(c.cases, rng);
    }
    return out;
}

LagHistogram resample_histogram(const LagHistogram &hist, std::mt19937_64 &rng) {
    std::vector<std::vector<std::int64_t>> counts;
    for (std::size_t b = 0; b < hist.band_count(); ++b) {
        const auto &n = hist.counts(b);
        const auto total = hist.band_total(b);
        std::vector<double> p(n.size(), 0.0);
        for (std::size_t i = 0; i < n.size(); ++i) {
            p[i] = total > 0 ? static_cast<double>(n[i]) / static_cast<double>(total) : 0.0;
        }
        counts.push_back(draw_multinomial(total, p, rng));
    }
    return LagHistogram(hist.bands(), std::move(counts));
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) {
        throw InputError("quantile of an empty sample");
    }
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * std::clamp(q, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

void write_replicates_csv(const BootstrapSummary &summary, std::ostream &out) {
    out << "replicate,estimate,converged\n";
    for (std::size_t i = 0; i < summary.replicates.size(); ++i) {
        const double v = summary.replicates[i];
        out << i << ',' << (std::isnan(v) ? std::string("NA") : csv::format_double(v)) << ','
            << (summary.converged[i] ? 1 : 0) << '\n';
    }
}

EstimateResult bootstrap_estimate(Method method, const MortalityTable &table,
                                  const LagHistogram &hist, const BootstrapConfig &config,
                                  const EstimatorOptions &options) {
    if (config.replicates < 2) {
        throw ConfigError("bootstrap needs at least 2 replicates");
    }
    if (!(config.ci_level > 0.0 && config.ci_level < 1.0)) {
        throw ConfigError("confidence level must lie in (0, 1)");
    }
    auto result = run_estimator(method, table, hist, options);

    // Replicates start from the point estimate's coefficients.
    EstimatorOptions replicate_options = options;
    if (result.model) {
        replicate_options.glm.start = result.model->glm.full_coefficients();
    }

    const auto n = static_cast<std::size_t>(config.replicates);
    std::vector<double> estimates(n, std::numeric_limits<double>::quiet_NaN());
    std::vector<char> ok(n, 0);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            std::mt19937_64 rng(derive_seed(config.seed, i));
            try {
                const auto h = resample_histogram(hist, rng);
                auto t = resample_table(table, rng);
                if (method != Method::M0) {
                    t = reapply_lag(t, estimate_lag_survival(h));
                }
                const auto r = run_estimator(method, t, h, replicate_options);
                if (std::isfinite(r.screening_rate_ratio) && r.screening_rate_ratio > 0.0) {
                    estimates[i] = r.screening_rate_ratio;
                    ok[i] = 1;
                }
            } catch (const Error &) {
                // recorded as a failed replicate
            }
        }
    };
    const int jobs = std::max(1, std::min<int>(config.jobs, config.replicates));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int j = 0; j < jobs; ++j) {
            pool.emplace_back(worker);
        }
    }

    BootstrapSummary summary;
    summary.requested = config.replicates;
    summary.seed = config.seed;
    summary.replicates = estimates;
    std::vector<double> good;
    for (std::size_t i = 0; i < n; ++i) {
        summary.converged.push_back(ok[i] != 0);
        if (ok[i]) {
            good.push_back(estimates[i]);
        } else {
            ++summary.failed;
        }
    }
    summary.failure_fraction = static_cast<double>(summary.failed) / static_cast<double>(n);
    summary.unreliable = summary.failure_fraction > 0.10;

    if (!good.empty()) {
        const double alpha = 1.0 - config.ci_level;
        result.ci_low = quantile(good, alpha / 2.0);
        result.ci_high = quantile(good, 1.0 - alpha / 2.0);
    }
    result.ci_level = config.ci_level;
    if (summary.unreliable) {
        result.diagnostics.warnings.push_back(
            "bootstrap: " + std::to_string(summary.failed) + " of " + std::to_string(n) +
            " replicates failed; confidence interval is unreliable");
    }
    result.diagnostics.values["bootstrap_failure_fraction"] = summary.failure_fraction;
    result.bootstrap = std::move(summary);
    return result;
}

} // namespace refmort
