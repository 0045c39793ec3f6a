#include "refmort/estimators.hpp"

#include "refmort/bfgs.hpp"
#include "refmort/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace refmort {

JointLikelihood::JointLikelihood(const MortalityTable &table, const LagHistogram &hist,
                                 ApcDesign design, std::vector<std::size_t> retained)
    : design_(std::move(design)), retained_(std::move(retained)) {
    if (hist.band_count() == 0 || hist.total() == 0) {
        throw InputError("full likelihood: lag histogram has no deaths");
    }
    const auto all_labels = design_.labels();
    for (auto j : retained_) {
        if (j >= all_labels.size()) {
            throw InputError("full likelihood: retained column out of range");
        }
        labels_.push_back(all_labels[j]);
    }
    band_ranges_ = hist.bands();
    width_ = static_cast<std::size_t>(hist.max_lag() + 1);

    std::size_t offset = retained_.size();
    for (std::size_t b = 0; b < hist.band_count(); ++b) {
        Band band;
        const auto &n = hist.counts(b);
        band.counts.assign(n.begin(), n.end());
        std::int64_t best = 0;
        for (std::size_t i = 0; i < n.size(); ++i) {
            if (n[i] > 0) {
                if (n[i] > best) {
                    best = n[i];
                    band.reference = band.support.size();
                }
                band.support.push_back(i);
            }
        }
        if (band.support.empty()) {
            throw EstimationError("full likelihood: lag band " + band_ranges_[b].label() +
                                  " has no deaths");
        }
        band.offset = offset;
        offset += band.support.size() - 1;
        bands_.push_back(std::move(band));
    }

    for (const auto &c : table.cells) {
        if (!(c.person_years > 0.0)) {
            ++excluded_;
            continue;
        }
        int band = -1;
        int delta = 0;
        if (c.group != ScreeningGroup::NoScreening) {
            const auto b = find_band(band_ranges_, c.age());
            if (!b) {
                throw InputError("full likelihood: no lag band covers age " +
                                 std::to_string(c.age()));
            }
            band = static_cast<int>(*b);
            delta = std::min<int>(delta_months(c), static_cast<int>(width_));
            const auto &support = bands_[*b].support;
            // Old-diagnosis mass needs a support bin >= delta; new needs one < delta.
            const bool possible = c.group == ScreeningGroup::PostOld
                                      ? support.back() >= static_cast<std::size_t>(delta)
                                      : support.front() < static_cast<std::size_t>(delta);
            if (!possible) {
                ++excluded_;
                continue;
            }
        }
        cells_.push_back(c);
        band_of_row_.push_back(band);
        delta_of_row_.push_back(delta);
        log_py_.push_back(std::log(c.person_years));
        total_deaths_ += c.cases;
        log_factorial_sum_ += std::lgamma(c.cases + 1.0);
    }
    if (cells_.empty()) {
        throw InputError("full likelihood: no usable mortality cells");
    }
    const auto full = design_.build(cells_);
    X_.resize(static_cast<Eigen::Index>(cells_.size()), static_cast<Eigen::Index>(retained_.size()));
    for (std::size_t k = 0; k < retained_.size(); ++k) {
        X_.col(static_cast<Eigen::Index>(k)) =
            full.values.col(static_cast<Eigen::Index>(retained_[k]));
    }
}

std::size_t JointLikelihood::dimension() const noexcept {
    std::size_t d = retained_.size();
    for (const auto &b : bands_) {
        d += b.support.size() - 1;
    }
    return d;
}

std::vector<double> JointLikelihood::probabilities(const Band &band,
                                                   const Eigen::VectorXd &x) const {
    const std::size_t k = band.support.size();
    std::vector<double> theta(k, 0.0);
    std::size_t free = 0;
    for (std::size_t s = 0; s < k; ++s) {
        theta[s] = s == band.reference ? 0.0 : x[static_cast<Eigen::Index>(band.offset + free++)];
    }
    const double top = *std::max_element(theta.begin(), theta.end());
    double sum = 0.0;
    for (auto &t : theta) {
        t = std::exp(t - top);
        sum += t;
    }
    std::vector<double> p(width_, 0.0);
    for (std::size_t s = 0; s < k; ++s) {
        p[band.support[s]] = theta[s] / sum;
    }
    return p;
}

Eigen::VectorXd JointLikelihood::pack(const Eigen::VectorXd &coefficients,
                                      const LagParameters &lag) const {
    if (static_cast<std::size_t>(coefficients.size()) != retained_.size()) {
        throw InputError("full likelihood: coefficient vector has the wrong length");
    }
    if (lag.band_count() != bands_.size()) {
        throw InputError("full likelihood: lag parameters have the wrong number of bands");
    }
    Eigen::VectorXd x(static_cast<Eigen::Index>(dimension()));
    x.head(coefficients.size()) = coefficients;
    for (std::size_t b = 0; b < bands_.size(); ++b) {
        const auto &band = bands_[b];
        const auto &p = lag.probabilities(b);
        auto prob = [&](std::size_t i) {
            return std::max(i < p.size() ? p[i] : 0.0, std::numeric_limits<double>::min());
        };
        const double ref = std::log(prob(band.support[band.reference]));
        std::size_t free = 0;
        for (std::size_t s = 0; s < band.support.size(); ++s) {
            if (s != band.reference) {
                x[static_cast<Eigen::Index>(band.offset + free++)] =
                    std::log(prob(band.support[s])) - ref;
            }
        }
    }
    return x;
}

Eigen::VectorXd JointLikelihood::coefficients(const Eigen::VectorXd &x) const {
    return x.head(static_cast<Eigen::Index>(retained_.size()));
}

LagParameters JointLikelihood::lag(const Eigen::VectorXd &x) const {
    std::vector<std::vector<double>> probs;
    for (const auto &band : bands_) {
        probs.push_back(probabilities(band, x));
    }
    return LagParameters(band_ranges_, std::move(probs));
}

double JointLikelihood::log_likelihood(const Eigen::VectorXd &x, Eigen::VectorXd *gradient) const {
    constexpr double kMinusInf = -std::numeric_limits<double>::infinity();
    const std::size_t nb = bands_.size();
    std::vector<std::vector<double>> p(nb), head(nb), tail(nb);
    for (std::size_t b = 0; b < nb; ++b) {
        p[b] = probabilities(bands_[b], x);
        head[b].assign(width_ + 1, 0.0);
        tail[b].assign(width_ + 1, 0.0);
        for (std::size_t i = 0; i < width_; ++i) {
            head[b][i + 1] = head[b][i] + p[b][i];
        }
        for (std::size_t i = width_; i-- > 0;) {
            tail[b][i] = tail[b][i + 1] + p[b][i];
        }
    }

    const Eigen::VectorXd eta = X_ * coefficients(x);
    Eigen::VectorXd resid(eta.size());
    std::vector<std::vector<double>> c_old(nb, std::vector<double>(width_ + 1, 0.0));
    std::vector<std::vector<double>> c_new(nb, std::vector<double>(width_ + 1, 0.0));
    double ll = 0.0;
    for (std::size_t r = 0; r < cells_.size(); ++r) {
        const auto &c = cells_[r];
        const double e = std::exp(eta[static_cast<Eigen::Index>(r)] + log_py_[r]);
        if (!std::isfinite(e)) {
            return kMinusInf;
        }
        double share = 1.0;
        if (c.group != ScreeningGroup::NoScreening) {
            const auto b = static_cast<std::size_t>(band_of_row_[r]);
            const auto d = static_cast<std::size_t>(delta_of_row_[r]);
            share = c.group == ScreeningGroup::PostOld ? tail[b][d] : head[b][d];
            if (!(share > 0.0)) {
                if (c.cases > 0.0) {
                    return kMinusInf;
                }
                share = 0.0;
            }
            if (gradient) {
                const double a = (share > 0.0 ? c.cases / share : 0.0) - e;
                (c.group == ScreeningGroup::PostOld ? c_old : c_new)[b][d] += a;
            }
        }
        const double mu = e * share;
        ll += (c.cases > 0.0 ? c.cases * std::log(mu) : 0.0) - mu;
        resid[static_cast<Eigen::Index>(r)] = c.cases - mu;
    }
    ll -= log_factorial_sum_;

    for (std::size_t b = 0; b < nb; ++b) {
        for (auto i : bands_[b].support) {
            ll += bands_[b].counts[i] * std::log(p[b][i]);
        }
    }
    if (!gradient) {
        return ll;
    }

    gradient->setZero(static_cast<Eigen::Index>(dimension()));
    gradient->head(static_cast<Eigen::Index>(retained_.size())) = X_.transpose() * resid;
    for (std::size_t b = 0; b < nb; ++b) {
        const auto &band = bands_[b];
        // dL/dp_i from the Poisson part: old rows with delta <= i, new rows with delta > i.
        std::vector<double> g(width_, 0.0);
        double old_prefix = 0.0;
        double new_suffix = 0.0;
        for (std::size_t d = 1; d <= width_; ++d) {
            new_suffix += c_new[b][d];
        }
        for (std::size_t i = 0; i < width_; ++i) {
            old_prefix += c_old[b][i];
            g[i] = old_prefix + new_suffix;
            new_suffix -= c_new[b][i + 1];
        }
        // Softmax chain rule; the multinomial part contributes n_j - N p_j.
        double band_n = 0.0;
        double mean_g = 0.0;
        for (auto i : band.support) {
            band_n += band.counts[i];
            mean_g += p[b][i] * g[i];
        }
        std::size_t free = 0;
        for (std::size_t s = 0; s < band.support.size(); ++s) {
            if (s == band.reference) {
                continue;
            }
            const auto i = band.support[s];
            (*gradient)[static_cast<Eigen::Index>(band.offset + free++)] =
                p[b][i] * (g[i] - mean_g) + band.counts[i] - band_n * p[b][i];
        }
    }
    return ll;
}

Eigen::MatrixXd JointLikelihood::inverse_information(const Eigen::MatrixXd &apc_covariance,
                                                     const Eigen::VectorXd &x) const {
    const auto n = static_cast<Eigen::Index>(dimension());
    const auto k = static_cast<Eigen::Index>(retained_.size());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    if (apc_covariance.rows() == k && apc_covariance.cols() == k) {
        h.topLeftCorner(k, k) = apc_covariance;
    } else {
        h.topLeftCorner(k, k).setIdentity();
    }
    for (const auto &band : bands_) {
        const auto p = probabilities(band, x);
        double total = 0.0;
        for (auto i : band.support) {
            total += band.counts[i];
        }
        const double p_ref = p[band.support[band.reference]];
        const auto free = static_cast<Eigen::Index>(band.support.size() - 1);
        const auto o = static_cast<Eigen::Index>(band.offset);
        Eigen::Index j = 0;
        for (std::size_t s = 0; s < band.support.size(); ++s) {
            if (s == band.reference) {
                continue;
            }
            h(o + j, o + j) = 1.0 / (total * p[band.support[s]]);
            ++j;
        }
        h.block(o, o, free, free).array() += 1.0 / (total * p_ref);
    }
    return h;
}

JointFit maximize_joint(const JointLikelihood &likelihood, const Eigen::VectorXd &start,
                        const Eigen::MatrixXd &apc_covariance, int max_iterations,
                        double gradient_tolerance) {
    JointFit fit;
    fit.start_log_likelihood = likelihood.log_likelihood(start);
    if (!std::isfinite(fit.start_log_likelihood)) {
        throw EstimationError("full likelihood: start values have zero likelihood");
    }
    const Objective objective = [&](const Eigen::VectorXd &x, Eigen::VectorXd &grad) {
        const double ll = likelihood.log_likelihood(x, &grad);
        grad = -grad;
        return std::isfinite(ll) ? -ll : std::numeric_limits<double>::infinity();
    };
    BfgsOptions options;
    options.max_iterations = max_iterations;
    options.gradient_tolerance = gradient_tolerance;
    const auto result = minimize_bfgs(objective, start,
                                      likelihood.inverse_information(apc_covariance, start), options);
    fit.x = result.x;
    fit.log_likelihood = -result.value;
    fit.iterations = result.iterations;
    fit.gradient_norm = result.gradient.size() ? result.gradient.lpNorm<Eigen::Infinity>() : 0.0;
    fit.converged = result.converged;
    for (double v : result.trace) {
        fit.trace.push_back(-v);
    }
    if (!fit.converged) {
        std::string trace;
        const std::size_t from = fit.trace.size() > 5 ? fit.trace.size() - 5 : 0;
        for (std::size_t i = from; i < fit.trace.size(); ++i) {
            trace += " " + std::to_string(fit.trace[i]);
        }
        throw NonConvergenceError("full likelihood: no convergence after " +
                                  std::to_string(fit.iterations) +
                                  " iterations (gradient norm " +
                                  std::to_string(fit.gradient_norm) + ", last log-likelihoods" +
                                  trace + ")");
    }
    return fit;
}

EstimateResult estimate_method3(const MortalityTable &table, const LagHistogram &hist,
                                const EstimateResult &warm_start,
                                const EstimatorOptions &options) {
    if (warm_start.method != Method::M2 || !warm_start.model) {
        throw InputError("method 3 needs a method 2 estimate as its warm start");
    }
    const bool any_screened = std::any_of(table.cells.begin(), table.cells.end(), [](const auto &c) {
        return c.group != ScreeningGroup::NoScreening;
    });
    if (!any_screened) {
        throw InputError("method 3: table has no screened strata");
    }
    const auto &apc = *warm_start.model;
    JointLikelihood likelihood(table, hist, apc.design, apc.glm.retained);
    const auto start = likelihood.pack(apc.glm.coefficients, mle_lag_params(hist));
    const auto fit =
        maximize_joint(likelihood, start, apc.glm.covariance, options.max_iterations,
                       options.relative_gradient_tolerance * std::max(1.0, likelihood.total_deaths()));

    const auto &labels = likelihood.labels();
    const auto it = std::find(labels.begin(), labels.end(), kScreeningLabel);
    if (it == labels.end()) {
        throw EstimationError("method 3: screening indicator is aliased with the APC terms");
    }
    auto params = std::make_shared<FullModelParams>();
    params->labels = labels;
    params->coefficients = likelihood.coefficients(fit.x);
    params->lag = likelihood.lag(fit.x);
    params->log_effect = params->coefficients[it - labels.begin()];

    EstimateResult result;
    result.method = Method::M3;
    result.log_effect = params->log_effect;
    result.screening_rate_ratio = std::exp(params->log_effect);
    auto &d = result.diagnostics;
    d.iterations = fit.iterations;
    d.converged = fit.converged;
    d.log_likelihood = fit.log_likelihood;
    d.rows_used = likelihood.rows();
    d.rows_excluded = likelihood.rows_excluded();
    d.aliased = apc.glm.aliased;
    d.values["start_log_likelihood"] = fit.start_log_likelihood;
    d.values["gradient_norm"] = fit.gradient_norm;
    d.values["m2_log_effect"] = warm_start.log_effect;
    if (likelihood.rows_excluded() > 0) {
        d.warnings.push_back(std::to_string(likelihood.rows_excluded()) +
                             " cells excluded (zero person-years or outside the lag support)");
    }
    result.model = warm_start.model;
    result.full_model = std::move(params);
    return result;
}

} // namespace refmort
