#include "refmort/poisson_glm.hpp"

#include "refmort/errors.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace refmort {

namespace {

double poisson_deviance(const Eigen::VectorXd &y, const Eigen::VectorXd &mu) {
    double dev = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double m = mu[i];
        if (!std::isfinite(m)) {
            return std::numeric_limits<double>::infinity();
        }
        dev += y[i] > 0.0 ? y[i] * std::log(y[i] / m) - (y[i] - m) : m;
    }
    return 2.0 * dev;
}

Eigen::VectorXd exp_clamped(const Eigen::VectorXd &eta) {
    return eta.array().min(700.0).exp();
}

// Weighted least squares: minimise sum w (z - X b)^2 via the normal equations,
// falling back to a pivoted QR when the Cholesky factorisation fails.
Eigen::VectorXd weighted_solve(const Eigen::MatrixXd &X, const Eigen::VectorXd &w,
                               const Eigen::VectorXd &z, Eigen::MatrixXd *information) {
    const Eigen::MatrixXd Xw = X.array().colwise() * w.array();
    Eigen::MatrixXd info = Xw.transpose() * X;
    const Eigen::VectorXd rhs = Xw.transpose() * z;
    Eigen::LLT<Eigen::MatrixXd> llt(info);
    Eigen::VectorXd beta;
    if (llt.info() == Eigen::Success) {
        beta = llt.solve(rhs);
    } else {
        const Eigen::VectorXd sw = w.array().sqrt();
        const Eigen::MatrixXd A = X.array().colwise() * sw.array();
        beta = A.colPivHouseholderQr().solve((z.array() * sw.array()).matrix());
    }
    if (information) {
        *information = std::move(info);
    }
    return beta;
}

std::string trace_string(const std::vector<double> &trace) {
    std::ostringstream out;
    out << "deviance trace:";
    for (double d : trace) {
        out << ' ' << d;
    }
    return out.str();
}

} // namespace

std::vector<std::size_t> independent_columns(const Eigen::MatrixXd &X, double tolerance) {
    std::vector<std::size_t> keep;
    std::vector<Eigen::VectorXd> basis;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        Eigen::VectorXd v = X.col(j);
        const double norm = v.norm();
        if (norm == 0.0) {
            continue;
        }
        // Two passes of modified Gram-Schmidt for numerical orthogonality.
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto &q : basis) {
                v -= q.dot(v) * q;
            }
        }
        const double residual = v.norm();
        if (residual <= tolerance * norm) {
            continue;
        }
        basis.push_back(v / residual);
        keep.push_back(static_cast<std::size_t>(j));
    }
    return keep;
}

Eigen::VectorXd GlmFit::full_coefficients() const {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(labels.size()));
    for (std::size_t k = 0; k < retained.size(); ++k) {
        full[static_cast<Eigen::Index>(retained[k])] = coefficients[static_cast<Eigen::Index>(k)];
    }
    return full;
}

std::optional<double> GlmFit::coefficient(const std::string &label) const {
    for (std::size_t k = 0; k < retained.size(); ++k) {
        if (labels[retained[k]] == label) {
            return coefficients[static_cast<Eigen::Index>(k)];
        }
    }
    return std::nullopt;
}

std::optional<double> GlmFit::standard_error(const std::string &label) const {
    for (std::size_t k = 0; k < retained.size(); ++k) {
        if (labels[retained[k]] == label) {
            const auto i = static_cast<Eigen::Index>(k);
            return std::sqrt(covariance(i, i));
        }
    }
    return std::nullopt;
}

GlmFit fit_poisson(const DesignMatrix &X, std::span<const double> y_in,
                   std::span<const double> offset_in, const GlmOptions &options) {
    const auto n = X.rows();
    if (static_cast<Eigen::Index>(y_in.size()) != n ||
        static_cast<Eigen::Index>(offset_in.size()) != n) {
        throw InputError("fit_poisson: response, offset and design rows are not aligned");
    }
    if (static_cast<Eigen::Index>(X.labels.size()) != X.cols()) {
        throw InputError("fit_poisson: design labels do not match columns");
    }
    if (n == 0) {
        throw InputError("fit_poisson: no observations");
    }
    const Eigen::Map<const Eigen::VectorXd> y(y_in.data(), n);
    const Eigen::Map<const Eigen::VectorXd> offset(offset_in.data(), n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!std::isfinite(y[i]) || y[i] < 0.0) {
            throw InputError("fit_poisson: response must be nonnegative and finite (row " +
                             std::to_string(i) + ")");
        }
        if (!std::isfinite(offset[i])) {
            throw InputError("fit_poisson: offset is not finite (row " + std::to_string(i) + ")");
        }
    }
    if (!X.values.allFinite()) {
        throw InputError("fit_poisson: design matrix has non-finite entries");
    }

    GlmFit fit;
    fit.labels = X.labels;
    fit.retained = independent_columns(X.values, options.alias_tolerance);
    {
        std::vector<bool> kept(static_cast<std::size_t>(X.cols()), false);
        for (auto j : fit.retained) {
            kept[j] = true;
        }
        for (std::size_t j = 0; j < kept.size(); ++j) {
            if (!kept[j]) {
                fit.aliased.push_back(X.labels[j]);
            }
        }
    }
    const auto p = static_cast<Eigen::Index>(fit.retained.size());
    Eigen::MatrixXd Xr(n, p);
    for (Eigen::Index k = 0; k < p; ++k) {
        Xr.col(k) = X.values.col(static_cast<Eigen::Index>(fit.retained[static_cast<std::size_t>(k)]));
    }

    Eigen::VectorXd beta(p);
    Eigen::VectorXd mu(n);
    Eigen::VectorXd eta(n);
    Eigen::MatrixXd information;
    if (p == 0) {
        eta = offset;
        mu = exp_clamped(eta);
        fit.deviance = poisson_deviance(y, mu);
        fit.converged = true;
    } else {
        if (options.start) {
            if (options.start->size() != X.cols()) {
                throw InputError("fit_poisson: start vector has wrong length");
            }
            for (Eigen::Index k = 0; k < p; ++k) {
                beta[k] = (*options.start)[static_cast<Eigen::Index>(fit.retained[static_cast<std::size_t>(k)])];
            }
        } else {
            // Working response seeded from log(y + 0.5), weights = y + 0.5.
            const Eigen::VectorXd mu0 = y.array() + 0.5;
            const Eigen::VectorXd z =
                mu0.array().log() - offset.array() + (y.array() - mu0.array()) / mu0.array();
            beta = weighted_solve(Xr, mu0, z, nullptr);
        }
        eta = Xr * beta + offset;
        mu = exp_clamped(eta);
        double dev = poisson_deviance(y, mu);
        fit.deviance_trace.push_back(dev);

        // Deviance evaluation error grows with the total count.
        const double noise_floor = 1e-12 * (y.sum() + 1.0);
        int rising = 0;
        bool polished = false;
        for (int iter = 1; iter <= options.max_iterations; ++iter) {
            fit.iterations = iter;
            const Eigen::VectorXd z = eta - offset + ((y - mu).array() / mu.array()).matrix();
            Eigen::VectorXd candidate = weighted_solve(Xr, mu, z, nullptr);
            Eigen::VectorXd cand_eta = Xr * candidate + offset;
            Eigen::VectorXd cand_mu = exp_clamped(cand_eta);
            double cand_dev = poisson_deviance(y, cand_mu);
            // At the optimum a full step can raise the deviance by rounding noise.
            if (std::abs(cand_dev - dev) <
                std::max(options.tolerance * (std::abs(dev) + 0.1), noise_floor)) {
                if (cand_dev <= dev + noise_floor) {
                    fit.step_norm = (candidate - beta).norm();
                    beta = std::move(candidate);
                    eta = std::move(cand_eta);
                    mu = std::move(cand_mu);
                    dev = cand_dev;
                }
                fit.deviance_trace.push_back(dev);
                fit.converged = true;
                break;
            }
            int halvings = 0;
            while (!(cand_dev <= dev) && halvings < options.max_halvings) {
                candidate = 0.5 * (candidate + beta);
                cand_eta = Xr * candidate + offset;
                cand_mu = exp_clamped(cand_eta);
                cand_dev = poisson_deviance(y, cand_mu);
                ++halvings;
            }
            if (!(cand_dev <= dev)) {
                fit.deviance_trace.push_back(cand_dev);
                if (++rising >= 3) {
                    throw NonConvergenceError("Poisson IRLS diverged: deviance increased after "
                                              "step halving on 3 consecutive iterations; " +
                                              trace_string(fit.deviance_trace));
                }
                continue;
            }
            rising = 0;
            fit.step_norm = (candidate - beta).norm();
            const double change = std::abs(cand_dev - dev) / (std::abs(cand_dev) + 0.1);
            beta = std::move(candidate);
            eta = std::move(cand_eta);
            mu = std::move(cand_mu);
            dev = cand_dev;
            fit.deviance_trace.push_back(dev);
            if (change < options.tolerance) {
                // One extra Newton step squares the remaining coefficient error.
                fit.converged = true;
                if (polished) {
                    break;
                }
                polished = true;
            }
        }
        fit.deviance = dev;
        const Eigen::MatrixXd Xw = Xr.array().colwise() * mu.array();
        information = Xw.transpose() * Xr;
    }

    fit.coefficients = beta;
    if (p > 0) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(information);
        fit.covariance = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
        fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose()).eval();
    }
    fit.log_likelihood = poisson_log_likelihood(y_in, std::span<const double>(mu.data(), mu.size()));
    return fit;
}

Eigen::VectorXd predict_mean(const GlmFit &fit, const DesignMatrix &X,
                             std::span<const double> offset) {
    if (static_cast<std::size_t>(X.cols()) != fit.labels.size()) {
        throw InputError("predict_mean: design has " + std::to_string(X.cols()) +
                         " columns, fit has " + std::to_string(fit.labels.size()));
    }
    if (!X.labels.empty() && X.labels != fit.labels) {
        throw InputError("predict_mean: design column labels differ from the fitted model");
    }
    if (static_cast<Eigen::Index>(offset.size()) != X.rows()) {
        throw InputError("predict_mean: offset length does not match design rows");
    }
    const Eigen::Map<const Eigen::VectorXd> off(offset.data(), X.rows());
    const Eigen::VectorXd eta = X.values * fit.full_coefficients() + off;
    return eta.array().exp();
}

double poisson_log_likelihood(std::span<const double> y, std::span<const double> mu) {
    if (y.size() != mu.size()) {
        throw InputError("poisson_log_likelihood: length mismatch");
    }
    double ll = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (mu[i] <= 0.0) {
            if (y[i] > 0.0) {
                return -std::numeric_limits<double>::infinity();
            }
            continue;
        }
        ll += (y[i] > 0.0 ? y[i] * std::log(mu[i]) : 0.0) - mu[i] - std::lgamma(y[i] + 1.0);
    }
    return ll;
}

double log_likelihood(const GlmFit &fit, const DesignMatrix &X, std::span<const double> y,
                      std::span<const double> offset) {
    const Eigen::VectorXd mu = predict_mean(fit, X, offset);
    return poisson_log_likelihood(y, std::span<const double>(mu.data(), mu.size()));
}

} // namespace refmort
