#pragma once

// Poisson log-linear regression with offsets, fitted by iteratively
// reweighted least squares. Columns that are linearly dependent on earlier
// columns are aliased (dropped) before fitting, which resolves the
// age-period-cohort collinearity.

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace refmort {

struct DesignMatrix {
    Eigen::MatrixXd values;
    std::vector<std::string> labels;

    Eigen::Index rows() const noexcept { return values.rows(); }
    Eigen::Index cols() const noexcept { return values.cols(); }
};

struct GlmOptions {
    double tolerance = 1e-10;      ///< relative deviance change
    int max_iterations = 50;
    int max_halvings = 10;
    /// A column is aliased when its residual after projection on the retained
    /// earlier columns is below this fraction of its own norm.
    double alias_tolerance = 1e-10;
    /// Optional starting coefficients over all design columns.
    std::optional<Eigen::VectorXd> start;
};

struct GlmFit {
    std::vector<std::string> labels;  ///< all design columns, in order
    std::vector<std::size_t> retained; ///< indices of non-aliased columns
    std::vector<std::string> aliased;  ///< labels of dropped columns
    Eigen::VectorXd coefficients;      ///< one per retained column
    Eigen::MatrixXd covariance;        ///< inverse Fisher information over retained columns
    double deviance = 0.0;
    double log_likelihood = 0.0;
    int iterations = 0;
    double step_norm = 0.0;
    bool converged = false;
    std::vector<double> deviance_trace;

    /// Coefficients over all design columns, zero for aliased ones.
    Eigen::VectorXd full_coefficients() const;
    /// Coefficient for `label`; nullopt when aliased or unknown.
    std::optional<double> coefficient(const std::string &label) const;
    /// Standard error for `label`; nullopt when aliased or unknown.
    std::optional<double> standard_error(const std::string &label) const;
};

/// Maximises sum(y * eta - exp(eta)) with eta = X beta + offset. Stops when the
/// relative deviance change drops below `tolerance` or after `max_iterations`
/// (reported through `converged`). Throws NonConvergenceError when the
/// deviance still rises after step halving on three consecutive iterations,
/// and InputError for malformed inputs (negative or non-finite y, non-finite
/// offset, misaligned rows).
GlmFit fit_poisson(const DesignMatrix &X, std::span<const double> y,
                   std::span<const double> offset, const GlmOptions &options = {});

/// mu = exp(X beta + offset). X must have the fitted design's columns.
Eigen::VectorXd predict_mean(const GlmFit &fit, const DesignMatrix &X,
                             std::span<const double> offset);

/// sum(y log mu - mu - log y!) for the fitted means on (X, offset).
double log_likelihood(const GlmFit &fit, const DesignMatrix &X, std::span<const double> y,
                      std::span<const double> offset);

/// Poisson log-likelihood for given means; -infinity when mu = 0 and y > 0.
double poisson_log_likelihood(std::span<const double> y, std::span<const double> mu);

/// Indices of columns that are not linear combinations of earlier columns.
std::vector<std::size_t> independent_columns(const Eigen::MatrixXd &X, double tolerance);

} // namespace refmort
