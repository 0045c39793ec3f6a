#pragma once

// Screening-effect estimators on refined (incidence-based) mortality:
//   M0  observed vs. expected post-invitation deaths, no split by diagnosis time
//   M1  standardised ratio of post-invitation-diagnosed deaths to their
//       expectation from a pre-screening APC fit and the lag survival curve
//   M2  joint Poisson regression with prop_target offsets and a screening
//       indicator (recommended)
//   M3  full maximum likelihood over the APC model, the lag distribution and
//       the screening effect, warm-started from M2

#include "refmort/apc_model.hpp"
#include "refmort/lag_model.hpp"
#include "refmort/registry.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace refmort {

enum class Method { M0, M1, M2, M3 };

std::string_view to_string(Method method);
/// Accepts "0".."3", "M0".."M3" or "I".."III".
Method parse_method(std::string_view text);

/// Fit metadata attached to every estimate.
struct Diagnostics {
    int iterations = 0;
    bool converged = false;
    double log_likelihood = 0.0;
    std::size_t rows_used = 0;
    std::size_t rows_excluded = 0;
    std::vector<std::string> aliased;
    std::vector<std::string> warnings;
    std::map<std::string, double> values;
};

/// Fitted state of the full-likelihood model.
struct FullModelParams {
    std::vector<std::string> labels; ///< retained APC/region/screening columns
    Eigen::VectorXd coefficients;    ///< includes the log screening effect
    LagParameters lag;
    double log_effect = 0.0;
};

struct BootstrapSummary {
    int requested = 0;
    std::uint64_t seed = 0;
    std::vector<double> replicates;       ///< ratio scale, replicate order; NaN when failed
    std::vector<bool> converged;
    std::size_t failed = 0;
    double failure_fraction = 0.0;
    bool unreliable = false;
};

struct EstimateResult {
    Method method = Method::M2;
    double screening_rate_ratio = 1.0;
    double log_effect = 0.0;
    std::optional<double> ci_low;
    std::optional<double> ci_high;
    double ci_level = 0.95;
    Diagnostics diagnostics;
    std::optional<BootstrapSummary> bootstrap;

    /// APC fit behind the estimate (M0/M1: pre-screening fit, M2: joint fit).
    std::shared_ptr<const ApcFit> model;
    /// M3 only.
    std::shared_ptr<const FullModelParams> full_model;
};

struct EstimatorOptions {
    int spline_df = kDefaultSplineDf;
    GlmOptions glm;
    /// M3: maximum quasi-Newton iterations and gradient tolerance relative
    /// to the total number of deaths.
    int max_iterations = 500;
    double relative_gradient_tolerance = 1e-6;
};

EstimateResult estimate_method0(const MortalityTable &table, const EstimatorOptions &options = {});
EstimateResult estimate_method1(const MortalityTable &table, const LagSurvival &lag,
                                const EstimatorOptions &options = {});
EstimateResult estimate_method2(const MortalityTable &table, const EstimatorOptions &options = {});
/// `warm_start` must be an M2 estimate on the same table.
EstimateResult estimate_method3(const MortalityTable &table, const LagHistogram &hist,
                                const EstimateResult &warm_start,
                                const EstimatorOptions &options = {});

/// Runs one method; M1 derives the lag survival from `hist`, M3 runs M2 first.
EstimateResult run_estimator(Method method, const MortalityTable &table, const LagHistogram &hist,
                             const EstimatorOptions &options = {});

/// Joint log-likelihood machinery behind M3, exposed for testing.
///
/// Parameters are packed as [apc coefficients..., per-band lag log-ratios...]
/// where each band's lag probabilities are a softmax over the bins with
/// positive historic counts, relative to the band's most frequent bin.
class JointLikelihood {
public:
    /// `design` fixes the covariate layout and `retained` the identified columns.
    /// Cells with zero person-years, or whose expected count is structurally
    /// zero under the lag support, are dropped.
    JointLikelihood(const MortalityTable &table, const LagHistogram &hist, ApcDesign design,
                    std::vector<std::size_t> retained);

    std::size_t dimension() const noexcept;
    std::size_t rows() const noexcept { return cells_.size(); }
    std::size_t rows_excluded() const noexcept { return excluded_; }
    double total_deaths() const noexcept { return total_deaths_; }
    const std::vector<std::string> &labels() const noexcept { return labels_; }

    /// Packs APC coefficients (retained columns) and lag probabilities.
    Eigen::VectorXd pack(const Eigen::VectorXd &coefficients, const LagParameters &lag) const;
    Eigen::VectorXd coefficients(const Eigen::VectorXd &x) const;
    LagParameters lag(const Eigen::VectorXd &x) const;

    /// Log-likelihood (Poisson part including log y! terms, multinomial part
    /// without its coefficient) and its gradient.
    double log_likelihood(const Eigen::VectorXd &x, Eigen::VectorXd *gradient = nullptr) const;

    /// Approximate inverse information used to seed the quasi-Newton search:
    /// `apc_covariance` on the APC block and the multinomial inverse
    /// information on each lag block.
    Eigen::MatrixXd inverse_information(const Eigen::MatrixXd &apc_covariance,
                                        const Eigen::VectorXd &x) const;

private:
    struct Band {
        std::vector<std::size_t> support; ///< lag bins with positive counts
        std::size_t reference = 0;        ///< position within support fixed at log-ratio 0
        std::size_t offset = 0;           ///< first free parameter index
        std::vector<double> counts;       ///< full-width counts
    };

    std::vector<double> probabilities(const Band &band, const Eigen::VectorXd &x) const;

    ApcDesign design_;
    std::vector<std::size_t> retained_;
    std::vector<std::string> labels_;
    std::vector<MortalityCell> cells_;
    Eigen::MatrixXd X_; ///< retained columns only
    std::vector<double> log_py_;
    std::vector<int> band_of_row_;
    std::vector<int> delta_of_row_;
    std::vector<AgeBand> band_ranges_;
    std::vector<Band> bands_;
    std::size_t width_ = 0;
    std::size_t excluded_ = 0;
    double total_deaths_ = 0.0;
    double log_factorial_sum_ = 0.0;
};

struct JointFit {
    Eigen::VectorXd x;
    double start_log_likelihood = 0.0;
    double log_likelihood = 0.0;
    int iterations = 0;
    double gradient_norm = 0.0;
    bool converged = false;
    std::vector<double> trace;
};

/// Maximises the joint likelihood from `start`. Throws EstimationError when the
/// start has -infinite likelihood and NonConvergenceError when the iteration
/// limit is hit.
JointFit maximize_joint(const JointLikelihood &likelihood, const Eigen::VectorXd &start,
                        const Eigen::MatrixXd &apc_covariance, int max_iterations,
                        double gradient_tolerance);

} // namespace refmort
