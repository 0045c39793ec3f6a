#pragma once

// Natural cubic regression splines (no intercept column), used for the smooth
// age, period and cohort terms of the log-rate model.

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace refmort {

struct KnotSet {
    double lower = 0.0;
    double upper = 0.0;
    std::vector<double> interior;

    int df() const noexcept { return static_cast<int>(interior.size()) + 1; }
    friend bool operator==(const KnotSet &, const KnotSet &) = default;
};

/// Boundary knots at min/max of `values`; interior knots at the i/df
/// quantiles (linear interpolation between order statistics) of the distinct
/// values. Requires df >= 2 and at least df + 1 distinct values.
KnotSet knots_from_data(std::span<const double> values, int df);

/// Evaluates the df basis functions at each x. Functions are cubic between
/// knots, twice continuously differentiable, zero at the lower boundary and
/// linear outside the boundary knots.
Eigen::MatrixXd natural_basis(std::span<const double> x, const KnotSet &knots);

/// Single-point evaluation into `out` (length df).
void natural_basis_row(double x, const KnotSet &knots, std::span<double> out);

} // namespace refmort
