#pragma once

// Dense BFGS minimiser with a strong-Wolfe line search.

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace refmort {

/// Objective: returns f(x) and writes the gradient into `grad`. May return
/// +infinity for points outside the domain.
using Objective = std::function<double(const Eigen::VectorXd &x, Eigen::VectorXd &grad)>;

struct BfgsOptions {
    int max_iterations = 500;
    /// Converged once the gradient's infinity norm falls below this.
    double gradient_tolerance = 1e-6;
};

struct BfgsResult {
    Eigen::VectorXd x;
    double value = 0.0;
    Eigen::VectorXd gradient;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    std::vector<double> trace; ///< objective after each iteration
};

/// Minimises `f` from `x0`. `inverse_hessian0` seeds the inverse Hessian
/// approximation (pass an empty matrix for the identity). Never accepts a step
/// that increases f by more than rounding noise (1e-12 relative).
BfgsResult minimize_bfgs(const Objective &f, Eigen::VectorXd x0,
                         const Eigen::MatrixXd &inverse_hessian0, const BfgsOptions &options = {});

} // namespace refmort
