#include "refmort/bfgs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace refmort {

namespace {

constexpr double kArmijo = 1e-4;
constexpr double kCurvature = 0.9;

struct Point {
    double alpha = 0.0;
    double value = 0.0;
    double slope = 0.0;
    Eigen::VectorXd grad;
};

// Cubic interpolation of the minimiser between two bracketing points,
// safeguarded to the interior of the bracket.
double interpolate(const Point &lo, const Point &hi) {
    const double d1 = lo.slope + hi.slope - 3.0 * (lo.value - hi.value) / (lo.alpha - hi.alpha);
    const double disc = d1 * d1 - lo.slope * hi.slope;
    double trial = 0.5 * (lo.alpha + hi.alpha);
    if (disc >= 0.0 && std::isfinite(hi.value)) {
        const double d2 = std::copysign(std::sqrt(disc), hi.alpha - lo.alpha);
        const double t = hi.alpha - (hi.alpha - lo.alpha) * (hi.slope + d2 - d1) /
                                        (hi.slope - lo.slope + 2.0 * d2);
        if (std::isfinite(t)) {
            trial = t;
        }
    }
    const double a = std::min(lo.alpha, hi.alpha);
    const double b = std::max(lo.alpha, hi.alpha);
    const double margin = 0.1 * (b - a);
    return std::clamp(trial, a + margin, b - margin);
}

} // namespace

BfgsResult minimize_bfgs(const Objective &f, Eigen::VectorXd x0,
                         const Eigen::MatrixXd &inverse_hessian0, const BfgsOptions &options) {
    const auto n = x0.size();
    BfgsResult result;
    Eigen::MatrixXd H = inverse_hessian0.size() == 0 ? Eigen::MatrixXd::Identity(n, n)
                                                     : inverse_hessian0;
    Eigen::VectorXd x = std::move(x0);
    Eigen::VectorXd g(n);
    double fx = f(x, g);
    result.evaluations = 1;

    auto evaluate = [&](const Eigen::VectorXd &dir, double alpha) {
        Point p;
        p.alpha = alpha;
        p.grad.resize(n);
        p.value = f(x + alpha * dir, p.grad);
        ++result.evaluations;
        p.slope = std::isfinite(p.value) ? p.grad.dot(dir) : std::numeric_limits<double>::infinity();
        return p;
    };

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        if (!std::isfinite(fx)) {
            break;
        }
        if (g.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
            result.converged = true;
            break;
        }
        Eigen::VectorXd dir = -H * g;
        double slope0 = g.dot(dir);
        if (!(slope0 < 0.0)) {
            H = Eigen::MatrixXd::Identity(n, n);
            dir = -g;
            slope0 = -g.squaredNorm();
        }

        // Strong-Wolfe search (bracketing then zoom).
        const Point origin{0.0, fx, slope0, g};
        Point prev = origin;
        Point accepted;
        bool found = false;
        double alpha = 1.0;
        for (int probe = 0; probe < 30 && !found; ++probe) {
            Point cur = evaluate(dir, alpha);
            const bool armijo = std::isfinite(cur.value) && cur.value <= fx + kArmijo * alpha * slope0;
            if (!armijo || (probe > 0 && cur.value >= prev.value)) {
                // Zoom inside [prev, cur].
                Point lo = prev, hi = cur;
                for (int z = 0; z < 30; ++z) {
                    const double a = std::isfinite(hi.value) ? interpolate(lo, hi)
                                                             : 0.5 * (lo.alpha + hi.alpha);
                    Point mid = evaluate(dir, a);
                    if (!std::isfinite(mid.value) || mid.value > fx + kArmijo * a * slope0 ||
                        mid.value >= lo.value) {
                        hi = mid;
                    } else {
                        if (std::abs(mid.slope) <= -kCurvature * slope0) {
                            accepted = mid;
                            found = true;
                            break;
                        }
                        if (mid.slope * (hi.alpha - lo.alpha) >= 0.0) {
                            hi = lo;
                        }
                        lo = mid;
                    }
                    if (std::abs(hi.alpha - lo.alpha) < 1e-14 * std::max(1.0, lo.alpha)) {
                        break;
                    }
                }
                if (!found && lo.alpha > 0.0 && lo.value < fx) {
                    accepted = lo; // sufficient decrease without the curvature condition
                    found = true;
                }
                break;
            }
            if (std::abs(cur.slope) <= -kCurvature * slope0) {
                accepted = cur;
                found = true;
                break;
            }
            if (cur.slope >= 0.0) {
                Point lo = cur, hi = prev;
                for (int z = 0; z < 30; ++z) {
                    const double a = interpolate(lo, hi);
                    Point mid = evaluate(dir, a);
                    if (!std::isfinite(mid.value) || mid.value > fx + kArmijo * a * slope0 ||
                        mid.value >= lo.value) {
                        hi = mid;
                    } else {
                        if (std::abs(mid.slope) <= -kCurvature * slope0) {
                            accepted = mid;
                            found = true;
                            break;
                        }
                        if (mid.slope * (hi.alpha - lo.alpha) >= 0.0) {
                            hi = lo;
                        }
                        lo = mid;
                    }
                }
                if (!found) {
                    accepted = lo;
                    found = true;
                }
                break;
            }
            prev = cur;
            alpha *= 2.0;
        }
        if (!found || !(accepted.value <= fx)) {
            // Near the optimum f differences drown in rounding; fall back to
            // the quasi-Newton step if it shrinks the gradient.
            const double noise = 1e-12 * (std::abs(fx) + 1.0);
            Point full = evaluate(dir, 1.0);
            if (std::isfinite(full.value) && full.value <= fx + noise &&
                full.grad.lpNorm<Eigen::Infinity>() < g.lpNorm<Eigen::Infinity>()) {
                accepted = std::move(full);
            } else {
                break; // no further progress possible along any descent direction we can find
            }
        }

        const Eigen::VectorXd s = accepted.alpha * dir;
        const Eigen::VectorXd yk = accepted.grad - g;
        x += s;
        fx = accepted.value;
        g = accepted.grad;
        result.iterations = iter + 1;
        result.trace.push_back(fx);

        const double sy = s.dot(yk);
        if (sy > 1e-12 * s.norm() * yk.norm()) {
            const double rho = 1.0 / sy;
            const Eigen::VectorXd Hy = H * yk;
            const double yHy = yk.dot(Hy);
            // H+ = (I - rho s y^T) H (I - rho y s^T) + rho s s^T, expanded.
            H.noalias() -= rho * (s * Hy.transpose() + Hy * s.transpose());
            H.noalias() += (rho * rho * yHy + rho) * (s * s.transpose());
        }
    }
    if (!result.converged && std::isfinite(fx) &&
        g.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
        result.converged = true;
    }
    result.x = std::move(x);
    result.value = fx;
    result.gradient = std::move(g);
    return result;
}

} // namespace refmort
