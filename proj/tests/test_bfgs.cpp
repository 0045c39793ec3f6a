#include "refmort/bfgs.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace refmort;

TEST(Bfgs, QuadraticConverges) {
    Eigen::MatrixXd A(3, 3);
    A << 4, 1, 0, 1, 3, 0.5, 0, 0.5, 2;
    const Eigen::Vector3d b(1, -2, 0.5);
    const Objective f = [&](const Eigen::VectorXd &x, Eigen::VectorXd &g) {
        g = A * x - b;
        return 0.5 * x.dot(A * x) - b.dot(x);
    };
    const auto r = minimize_bfgs(f, Eigen::VectorXd::Zero(3), {}, {100, 1e-12});
    EXPECT_TRUE(r.converged);
    const Eigen::VectorXd exact = A.ldlt().solve(b);
    EXPECT_LT((r.x - exact).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE(r.iterations, 10);
}

TEST(Bfgs, ExactInverseHessianTakesOneStep) {
    Eigen::MatrixXd A(2, 2);
    A << 5, 2, 2, 3;
    const Objective f = [&](const Eigen::VectorXd &x, Eigen::VectorXd &g) {
        g = A * x;
        return 0.5 * x.dot(A * x);
    };
    const auto r = minimize_bfgs(f, Eigen::Vector2d(1, -1), A.inverse(), {100, 1e-12});
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.iterations, 1);
}

TEST(Bfgs, RosenbrockAndMonotoneTrace) {
    const Objective f = [](const Eigen::VectorXd &x, Eigen::VectorXd &g) {
        const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
        g.resize(2);
        g[0] = -2.0 * a - 400.0 * x[0] * b;
        g[1] = 200.0 * b;
        return a * a + 100.0 * b * b;
    };
    const auto r = minimize_bfgs(f, Eigen::Vector2d(-1.2, 1.0), {}, {500, 1e-9});
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.x[0], 1.0, 1e-6);
    EXPECT_NEAR(r.x[1], 1.0, 1e-6);
    for (std::size_t i = 1; i < r.trace.size(); ++i) {
        EXPECT_LE(r.trace[i], r.trace[i - 1]);
    }
}

TEST(Bfgs, RespectsInfiniteBarrier) {
    // -log(x) + x on x > 0, infinite outside; minimum at 1.
    const Objective f = [](const Eigen::VectorXd &x, Eigen::VectorXd &g) -> double {
        g.resize(1);
        if (x[0] <= 0.0) {
            g[0] = 0.0;
            return INFINITY;
        }
        g[0] = -1.0 / x[0] + 1.0;
        return -std::log(x[0]) + x[0];
    };
    const auto r = minimize_bfgs(f, Eigen::VectorXd::Constant(1, 0.01), {}, {200, 1e-10});
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.x[0], 1.0, 1e-8);
}

TEST(Bfgs, IterationLimit) {
    const Objective f = [](const Eigen::VectorXd &x, Eigen::VectorXd &g) {
        const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
        g.resize(2);
        g[0] = -2.0 * a - 400.0 * x[0] * b;
        g[1] = 200.0 * b;
        return a * a + 100.0 * b * b;
    };
    const auto r = minimize_bfgs(f, Eigen::Vector2d(-1.2, 1.0), {}, {3, 1e-12});
    EXPECT_FALSE(r.converged);
    EXPECT_EQ(r.iterations, 3);
}
