#include "refmort/errors.hpp"
#include "refmort/poisson_glm.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace refmort;

namespace {

DesignMatrix design(const Eigen::MatrixXd &values) {
    DesignMatrix X;
    X.values = values;
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
        X.labels.push_back("x" + std::to_string(j));
    }
    return X;
}

struct Problem {
    DesignMatrix X;
    std::vector<double> y;
    std::vector<double> offset;
};

Problem random_problem(unsigned seed, int n, int p) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u(3.0, 6.0);
    Eigen::MatrixXd V(n, p);
    Eigen::VectorXd beta(p);
    for (int j = 0; j < p; ++j) {
        beta[j] = 0.3 * z(rng);
        for (int i = 0; i < n; ++i) {
            V(i, j) = j == 0 ? 1.0 : z(rng);
        }
    }
    Problem pr{design(V), {}, {}};
    for (int i = 0; i < n; ++i) {
        const double off = std::log(u(rng));
        const double mu = std::exp(V.row(i).dot(beta) + off);
        pr.offset.push_back(off);
        pr.y.push_back(static_cast<double>(std::poisson_distribution<int>(mu)(rng)));
    }
    return pr;
}

// Cyclic coordinate Newton ascent on the Poisson log-likelihood; a method
// independent of IRLS used as an oracle.
Eigen::VectorXd coordinate_ascent(const Problem &pr) {
    const auto &X = pr.X.values;
    const Eigen::Map<const Eigen::VectorXd> y(pr.y.data(), X.rows());
    const Eigen::Map<const Eigen::VectorXd> off(pr.offset.data(), X.rows());
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(X.cols());
    for (int sweep = 0; sweep < 20000; ++sweep) {
        double largest = 0.0;
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            const Eigen::VectorXd mu = (X * beta + off).array().exp();
            const double g = X.col(j).dot(y - mu);
            const double h = X.col(j).cwiseAbs2().dot(mu);
            const double step = g / h;
            beta[j] += step;
            largest = std::max(largest, std::abs(step));
        }
        if (largest < 1e-13) {
            break;
        }
    }
    return beta;
}

} // namespace

TEST(PoissonGlm, InterceptOnlyIsLogMean) {
    const auto X = design(Eigen::MatrixXd::Ones(3, 1));
    const std::vector<double> y{1, 2, 3}, off(3, 0.0);
    const auto fit = fit_poisson(X, y, off);
    EXPECT_TRUE(fit.converged);
    EXPECT_NEAR(fit.coefficients[0], std::log(2.0), 1e-10);
}

TEST(PoissonGlm, SaturatingOffsetGivesZero) {
    const auto X = design(Eigen::MatrixXd::Ones(4, 1));
    const std::vector<double> y{1, 5, 2, 7};
    std::vector<double> off;
    for (double v : y) {
        off.push_back(std::log(v));
    }
    EXPECT_NEAR(fit_poisson(X, y, off).coefficients[0], 0.0, 1e-10);
}

TEST(PoissonGlm, DuplicatedAndZeroColumnsAreAliased) {
    const auto pr = random_problem(1, 200, 3);
    Eigen::MatrixXd wide(200, 5);
    wide << pr.X.values, pr.X.values.col(1), Eigen::VectorXd::Zero(200);
    const auto base = fit_poisson(pr.X, pr.y, pr.offset);
    const auto dup = fit_poisson(design(wide), pr.y, pr.offset);
    EXPECT_EQ(dup.aliased, (std::vector<std::string>{"x3", "x4"}));
    EXPECT_FALSE(dup.coefficient("x3"));
    const auto a = predict_mean(base, pr.X, pr.offset);
    const auto b = predict_mean(dup, design(wide), pr.offset);
    EXPECT_LT(((a - b).array() / a.array()).abs().maxCoeff(), 1e-10);
}

TEST(PoissonGlm, ScoreEquationsHoldAtFit) {
    for (unsigned seed = 0; seed < 5; ++seed) {
        const auto pr = random_problem(seed, 300, 6);
        const auto fit = fit_poisson(pr.X, pr.y, pr.offset);
        const auto mu = predict_mean(fit, pr.X, pr.offset);
        const Eigen::Map<const Eigen::VectorXd> y(pr.y.data(), 300);
        const double total = y.sum();
        EXPECT_LT((pr.X.values.transpose() * (y - mu)).cwiseAbs().maxCoeff(), 1e-6 * total);
        // with an intercept the fitted total equals the observed total
        EXPECT_NEAR(mu.sum(), total, 1e-6 * total);
    }
}

TEST(PoissonGlm, AgreesWithIndependentOptimizer) {
    for (unsigned seed = 10; seed < 14; ++seed) {
        const auto pr = random_problem(seed, 150, 4 + static_cast<int>(seed % 7));
        const auto fit = fit_poisson(pr.X, pr.y, pr.offset);
        const auto oracle = coordinate_ascent(pr);
        EXPECT_LT((fit.coefficients - oracle).cwiseAbs().maxCoeff(), 1e-6) << "seed " << seed;
    }
}

TEST(PoissonGlm, GridSearchOracle) {
    const auto pr = random_problem(3, 100, 2);
    Eigen::MatrixXd one = pr.X.values.col(1);
    const auto X = design(one);
    const auto fit = fit_poisson(X, pr.y, pr.offset);
    const double step = 1e-4;
    double best = -INFINITY, arg = 0.0;
    for (double b = -2.0; b <= 2.0; b += step) {
        GlmFit probe = fit;
        probe.coefficients[0] = b;
        const double ll = log_likelihood(probe, X, pr.y, pr.offset);
        if (ll > best) {
            best = ll;
            arg = b;
        }
    }
    EXPECT_NEAR(fit.coefficients[0], arg, step);
    EXPECT_GE(fit.log_likelihood, best - 1e-9);
}

TEST(PoissonGlm, ScaleInvariance) {
    auto pr = random_problem(7, 250, 5);
    const auto fit = fit_poisson(pr.X, pr.y, pr.offset);
    for (auto &v : pr.y) {
        v *= 2.0;
    }
    for (auto &o : pr.offset) {
        o += std::log(2.0);
    }
    const auto doubled = fit_poisson(pr.X, pr.y, pr.offset);
    EXPECT_LT((fit.coefficients - doubled.coefficients).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(PoissonGlm, CovarianceSymmetricPositive) {
    const auto pr = random_problem(2, 200, 5);
    const auto fit = fit_poisson(pr.X, pr.y, pr.offset);
    EXPECT_LT((fit.covariance - fit.covariance.transpose()).cwiseAbs().maxCoeff(), 1e-14);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fit.covariance);
    EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
    EXPECT_GT(*fit.standard_error("x1"), 0.0);
}

TEST(PoissonGlm, PredictionProperties) {
    const auto pr = random_problem(4, 50, 3);
    const auto fit = fit_poisson(pr.X, pr.y, pr.offset);
    auto shifted = pr.offset;
    for (auto &o : shifted) {
        o += std::log(2.0);
    }
    const auto a = predict_mean(fit, pr.X, pr.offset);
    const auto b = predict_mean(fit, pr.X, shifted);
    EXPECT_LT(((b - 2.0 * a).array() / a.array()).abs().maxCoeff(), 1e-14);
    EXPECT_TRUE((a.array() > 0.0).all());

    GlmFit zero = fit;
    zero.coefficients.setZero();
    const std::vector<double> py{10.0, 20.0, 30.5};
    std::vector<double> log_py;
    for (double v : py) {
        log_py.push_back(std::log(v));
    }
    const auto X3 = design(pr.X.values.topRows(3));
    const auto mu = predict_mean(zero, X3, log_py);
    for (int i = 0; i < 3; ++i) {
        EXPECT_NEAR(mu[i], py[static_cast<std::size_t>(i)], 1e-12);
    }
    const auto narrow = design(pr.X.values.leftCols(2));
    EXPECT_THROW(predict_mean(fit, narrow, pr.offset), InputError);
}

TEST(PoissonGlm, LogLikelihoodExamples) {
    const std::vector<double> zeros{0, 0}, mu{1.5, 2.0};
    EXPECT_DOUBLE_EQ(poisson_log_likelihood(zeros, mu), -3.5);
    const std::vector<double> one{1.0};
    EXPECT_DOUBLE_EQ(poisson_log_likelihood(one, one), -1.0);
    const std::vector<double> none{0.0};
    EXPECT_EQ(poisson_log_likelihood(one, none), -INFINITY);
}

TEST(PoissonGlm, InputErrors) {
    const auto X = design(Eigen::MatrixXd::Ones(2, 1));
    const std::vector<double> off(2, 0.0);
    EXPECT_THROW(fit_poisson(X, std::vector<double>{1.0, -1.0}, off), InputError);
    EXPECT_THROW(fit_poisson(X, std::vector<double>{1.0}, off), InputError);
    EXPECT_THROW(fit_poisson(X, std::vector<double>{1.0, 2.0}, std::vector<double>{0.0, NAN}),
                 InputError);
}

TEST(PoissonGlm, IterationLimitReportedNotThrown) {
    const auto pr = random_problem(5, 100, 4);
    GlmOptions opts;
    opts.max_iterations = 1;
    const auto fit = fit_poisson(pr.X, pr.y, pr.offset, opts);
    EXPECT_FALSE(fit.converged);
    EXPECT_EQ(fit.iterations, 1);
}

TEST(PoissonGlm, WarmStartReachesSameFit) {
    const auto pr = random_problem(6, 200, 5);
    const auto cold = fit_poisson(pr.X, pr.y, pr.offset);
    GlmOptions opts;
    opts.start = cold.full_coefficients();
    const auto warm = fit_poisson(pr.X, pr.y, pr.offset, opts);
    EXPECT_LE(warm.iterations, 2);
    EXPECT_LT((warm.coefficients - cold.coefficients).cwiseAbs().maxCoeff(), 1e-8);
}
