#include "refmort/spline.hpp"

#include "refmort/errors.hpp"

#include <algorithm>
#include <cmath>

namespace refmort {

KnotSet knots_from_data(std::span<const double> values, int df) {
    if (df < 2) {
        throw InputError("spline df must be at least 2");
    }
    std::vector<double> distinct(values.begin(), values.end());
    if (std::any_of(distinct.begin(), distinct.end(), [](double v) { return !std::isfinite(v); })) {
        throw InputError("spline covariate contains non-finite values");
    }
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < static_cast<std::size_t>(df) + 1) {
        throw InputError("spline with df " + std::to_string(df) + " needs at least " +
                         std::to_string(df + 1) + " distinct values, got " +
                         std::to_string(distinct.size()));
    }

    KnotSet knots;
    knots.lower = distinct.front();
    knots.upper = distinct.back();
    const double n1 = static_cast<double>(distinct.size() - 1);
    for (int i = 1; i < df; ++i) {
        const double h = n1 * static_cast<double>(i) / static_cast<double>(df);
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const auto hi = std::min(lo + 1, distinct.size() - 1);
        const double frac = h - static_cast<double>(lo);
        knots.interior.push_back(distinct[lo] + frac * (distinct[hi] - distinct[lo]));
    }
    return knots;
}

// Truncated-power construction: with scaled knots t_0 < ... < t_K,
//   N_0(u) = u,
//   N_{k+1}(u) = d_k(u) - d_{K-1}(u),   d_k(u) = ((u - t_k)_+^3 - (u - t_K)_+^3) / (t_K - t_k),
// for k = 0 ... K-2. Each N is cubic between knots, C2, and linear past t_K.
// Covariates are mapped to u = (x - lower) / (upper - lower) for conditioning.
void natural_basis_row(double x, const KnotSet &knots, std::span<double> out) {
    const int df = knots.df();
    if (static_cast<int>(out.size()) != df) {
        throw InputError("spline output row has wrong length");
    }
    if (!std::isfinite(x)) {
        throw InputError("spline evaluated at a non-finite point");
    }
    const double width = knots.upper - knots.lower;
    if (!(width > 0.0)) {
        throw InputError("spline boundary knots must be distinct");
    }
    const double u = (x - knots.lower) / width;
    out[0] = u;
    if (df == 1) {
        return;
    }

    // Scaled knots: t_0 = 0, interior..., t_K = 1.
    const int K = df; // index of the upper boundary knot
    auto t = [&](int k) {
        if (k == 0) {
            return 0.0;
        }
        if (k == K) {
            return 1.0;
        }
        return (knots.interior[static_cast<std::size_t>(k - 1)] - knots.lower) / width;
    };
    auto cube_plus = [](double v) { return v > 0.0 ? v * v * v : 0.0; };
    auto d = [&](int k) {
        return (cube_plus(u - t(k)) - cube_plus(u - t(K))) / (t(K) - t(k));
    };

    if (u > 1.0) {
        // Past the upper boundary the cubic terms cancel exactly; evaluate the
        // linear continuation directly so no roundoff curvature leaks in.
        auto d_linear = [&](int k) {
            const double a = 1.0 - t(k);
            // ((u - t_k)^3 - (u - 1)^3) / a expanded around u = 1.
            return a * a + 3.0 * a * (u - 1.0);
        };
        const double last = d_linear(K - 1);
        for (int k = 0; k <= K - 2; ++k) {
            out[static_cast<std::size_t>(k + 1)] = d_linear(k) - last;
        }
        return;
    }
    const double last = d(K - 1);
    for (int k = 0; k <= K - 2; ++k) {
        out[static_cast<std::size_t>(k + 1)] = d(k) - last;
    }
}

Eigen::MatrixXd natural_basis(std::span<const double> x, const KnotSet &knots) {
    const int df = knots.df();
    Eigen::MatrixXd basis(static_cast<Eigen::Index>(x.size()), df);
    std::vector<double> row(static_cast<std::size_t>(df));
    for (std::size_t i = 0; i < x.size(); ++i) {
        natural_basis_row(x[i], knots, row);
        for (int j = 0; j < df; ++j) {
            basis(static_cast<Eigen::Index>(i), j) = row[static_cast<std::size_t>(j)];
        }
    }
    return basis;
}

} // namespace refmort
