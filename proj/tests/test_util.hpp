// Shared helpers for the unit tests: finite-difference gradients and
// mixed relative/absolute comparison.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "ebmgeo/rng.hpp"
#include "ebmgeo/tensor.hpp"

namespace testutil {

using ebmgeo::ad::Matrix;

// max over entries of |a-b| / max(1, |a|, |b|)
inline double rel_err(const Matrix& a, const Matrix& b) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            const double scale = std::max({1.0, std::abs(a(i, j)), std::abs(b(i, j))});
            worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / scale);
        }
    return worst;
}

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Central finite difference of a scalar function of one matrix input.
inline Matrix numeric_grad(const std::function<double(const Matrix&)>& f,
                           const Matrix& x, double h = 1e-5) {
    Matrix g(x.rows(), x.cols());
    Matrix xp = x;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            const double v = x(i, j);
            xp(i, j) = v + h;
            const double fp = f(xp);
            xp(i, j) = v - h;
            const double fm = f(xp);
            xp(i, j) = v;
            g(i, j) = (fp - fm) / (2.0 * h);
        }
    return g;
}

}  // namespace testutil
