// Differentiable primitive operations on Tensors.
//
// Shape discipline: operands are 2-D.  Elementwise ops (add/sub/mul)
// require equal shapes, with two sanctioned broadcasts:
//   * a 1x1 scalar combines with anything;
//   * a single row [1, D] broadcasts across the leading batch dimension
//     of an [N, D] operand (bias addition and the like).
// Anything else is a hard ShapeError naming both shapes.  Reductions and
// structural ops (slice/concat/scale_rows) have fixed, documented shapes.
#pragma once

#include "ebmgeo/tensor.hpp"

namespace ebmgeo::ad {

// -- elementwise arithmetic --------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator-(const Tensor& x) { return neg(x); }
inline Tensor operator*(double s, const Tensor& x) {
    return mul(Tensor::scalar(s), x);
}
inline Tensor operator+(const Tensor& x, double s) {
    return add(x, Tensor::scalar(s));
}

// -- linear algebra ----------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);  // [n,k]x[k,m] -> [n,m]

// -- nonlinearities ----------------------------------------------------
Tensor silu(const Tensor& x);  // x * sigmoid(x)
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);  // errors on non-positive entries
Tensor square(const Tensor& x);
Tensor reciprocal(const Tensor& x);      // 1/x, errors on zero entries
Tensor clamp_min(const Tensor& x, double floor);  // subgradient 0 when clamped

// -- reductions --------------------------------------------------------
Tensor sum(const Tensor& x);       // all entries -> 1x1
Tensor mean(const Tensor& x);      // all entries -> 1x1
Tensor sqnorm(const Tensor& x);    // per batch row: [N,D] -> [N,1]
Tensor row_sum(const Tensor& x);   // [N,D] -> [N,1]
Tensor logsumexp_rows(const Tensor& x);  // [N,K] -> [N,1], max-subtracted

// -- structure ---------------------------------------------------------
Tensor scale_rows(const Tensor& x, const Tensor& s);  // [N,D] by [N,1]
Tensor slice_rows(const Tensor& x, Eigen::Index start, Eigen::Index count);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);

}  // namespace ebmgeo::ad
