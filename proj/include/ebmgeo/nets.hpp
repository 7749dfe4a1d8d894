// Network architectures: the quadratic-head energy MLP and the geodesic
// interpolant MLP, both built on the autodiff Tensor.
#pragma once

#include <string>
#include <vector>

#include "ebmgeo/ops.hpp"
#include "ebmgeo/rng.hpp"
#include "ebmgeo/tensor.hpp"

namespace ebmgeo::nets {

struct Linear {
    ad::Tensor W;  // [in, out]
    ad::Tensor b;  // [1, out]

    static Linear create(Eigen::Index in, Eigen::Index out, rng::Stream& rs);
    static Linear zeros(Eigen::Index in, Eigen::Index out);

    ad::Tensor operator()(const ad::Tensor& x) const {
        return ad::add(ad::matmul(x, W), b);
    }
    Eigen::Index in_dim() const { return W.rows(); }
    Eigen::Index out_dim() const { return W.cols(); }
};

// Scalar energy network: a SiLU trunk (D -> 32, four 32 -> 32 hidden
// layers, then a linear 32 -> 32 feature layer) feeding three linear
// heads, combined as E(x) = f1(z)*f2(z) + f3(z^2) with z the trunk
// feature and z^2 its elementwise square.  The product/quadratic head
// lets the energy grow superlinearly away from the data.
struct EnergyModel {
    std::vector<Linear> trunk;  // 6 layers; SiLU after the first 5
    Linear f1, f2, f3;          // 32 -> 1 heads
    Eigen::Index input_dim = 2;

    static EnergyModel create(Eigen::Index input_dim, rng::Stream& rs);

    // [B, D] -> [B, 1] energies; differentiable w.r.t. x and parameters.
    ad::Tensor forward(const ad::Tensor& x) const;

    // Detached convenience for plain evaluation.
    Eigen::VectorXd energies(const ad::Matrix& x) const;

    std::vector<ad::Tensor> parameters();
    std::vector<std::pair<std::string, ad::Tensor>> named_parameters();
    std::string descriptor() const;
};

// Geodesic correction network phi(x0, x1, t): input [N, 2D+1] (x0, x1
// and the time coordinate concatenated), SiLU MLP 2D+1 -> 32 -> 64 ->
// 64 -> 32 -> D.  The final layer starts at zero so the initial path is
// exactly the straight line.
struct InterpolantNet {
    std::vector<Linear> layers;  // 5 layers; SiLU after the first 4
    Eigen::Index dim = 2;        // ambient dimension D

    static InterpolantNet create(Eigen::Index dim, rng::Stream& rs);

    ad::Tensor forward(const ad::Tensor& input) const;  // [N, 2D+1] -> [N, D]

    std::vector<ad::Tensor> parameters();
    std::vector<std::pair<std::string, ad::Tensor>> named_parameters();
    std::string descriptor() const;
};

}  // namespace ebmgeo::nets
