// Closed-form isotropic Gaussian mixtures: the semicircle datasets,
// exact log-density/score, sampling, and a tape-differentiable batch
// log-density for metric construction.
#pragma once

#include <cstdint>
#include <string>

#include "ebmgeo/rng.hpp"
#include "ebmgeo/tensor.hpp"

namespace ebmgeo::density {

// p(x) = sum_k pi_k N(x | mu_k, I)
struct MixtureDensity {
    ad::Matrix centers;       // [K, D]
    Eigen::VectorXd weights;  // [K], nonnegative, sums to 1

    Eigen::Index components() const { return centers.rows(); }
    Eigen::Index dim() const { return centers.cols(); }

    static MixtureDensity single(const Eigen::VectorXd& center);
    void validate() const;  // weight simplex + shape agreement
};

enum class Variant { Ucg, Wcg, Custom };

struct DatasetSpec {
    Variant variant = Variant::Ucg;
    int K = 200;
    double R = 8.0;
    std::uint64_t seed = 0;
    int n = 10000;
    MixtureDensity custom;  // used when variant == Custom

    std::string variant_name() const;
};

Variant variant_from_name(const std::string& name);

// Semicircle layouts. Centers sit at R*(cos t_k, sin t_k) on an
// inclusive angular grid over [0, pi], which keeps the layout exactly
// mirror-symmetric about the y-axis (both endpoints present).
MixtureDensity semicircle_ucg(int K = 200, double R = 8.0);
MixtureDensity semicircle_wcg(int K = 200, double R = 8.0, double s = 0.83);

// Truncated-Gaussian-over-angle profile peaked at the arc midpoint;
// symmetry pi_k == pi_{K-1-k} holds exactly by construction. s tunes
// the max/min ratio (default ~6x).
Eigen::VectorXd wcg_weights(int K, double s = 0.83);

MixtureDensity make_density(const DatasetSpec& spec);

double log_density(const MixtureDensity& d, const Eigen::VectorXd& x);
Eigen::VectorXd score(const MixtureDensity& d, const Eigen::VectorXd& x);

// Chunked batch evaluation (memory-bounded for big grids).
Eigen::VectorXd log_density_batch(const MixtureDensity& d, const ad::Matrix& X);
ad::Matrix score_batch(const MixtureDensity& d, const ad::Matrix& X);

// Differentiable [N, D] -> [N, 1] log-density on the tape, built from a
// handful of matrix ops (the quadratic expansion pulls the shared
// -|x|^2/2 term out of the log-sum-exp).
ad::Tensor log_density_op(const MixtureDensity& d, const ad::Tensor& x);

ad::Matrix sample(const MixtureDensity& d, Eigen::Index n, rng::Stream& rs);

// Tensor-grid quadrature of p over [lo, hi]^2 with the given step.
double grid_quadrature(const MixtureDensity& d, double lo, double hi, double step);

}  // namespace ebmgeo::density
