// Optimizers: Adam for network training, L-BFGS with a weak-Wolfe line
// search for the per-pair waypoint problems.
#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "ebmgeo/tensor.hpp"

namespace ebmgeo::optim {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adaptive-moment update over a fixed set of parameter leaves.  State is
// keyed by node identity, so the same Adam instance must be fed the same
// parameter tensors every step.
class Adam {
  public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(std::vector<ad::Tensor>& params, const ad::GradMap& grads);

    const AdamConfig& config() const { return cfg_; }

    // Schedules adjust the step size between steps; moments are kept.
    void set_lr(double lr) { cfg_.lr = lr; }

  private:
    struct Moments {
        ad::Matrix m, v;
    };
    AdamConfig cfg_;
    long t_ = 0;
    std::unordered_map<const ad::Node*, Moments> state_;
};

// Minimizes f over a flat variable vector.  f fills the gradient and
// returns the objective.  The sufficient-decrease arm of the line
// search guarantees monotone descent (tests rely on it).
struct LbfgsConfig {
    int max_iters = 400;
    int memory = 8;
    double grad_tol = 1e-8;       // stop on ||g||_inf below this
    double rel_f_tol = 1e-12;     // stop on relative objective decrease
    double armijo_c1 = 1e-4;
    double wolfe_c2 = 0.9;
    int max_line_steps = 40;
};

struct LbfgsResult {
    Eigen::VectorXd x;
    double f = 0.0;
    int iters = 0;
    bool converged = false;  // false = iteration/line-search budget hit
};

LbfgsResult lbfgs_minimize(
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& f,
    Eigen::VectorXd x0, const LbfgsConfig& cfg = {});

}  // namespace ebmgeo::optim
