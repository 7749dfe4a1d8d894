// Contrastive-divergence training with Langevin negative sampling and a
// replay buffer.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ebmgeo/nets.hpp"
#include "ebmgeo/rng.hpp"
#include "ebmgeo/tensor.hpp"

namespace ebmgeo::ebm {

struct LangevinConfig {
    int steps = 100;          // L
    double step_size = 1.0;   // alpha_L
    double noise = 1e-2;      // sigma_L
    double buffer_prob = 0.95;
    // Per-point cap on the drift norm |alpha * grad| each step; with
    // alpha = 1 the raw drift explodes early in training.
    double drift_clip = 0.1;

    void validate() const;
};

// Bounded FIFO of past negatives; draws are uniform over the contents.
class ReplayBuffer {
  public:
    explicit ReplayBuffer(std::size_t capacity = 10000) : capacity_(capacity) {}

    void append(const ad::Matrix& pts);
    Eigen::VectorXd draw(rng::Stream& rs) const;  // one stored point
    std::size_t size() const { return store_.size(); }
    std::size_t capacity() const { return capacity_; }

  private:
    std::size_t capacity_;
    std::size_t next_ = 0;  // ring cursor once full
    std::vector<Eigen::VectorXd> store_;
};

struct EbmTrainConfig {
    int batch = 128;
    int steps = 20000;
    double lr = 1e-4;
    double reg_weight = 1.0;
    double divergence_bound = 1e4;  // abort when mean |E| passes this
    std::uint64_t seed = 0;

    void validate() const;
};

// Any batched energy: [B, D] tensor in, [B, 1] energies out.
using EnergyFn = std::function<ad::Tensor(const ad::Tensor&)>;

// L steps of x <- x - alpha * grad E(x) + omega, omega ~ N(0, sigma^2 I),
// drift clipped per point. Returns detached samples.
ad::Matrix langevin_sample(const EnergyFn& energy, ad::Matrix x,
                           const LangevinConfig& cfg, rng::Stream& rs);
ad::Matrix langevin_sample(const nets::EnergyModel& model, ad::Matrix x,
                           const LangevinConfig& cfg, rng::Stream& rs);

// mean E(x+) - mean E(x-) + reg * (mean E(x+)^2 + mean E(x-)^2).
// Negatives must be detached; gradients flow only into parameters (and
// x_pos if it is a leaf, which training never passes).
ad::Tensor cd_loss(const EnergyFn& energy, const ad::Tensor& x_pos,
                   const ad::Tensor& x_neg, double reg_weight);
ad::Tensor cd_loss(const nets::EnergyModel& model, const ad::Tensor& x_pos,
                   const ad::Tensor& x_neg, double reg_weight);

struct TrainLogRow {
    int step = 0;
    double cd_loss = 0, reg_loss = 0, mean_E_pos = 0, mean_E_neg = 0;
};

struct TrainResult {
    nets::EnergyModel model;
    std::vector<TrainLogRow> log;
    bool diverged = false;
    int aborted_at_step = -1;  // step whose forward tripped the detector
    std::string abort_reason;
};

// Optional paths persist the model checkpoint and the per-step CSV log
// (`step,cd_loss,reg_loss,mean_E_pos,mean_E_neg`); empty strings skip.
TrainResult train_ebm(const ad::Matrix& data, const EbmTrainConfig& cfg,
                      const LangevinConfig& lcfg,
                      const std::string& ckpt_path = "",
                      const std::string& log_path = "");

void write_train_log(const std::string& path, const std::vector<TrainLogRow>& log);

}  // namespace ebmgeo::ebm
