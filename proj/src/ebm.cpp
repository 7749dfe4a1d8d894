#include "ebmgeo/ebm.hpp"

#include <cmath>

#include "ebmgeo/checkpoint.hpp"
#include "ebmgeo/common.hpp"
#include "ebmgeo/io/csv.hpp"
#include "ebmgeo/ops.hpp"
#include "ebmgeo/optim.hpp"

namespace ebmgeo::ebm {

void LangevinConfig::validate() const {
    if (steps < 1) throw ConfigError("langevin.steps must be >= 1");
    if (!(step_size > 0)) throw ConfigError("langevin.step_size must be > 0");
    if (noise < 0) throw ConfigError("langevin.noise must be >= 0");
    if (buffer_prob < 0 || buffer_prob > 1)
        throw ConfigError("langevin.buffer_prob must be in [0, 1]");
    if (!(drift_clip > 0)) throw ConfigError("langevin.drift_clip must be > 0");
}

void EbmTrainConfig::validate() const {
    if (batch < 1) throw ConfigError("ebm.batch must be >= 1");
    if (steps < 0) throw ConfigError("ebm.steps must be >= 0");
    if (!(lr > 0)) throw ConfigError("ebm.lr must be > 0");
    if (reg_weight < 0) throw ConfigError("ebm.reg_weight must be >= 0");
    if (!(divergence_bound > 0)) throw ConfigError("ebm.divergence_bound must be > 0");
}

void ReplayBuffer::append(const ad::Matrix& pts) {
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        if (store_.size() < capacity_) {
            store_.push_back(pts.row(i).transpose());
        } else if (capacity_ > 0) {
            store_[next_] = pts.row(i).transpose();
            next_ = (next_ + 1) % capacity_;
        }
    }
}

Eigen::VectorXd ReplayBuffer::draw(rng::Stream& rs) const {
    if (store_.empty()) throw std::logic_error("ReplayBuffer::draw on empty buffer");
    return store_[rs.integer(store_.size())];
}

ad::Matrix langevin_sample(const EnergyFn& energy, ad::Matrix x,
                           const LangevinConfig& cfg, rng::Stream& rs) {
    cfg.validate();
    const Eigen::Index B = x.rows(), D = x.cols();
    for (int step = 0; step < cfg.steps; ++step) {
        ad::Tensor xt = ad::Tensor::leaf(x);
        ad::Tensor e = energy(xt);
        if (!e.value().allFinite()) {
            Eigen::Index bad = 0;
            for (Eigen::Index i = 0; i < B; ++i)
                if (!std::isfinite(e.value()(i, 0))) { bad = i; break; }
            throw NumericalError("langevin_sample: non-finite energy at step " +
                                 std::to_string(step) + ", point (" +
                                 io::fmt_g17(x(bad, 0)) + ", " + io::fmt_g17(x(bad, 1)) + ")");
        }
        auto gm = ad::backward(ad::sum(e));
        ad::Matrix g = ad::gradient(gm, xt);
        if (!g.allFinite()) {
            Eigen::Index bad = 0;
            for (Eigen::Index i = 0; i < B; ++i)
                if (!g.row(i).allFinite()) { bad = i; break; }
            throw NumericalError("langevin_sample: non-finite gradient at step " +
                                 std::to_string(step) + ", point (" +
                                 io::fmt_g17(x(bad, 0)) + ", " + io::fmt_g17(x(bad, 1)) + ")");
        }
        for (Eigen::Index i = 0; i < B; ++i) {
            Eigen::RowVectorXd drift = cfg.step_size * g.row(i);
            const double n = drift.norm();
            if (n > cfg.drift_clip) drift *= cfg.drift_clip / n;
            x.row(i) -= drift;
        }
        if (cfg.noise > 0) x += cfg.noise * rs.normal_matrix(B, D);
    }
    return x;
}

ad::Matrix langevin_sample(const nets::EnergyModel& model, ad::Matrix x,
                           const LangevinConfig& cfg, rng::Stream& rs) {
    return langevin_sample(
        [&model](const ad::Tensor& xt) { return model.forward(xt); }, std::move(x),
        cfg, rs);
}

ad::Tensor cd_loss(const EnergyFn& energy, const ad::Tensor& x_pos,
                   const ad::Tensor& x_neg, double reg_weight) {
    if (x_neg.requires_grad())
        throw std::invalid_argument(
            "cd_loss: negative samples must be detached from the sampler");
    ad::Tensor e_pos = energy(x_pos);
    ad::Tensor e_neg = energy(x_neg);
    ad::Tensor cd = ad::sub(ad::mean(e_pos), ad::mean(e_neg));
    ad::Tensor reg = ad::add(ad::mean(ad::square(e_pos)), ad::mean(ad::square(e_neg)));
    return ad::add(cd, reg_weight * reg);
}

ad::Tensor cd_loss(const nets::EnergyModel& model, const ad::Tensor& x_pos,
                   const ad::Tensor& x_neg, double reg_weight) {
    return cd_loss([&model](const ad::Tensor& xt) { return model.forward(xt); },
                   x_pos, x_neg, reg_weight);
}

void write_train_log(const std::string& path, const std::vector<TrainLogRow>& log) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(log.size());
    for (const auto& r : log) {
        rows.push_back({std::to_string(r.step), io::fmt_g17(r.cd_loss),
                        io::fmt_g17(r.reg_loss), io::fmt_g17(r.mean_E_pos),
                        io::fmt_g17(r.mean_E_neg)});
    }
    io::write_csv(path, {"step", "cd_loss", "reg_loss", "mean_E_pos", "mean_E_neg"}, rows);
}

TrainResult train_ebm(const ad::Matrix& data, const EbmTrainConfig& cfg,
                      const LangevinConfig& lcfg, const std::string& ckpt_path,
                      const std::string& log_path) {
    cfg.validate();
    lcfg.validate();
    if (data.rows() == 0) throw ConfigError("train_ebm: empty dataset");
    const Eigen::Index D = data.cols();

    rng::Stream init_rs(rng::derive(cfg.seed, "ebm/init", 0));
    rng::Stream batch_rs(rng::derive(cfg.seed, "ebm/batch", 0));
    rng::Stream neg_rs(rng::derive(cfg.seed, "ebm/negatives", 0));
    rng::Stream lang_rs(rng::derive(cfg.seed, "ebm/langevin", 0));

    TrainResult out{nets::EnergyModel::create(D, init_rs), {}, false, -1, ""};
    auto params = out.model.parameters();
    optim::Adam adam(optim::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    ReplayBuffer buffer;

    // Fresh negatives start uniform over the data bounding box +20%.
    Eigen::RowVectorXd lo = data.colwise().minCoeff();
    Eigen::RowVectorXd hi = data.colwise().maxCoeff();
    const Eigen::RowVectorXd pad = 0.2 * (hi - lo);
    lo -= pad;
    hi += pad;

    // Parameters that most recently produced a finite, in-bound forward
    // pass; restored if the detector trips.
    std::vector<ad::Matrix> good;
    int good_step = -1;
    auto snapshot = [&] {
        good.clear();
        for (const auto& p : params) good.push_back(p.value());
    };
    auto restore = [&] {
        for (std::size_t i = 0; i < params.size(); ++i)
            params[i].mutable_value() = good[i];
    };

    for (int step = 0; step < cfg.steps; ++step) {
        ad::Matrix x_pos(cfg.batch, D);
        for (int i = 0; i < cfg.batch; ++i)
            x_pos.row(i) = data.row(static_cast<Eigen::Index>(
                batch_rs.integer(static_cast<std::uint64_t>(data.rows()))));

        ad::Matrix x0(cfg.batch, D);
        for (int i = 0; i < cfg.batch; ++i) {
            if (buffer.size() > 0 && neg_rs.uniform() < lcfg.buffer_prob) {
                x0.row(i) = buffer.draw(neg_rs).transpose();
            } else {
                for (Eigen::Index j = 0; j < D; ++j)
                    x0(i, j) = neg_rs.uniform(lo[j], hi[j]);
            }
        }

        ad::Matrix x_neg;
        try {
            x_neg = langevin_sample(out.model, std::move(x0), lcfg, lang_rs);
        } catch (const NumericalError& e) {
            out.diverged = true;
            out.aborted_at_step = step;
            out.abort_reason = e.what();
            break;
        }

        ad::Tensor loss = cd_loss(out.model, ad::Tensor::constant(x_pos),
                                  ad::Tensor::constant(x_neg), cfg.reg_weight);
        const Eigen::VectorXd ep = out.model.energies(x_pos);
        const Eigen::VectorXd en = out.model.energies(x_neg);
        const double mean_abs_e = 0.5 * (ep.cwiseAbs().mean() + en.cwiseAbs().mean());
        if (!std::isfinite(mean_abs_e) || mean_abs_e > cfg.divergence_bound) {
            out.diverged = true;
            out.aborted_at_step = step;
            out.abort_reason = "mean |E| = " + io::fmt_g17(mean_abs_e) +
                               " exceeded divergence bound " +
                               io::fmt_g17(cfg.divergence_bound);
            break;
        }
        snapshot();
        good_step = step;

        const double reg_part = cfg.reg_weight * (ep.array().square().mean() +
                                                  en.array().square().mean());
        out.log.push_back(
            {step, ep.mean() - en.mean(), reg_part, ep.mean(), en.mean()});

        auto gm = ad::backward(loss);
        adam.step(params, gm);
        buffer.append(x_neg);
    }

    if (out.diverged) {
        if (good_step >= 0) restore();
        out.abort_reason += "; restored parameters from step " + std::to_string(good_step);
    }

    if (!ckpt_path.empty()) {
        nlohmann::json meta;
        meta["steps"] = out.diverged ? good_step + 1 : cfg.steps;
        meta["diverged"] = out.diverged;
        std::vector<double> tail;
        for (std::size_t i = out.log.size() >= 20 ? out.log.size() - 20 : 0;
             i < out.log.size(); ++i)
            tail.push_back(out.log[i].cd_loss);
        meta["loss_tail"] = tail;
        ckpt::save_energy_model(out.model, ckpt_path, cfg.seed, meta);
    }
    if (!log_path.empty()) write_train_log(log_path, out.log);
    return out;
}

}  // namespace ebmgeo::ebm
