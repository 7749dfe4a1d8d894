#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "ebmgeo/densities.hpp"
#include "ebmgeo/ebm.hpp"
#include "ebmgeo/checkpoint.hpp"
#include "ebmgeo/io/csv.hpp"
#include "ebmgeo/ops.hpp"
#include "test_util.hpp"

using namespace ebmgeo;
using ad::Matrix;
using ad::Tensor;
using testutil::rel_err;

TEST_CASE("zero energy and zero noise leave points in place") {
    rng::Stream rs(1);
    auto m = nets::EnergyModel::create(2, rs);
    m.f1.W.mutable_value().setZero();
    m.f1.b.mutable_value().setZero();
    m.f3.W.mutable_value().setZero();
    m.f3.b.mutable_value().setZero();

    ebm::LangevinConfig cfg;
    cfg.noise = 0.0;
    const Matrix x0 = rs.normal_matrix(8, 2) * 3.0;
    rng::Stream chain(2);
    const Matrix x1 = ebm::langevin_sample(m, x0, cfg, chain);
    CHECK(x1 == x0);
}

TEST_CASE("langevin chain on quadratic energy reaches unit variance") {
    // E(x) = |x|^2 / 2 with alpha = 0.01, sigma = sqrt(2 * 0.01): the
    // chain's stationary distribution is the unit Gaussian.
    ebm::EnergyFn quad = [](const Tensor& x) { return 0.5 * ad::sqnorm(x); };
    ebm::LangevinConfig cfg;
    cfg.steps = 100;
    cfg.step_size = 0.01;
    cfg.noise = std::sqrt(2.0 * 0.01);
    cfg.drift_clip = 1e9;  // pure unclipped dynamics for this check

    rng::Stream rs(3);
    Matrix x = Matrix::Zero(64, 2);
    double s1 = 0, s2 = 0;
    long n = 0;
    // 100 segments of 100 steps = 1e4 total; tally the later segments.
    for (int seg = 0; seg < 100; ++seg) {
        x = ebm::langevin_sample(quad, std::move(x), cfg, rs);
        if (seg < 10) continue;  // burn-in
        s1 += x.sum();
        s2 += x.array().square().sum();
        n += x.size();
    }
    const double mean = s1 / static_cast<double>(n);
    const double var = s2 / static_cast<double>(n) - mean * mean;
    CHECK(std::abs(var - 1.0) <= 0.1);
}

TEST_CASE("fixed seed gives bit-identical chains") {
    rng::Stream rs(4);
    auto m = nets::EnergyModel::create(2, rs);
    const Matrix x0 = rs.normal_matrix(4, 2);
    ebm::LangevinConfig cfg;
    cfg.steps = 20;
    rng::Stream a(11), b(11);
    CHECK(ebm::langevin_sample(m, x0, cfg, a) == ebm::langevin_sample(m, x0, cfg, b));
}

TEST_CASE("cd_loss with identical batches is pure regularizer") {
    rng::Stream rs(5);
    auto m = nets::EnergyModel::create(2, rs);
    const Matrix x = rs.normal_matrix(16, 2);
    const double loss =
        ebm::cd_loss(m, Tensor::constant(x), Tensor::constant(x), 0.5).scalar_value();
    const Eigen::VectorXd e = m.energies(x);
    CHECK(loss == doctest::Approx(0.5 * 2.0 * e.array().square().mean()).epsilon(1e-12));

    // zero-energy model: loss vanishes entirely
    m.f1.W.mutable_value().setZero();
    m.f1.b.mutable_value().setZero();
    m.f3.W.mutable_value().setZero();
    m.f3.b.mutable_value().setZero();
    CHECK(ebm::cd_loss(m, Tensor::constant(x), Tensor::constant(x), 0.5).scalar_value() ==
          0.0);
}

TEST_CASE("cd_loss rejects negatives that carry gradient") {
    rng::Stream rs(6);
    auto m = nets::EnergyModel::create(2, rs);
    Tensor bad = Tensor::leaf(rs.normal_matrix(4, 2));
    CHECK_THROWS_AS(
        (void)ebm::cd_loss(m, Tensor::constant(rs.normal_matrix(4, 2)), bad, 1.0),
        std::invalid_argument);
}

TEST_CASE("one-parameter model gradient: analytic and finite difference") {
    // E_theta(x) = theta * x on 1-D batches.
    rng::Stream rs(7);
    const Matrix xp = rs.normal_matrix(32, 1);
    const Matrix xn = rs.normal_matrix(32, 1) * 2.0;
    const double reg = 0.3;
    const double theta0 = 0.8;

    Tensor theta = Tensor::leaf(Matrix::Constant(1, 1, theta0));
    ebm::EnergyFn efn = [&theta](const Tensor& x) { return ad::mul(x, theta); };
    Tensor loss = ebm::cd_loss(efn, Tensor::constant(xp), Tensor::constant(xn), reg);
    auto gm = ad::backward(loss);
    const double g = ad::gradient(gm, theta)(0, 0);

    const double analytic =
        xp.mean() - xn.mean() +
        2.0 * reg * theta0 *
            (xp.array().square().mean() + xn.array().square().mean());
    CHECK(rel_err(g, analytic) <= 1e-12);

    auto loss_at = [&](double th) {
        Tensor t = Tensor::constant(Matrix::Constant(1, 1, th));
        ebm::EnergyFn f = [&t](const Tensor& x) { return ad::mul(x, t); };
        return ebm::cd_loss(f, Tensor::constant(xp), Tensor::constant(xn), reg)
            .scalar_value();
    };
    const double h = 1e-6;
    const double fd = (loss_at(theta0 + h) - loss_at(theta0 - h)) / (2 * h);
    CHECK(rel_err(g, fd) <= 1e-8);
}

TEST_CASE("replay buffer ring semantics") {
    ebm::ReplayBuffer buf(5);
    CHECK(buf.size() == 0);
    Matrix a(3, 2);
    a << 1, 1, 2, 2, 3, 3;
    buf.append(a);
    CHECK(buf.size() == 3);  // occupancy grows ...
    buf.append(a);
    CHECK(buf.size() == 5);  // ... and saturates at capacity
    buf.append(a);
    CHECK(buf.size() == 5);

    rng::Stream rs(8);
    for (int i = 0; i < 10; ++i) CHECK(buf.draw(rs).size() == 2);
}

TEST_CASE("zero training steps returns the initialized model unchanged") {
    const auto d = density::semicircle_ucg(20, 8.0);
    rng::Stream rs(9);
    const Matrix data = density::sample(d, 200, rs);

    ebm::EbmTrainConfig cfg;
    cfg.steps = 0;
    cfg.seed = 42;
    auto res = ebm::train_ebm(data, cfg, ebm::LangevinConfig{});
    CHECK_FALSE(res.diverged);
    CHECK(res.log.empty());

    rng::Stream init(rng::derive(42, "ebm/init", 0));
    auto fresh = nets::EnergyModel::create(2, init);
    auto a = res.model.named_parameters();
    auto b = fresh.named_parameters();
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(a[i].second.value() == b[i].second.value());
}

TEST_CASE("short training run is reproducible and logged") {
    const auto d = density::semicircle_ucg(20, 8.0);
    rng::Stream rs(10);
    const Matrix data = density::sample(d, 500, rs);

    ebm::EbmTrainConfig cfg;
    cfg.steps = 40;
    cfg.batch = 16;
    cfg.seed = 7;
    ebm::LangevinConfig lcfg;
    lcfg.steps = 25;

    auto r1 = ebm::train_ebm(data, cfg, lcfg, "ebm_test.ckpt", "ebm_test_log.csv");
    auto r2 = ebm::train_ebm(data, cfg, lcfg);
    CHECK_FALSE(r1.diverged);
    REQUIRE(r1.log.size() == 40);

    auto a = r1.model.named_parameters();
    auto b = r2.model.named_parameters();
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(a[i].second.value() == b[i].second.value());

    const auto csv = io::read_csv("ebm_test_log.csv");
    CHECK(csv.columns ==
          std::vector<std::string>{"step", "cd_loss", "reg_loss", "mean_E_pos",
                                   "mean_E_neg"});
    CHECK(csv.rows.size() == 40);

    auto loaded = ckpt::load_energy_model("ebm_test.ckpt");
    auto c = loaded.named_parameters();
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(a[i].second.value() == c[i].second.value());

    std::remove("ebm_test.ckpt");
    std::remove("ebm_test_log.csv");
}

TEST_CASE("divergence detector aborts and restores last-good parameters") {
    const auto d = density::semicircle_ucg(10, 8.0);
    rng::Stream rs(11);
    const Matrix data = density::sample(d, 200, rs);

    ebm::EbmTrainConfig cfg;
    cfg.steps = 200;
    cfg.batch = 8;
    cfg.seed = 3;
    cfg.lr = 50.0;               // deliberately unstable
    cfg.divergence_bound = 10.0; // trips long before 200 steps
    ebm::LangevinConfig lcfg;
    lcfg.steps = 5;

    auto res = ebm::train_ebm(data, cfg, lcfg);
    CHECK(res.diverged);
    CHECK(res.aborted_at_step >= 0);
    CHECK(res.aborted_at_step < 200);
    CHECK_FALSE(res.abort_reason.empty());
    // restored parameters are finite and produce in-bound energies
    const Eigen::VectorXd e = res.model.energies(data.topRows(50));
    CHECK(e.allFinite());
}
