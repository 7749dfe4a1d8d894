#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ebmgeo/densities.hpp"
#include "ebmgeo/ops.hpp"
#include "test_util.hpp"

using namespace ebmgeo;
using ad::Matrix;
using ad::Tensor;
using testutil::rel_err;

namespace {

// Independent oracle: direct summation in probability space, no
// log-sum-exp. Only valid where the sum does not underflow.
double brute_force_log_density(const density::MixtureDensity& d,
                               const Eigen::VectorXd& x) {
    const double norm = std::pow(2.0 * M_PI, -0.5 * static_cast<double>(d.dim()));
    double p = 0.0;
    for (Eigen::Index k = 0; k < d.components(); ++k) {
        const double sq = (x.transpose() - d.centers.row(k)).squaredNorm();
        p += d.weights[k] * norm * std::exp(-0.5 * sq);
    }
    return std::log(p);
}

}  // namespace

TEST_CASE("single standard normal at its mean") {
    const auto d = density::MixtureDensity::single(Eigen::Vector2d(0, 0));
    CHECK(density::log_density(d, Eigen::Vector2d(0, 0)) ==
          doctest::Approx(-std::log(2.0 * M_PI)).epsilon(1e-14));
    CHECK(density::log_density(d, Eigen::Vector2d(0, 0)) ==
          doctest::Approx(-1.837877066).epsilon(1e-9));
}

TEST_CASE("log-sum-exp path matches brute-force summation") {
    const auto d = density::semicircle_ucg(200, 8.0);
    rng::Stream rs(21);
    // arc midpoint plus random points in the populated region
    std::vector<Eigen::Vector2d> pts{{0.0, 8.0}, {8.0, 0.0}, {-3.0, 7.0}, {0.0, 0.0}};
    for (int i = 0; i < 50; ++i)
        pts.emplace_back(rs.uniform(-10, 10), rs.uniform(-2, 10));
    for (const auto& x : pts) {
        CHECK(rel_err(density::log_density(d, x), brute_force_log_density(d, x)) <= 1e-12);
    }
}

TEST_CASE("mirror symmetry about the y-axis") {
    const auto ucg = density::semicircle_ucg(200, 8.0);
    const auto wcg = density::semicircle_wcg(200, 8.0);
    rng::Stream rs(22);
    for (int i = 0; i < 200; ++i) {
        const double x = rs.uniform(-12, 12), y = rs.uniform(-12, 12);
        CHECK(std::abs(density::log_density(ucg, Eigen::Vector2d(x, y)) -
                       density::log_density(ucg, Eigen::Vector2d(-x, y))) <= 1e-12);
        CHECK(std::abs(density::log_density(wcg, Eigen::Vector2d(x, y)) -
                       density::log_density(wcg, Eigen::Vector2d(-x, y))) <= 1e-12);
    }
}

TEST_CASE("no -inf for |x| <= 50") {
    const auto d = density::semicircle_ucg(200, 8.0);
    for (const auto& x : {Eigen::Vector2d(50, 50), Eigen::Vector2d(-50, 50),
                          Eigen::Vector2d(0, -50), Eigen::Vector2d(50, 0)}) {
        CHECK(std::isfinite(density::log_density(d, x)));
    }
    CHECK_THROWS_AS(
        (void)density::log_density(d, Eigen::Vector2d(std::nan(""), 0.0)),
        std::invalid_argument);
}

TEST_CASE("score: single Gaussian and symmetry axis") {
    const auto d1 = density::MixtureDensity::single(Eigen::Vector2d(0, 0));
    const Eigen::Vector2d x(1.25, -0.5);
    CHECK((density::score(d1, x) + x).norm() <= 1e-14);

    const auto ucg = density::semicircle_ucg(200, 8.0);
    for (double y : {-4.0, 0.0, 3.0, 8.0, 11.0}) {
        CHECK(std::abs(density::score(ucg, Eigen::Vector2d(0.0, y))[0]) <= 1e-13);
    }
}

TEST_CASE("score matches finite differences at 1000 points") {
    const auto d = density::semicircle_ucg(200, 8.0);
    rng::Stream rs(23);
    const double h = 1e-6;
    for (int i = 0; i < 1000; ++i) {
        const Eigen::Vector2d x(rs.uniform(-12, 12), rs.uniform(-4, 12));
        const Eigen::Vector2d s = density::score(d, x);
        for (int j = 0; j < 2; ++j) {
            Eigen::Vector2d xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            const double fd =
                (density::log_density(d, xp) - density::log_density(d, xm)) / (2 * h);
            CHECK(rel_err(s[j], fd) <= 1e-7);
        }
    }
}

TEST_CASE("grid quadrature integrates to one") {
    const auto d = density::semicircle_ucg(200, 8.0);
    CHECK(std::abs(density::grid_quadrature(d, -14.0, 14.0, 0.02) - 1.0) <= 1e-3);
}

TEST_CASE("sampling moments and determinism") {
    const auto ucg = density::semicircle_ucg(200, 8.0);
    rng::Stream rs(rng::derive(7, "dataset", 0));
    const Matrix pts = density::sample(ucg, 100000, rs);
    const Eigen::RowVectorXd mean = pts.colwise().mean();
    const Eigen::RowVectorXd want = ucg.weights.transpose() * ucg.centers;
    CHECK((mean - want).norm() <= 0.05);

    rng::Stream a(99), b(99);
    const Matrix s1 = density::sample(ucg, 10, a);
    const Matrix s2 = density::sample(ucg, 10, b);
    CHECK(s1 == s2);

    const auto single = density::MixtureDensity::single(Eigen::Vector2d(3, 0));
    rng::Stream c(5);
    const Matrix sp = density::sample(single, 100000, c);
    for (int j = 0; j < 2; ++j) {
        const double m = sp.col(j).mean();
        const double var = (sp.col(j).array() - m).square().mean();
        CHECK(std::abs(var - 1.0) <= 0.05);
    }
}

TEST_CASE("wcg weight profile") {
    for (int K : {7, 200}) {
        const Eigen::VectorXd w = density::wcg_weights(K);
        CHECK(std::abs(w.sum() - 1.0) <= 1e-12);
        for (int k = 0; k < K; ++k) CHECK(w[k] == w[K - 1 - k]);
        Eigen::Index argmax;
        w.maxCoeff(&argmax);
        CHECK(std::abs(static_cast<int>(argmax) - K / 2) <= 1);
    }
    // max/min contrast close to the ~6x the figure-style profile targets
    const Eigen::VectorXd w = density::wcg_weights(200);
    const double ratio = w.maxCoeff() / w.minCoeff();
    CHECK(ratio > 4.0);
    CHECK(ratio < 8.0);
}

TEST_CASE("tape log-density equals the plain evaluator") {
    const auto d = density::semicircle_ucg(200, 8.0);
    rng::Stream rs(24);
    const Matrix X = rs.uniform_matrix(64, 2, -12.0, 12.0);
    const Eigen::VectorXd plain = density::log_density_batch(d, X);
    const Matrix taped = density::log_density_op(d, Tensor::constant(X)).value();
    CHECK(rel_err(Matrix(plain), Matrix(taped.col(0))) <= 1e-12);
    for (Eigen::Index i = 0; i < 8; ++i) {
        CHECK(rel_err(plain[i], density::log_density(d, X.row(i).transpose())) <= 1e-12);
    }
}

TEST_CASE("tape log-density gradient equals the analytic score") {
    const auto d = density::semicircle_wcg(200, 8.0);
    rng::Stream rs(25);
    const Matrix X = rs.uniform_matrix(16, 2, -10.0, 10.0);
    Tensor x = Tensor::leaf(X);
    auto gm = ad::backward(ad::sum(density::log_density_op(d, x)));
    const Matrix g = ad::gradient(gm, x);
    const Matrix want = density::score_batch(d, X);
    CHECK(rel_err(g, want) <= 1e-9);
}

TEST_CASE("dataset spec round trip") {
    CHECK(density::variant_from_name("ucg") == density::Variant::Ucg);
    CHECK(density::variant_from_name("wcg") == density::Variant::Wcg);
    CHECK_THROWS_AS((void)density::variant_from_name("other"), ConfigError);

    density::DatasetSpec spec;
    spec.variant = density::Variant::Wcg;
    const auto d = density::make_density(spec);
    CHECK(d.components() == 200);
    CHECK(d.weights[100] > d.weights[0]);
}
