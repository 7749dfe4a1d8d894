#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ebmgeo/metrics.hpp"

#include "ebmgeo/common.hpp"
#include "ebmgeo/densities.hpp"
#include "ebmgeo/nets.hpp"
#include "test_util.hpp"

using namespace ebmgeo;
using ad::Matrix;
using ad::Tensor;

namespace {

// Synthetic conformal field whose raw h is constant.
metric::MetricField constant_h_field(double value, metric::Form form) {
    metric::MetricField m;
    m.kind = metric::Kind::Conformal;
    m.form = form;
    m.provenance = "test/const";
    m.h_op = [value](const Tensor& x) {
        return ad::add(ad::mul(ad::sqnorm(x), Tensor::scalar(0.0)),
                       Tensor::scalar(value));
    };
    return m;
}

// Energy model with zeroed heads: E(x) == 0 everywhere.
nets::EnergyModel zero_energy_model() {
    rng::Stream rs = rng::derive(7, "test/zero-model");
    nets::EnergyModel model = nets::EnergyModel::create(2, rs);
    model.f1.W.mutable_value().setZero();
    model.f1.b.mutable_value().setZero();
    model.f3.W.mutable_value().setZero();
    model.f3.b.mutable_value().setZero();
    return model;
}

Matrix chunked_eval(const metric::MetricField& m, const Matrix& X,
                    Eigen::Index chunk = 4096) {
    Matrix out;
    for (Eigen::Index start = 0; start < X.rows(); start += chunk) {
        const Eigen::Index count = std::min(chunk, X.rows() - start);
        Matrix part = m.eval_batch(X.middleRows(start, count));
        if (out.size() == 0) out.resize(X.rows(), part.cols());
        out.middleRows(start, count) = part;
    }
    return out;
}

Matrix box_points(const Matrix& data, Eigen::Index n, rng::Stream& rs) {
    Eigen::RowVector2d lo = data.colwise().minCoeff();
    Eigen::RowVector2d hi = data.colwise().maxCoeff();
    const Eigen::RowVector2d pad = 0.2 * (hi - lo);
    lo -= pad;
    hi += pad;
    Matrix pts(n, 2);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < 2; ++j)
            pts(i, j) = rs.uniform(lo[j], hi[j]);
    return pts;
}

}  // namespace

TEST_CASE("calibration arithmetic hits the worked constants") {
    // Direct form: means 2 and 10 with targets [1, 1000].
    auto [ad_, bd] = metric::calibrate_values(2.0, 10.0, metric::Form::Direct, 1.0, 1000.0);
    CHECK(ad_ == doctest::Approx(124.875).epsilon(1e-15));
    CHECK(bd == doctest::Approx(-248.75).epsilon(1e-15));

    // Inverse form: means 10 and 0 (field vanished off-manifold).
    auto [ai, bi] = metric::calibrate_values(10.0, 0.0, metric::Form::Inverse, 1.0, 1000.0);
    CHECK(ai == doctest::Approx(0.0999).epsilon(1e-12));
    CHECK(std::abs((bi) - (0.001)) <= 1e-15);

    CHECK_THROWS_AS(
        metric::calibrate_values(3.0, 3.0, metric::Form::Direct, 1.0, 1000.0),
        ConfigError);
    CHECK_THROWS_AS(
        metric::calibrate_values(1.0, 2.0, metric::Form::Direct, 0.0, 1000.0),
        ConfigError);
    CHECK_THROWS_AS(
        metric::calibrate_values(1.0, 2.0, metric::Form::Direct, 2.0, 1.0),
        ConfigError);
}

TEST_CASE("eval_metric substitution examples") {
    Eigen::VectorXd x(2);
    x << 0.3, -0.7;

    metric::MetricField direct = constant_h_field(5.0, metric::Form::Direct);
    CHECK(direct.eval(x)[0] == doctest::Approx(5.0).epsilon(1e-15));

    // E_theta == 0 model, inverse form with alpha = beta = 1:
    // lambda = (1*exp(-0) + 1)^(-1) = 0.5.
    nets::EnergyModel model = zero_energy_model();
    auto [g_e, g_inv] = metric::ebm_metrics(model);
    g_inv.alpha = 1.0;
    g_inv.beta = 1.0;
    CHECK(g_inv.eval(x)[0] == doctest::Approx(0.5).epsilon(1e-12));

    // Direct EBM field floors the zero energy at its clamp level.
    CHECK(g_e.eval_batch(x.transpose())(0, 0) == 1e-6);
}

TEST_CASE("direct-form clamp floors and counts") {
    metric::MetricField m = constant_h_field(-3.0, metric::Form::Direct);
    m.floor = 1e-6;
    Matrix X = Matrix::Zero(4, 2);
    Matrix lam = m.eval_batch(X);
    CHECK(lam.minCoeff() == 1e-6);
    CHECK(m.clamp_count() == 4);
    m.reset_clamp_count();
    CHECK(m.clamp_count() == 0);
}

TEST_CASE("inverse-form pre-inverse clamp caps the metric") {
    metric::MetricField m = constant_h_field(0.0, metric::Form::Inverse);
    m.alpha = 1.0;
    m.beta = -2.0;  // pre-inverse value is negative everywhere
    m.floor = 1e-6;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
    CHECK(m.eval(x)[0] == doctest::Approx(1e6).epsilon(1e-12));
    CHECK(m.clamp_count() == 1);
}

TEST_CASE("tape metric agrees with plain evaluation, including clamps") {
    density::MixtureDensity d = density::semicircle_ucg();
    auto [g_e, g_inv] = metric::oracle_metrics(d);
    rng::Stream rs = rng::derive(11, "test/metric-tape");
    Matrix data = density::sample(d, 600, rs);
    metric::CalibrationSets sets =
        metric::build_calibration_sets(data, 128, 8.0, rs);
    metric::calibrate(g_inv, sets);

    Matrix X(5, 2);
    X << 0.0, 8.0, 0.0, 0.0, 5.0, 5.0, -10.0, 2.0, 3.0, -2.0;
    Matrix plain = g_inv.eval_batch(X);
    Matrix taped = g_inv.op(Tensor::constant(X)).value();
    CHECK(testutil::rel_err(plain, taped) <= 1e-12);

    // Gradients flow through the tape route where the field is smooth.
    Matrix x0(1, 2);
    x0 << 0.5, 7.5;
    Tensor x = Tensor::leaf(x0);
    Tensor lam = g_inv.op(x);
    ad::GradMap gm = ad::backward(ad::sum(lam));
    Matrix got = ad::gradient(gm, x);
    Matrix fd = testutil::numeric_grad(
        [&](const Matrix& pt) {
            return g_inv.eval_batch(pt).sum();
        },
        x0, 1e-6);
    CHECK(testutil::rel_err(got, fd) <= 1e-5);
}

TEST_CASE("LAND hand values") {
    metric::LandModel lone;
    lone.refs = Matrix(1, 2);
    lone.refs << 1.0, 0.0;
    lone.sigma = 1.0;

    Eigen::VectorXd q = Eigen::VectorXd::Zero(2);
    Eigen::VectorXd h = metric::land_h(lone, q);
    CHECK(h[0] == doctest::Approx(std::exp(-0.5)).epsilon(1e-14));
    CHECK(std::abs((h[1]) - (0.0)) <= 1e-300);

    // Query sitting exactly on the lone reference point.
    Eigen::VectorXd at_ref(2);
    at_ref << 1.0, 0.0;
    CHECK(metric::land_h(lone, at_ref).isZero(0.0));

    metric::LandModel pair;
    pair.refs = Matrix(2, 2);
    pair.refs << 1.0, 0.0, -1.0, 0.0;
    pair.sigma = 1.0;
    Eigen::VectorXd h2 = metric::land_h(pair, q);
    CHECK(h2[0] == doctest::Approx(2.0 * std::exp(-0.5)).epsilon(1e-14));
    CHECK(std::abs((h2[1]) - (0.0)) <= 1e-300);
}

TEST_CASE("LAND is invariant to permuting the reference set") {
    rng::Stream rs = rng::derive(3, "test/land-perm");
    metric::LandModel m;
    m.refs = rs.normal_matrix(40, 2);
    m.sigma = 0.7;
    metric::LandModel rev;
    rev.refs = m.refs.colwise().reverse();
    rev.sigma = m.sigma;
    for (int t = 0; t < 10; ++t) {
        Eigen::VectorXd x = rs.normal_matrix(2, 1);
        CHECK(testutil::rel_err(Matrix(metric::land_h(m, x)),
                                Matrix(metric::land_h(rev, x))) <= 1e-13);
    }
}

TEST_CASE("LAND tape route matches the direct loop") {
    rng::Stream rs = rng::derive(4, "test/land-tape");
    metric::LandModel m;
    m.refs = 3.0 * rs.normal_matrix(60, 2);
    m.sigma = 1.3;
    metric::MetricField field = metric::land_metric(m);
    CHECK(field.kind == metric::Kind::Diagonal);

    Matrix X = 4.0 * rs.normal_matrix(25, 2);
    Matrix taped = field.h_raw(X);
    REQUIRE(taped.rows() == 25);
    REQUIRE(taped.cols() == 2);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        Eigen::VectorXd direct = metric::land_h(m, X.row(i).transpose());
        CHECK(testutil::rel_err(Matrix(direct.transpose()),
                                Matrix(taped.row(i))) <= 1e-12);
    }
}

TEST_CASE("RBF basics: center value, fit fixed point, decay at infinity") {
    metric::RbfModel unit;
    unit.centroids = Matrix::Zero(1, 2);
    unit.bandwidths = Eigen::VectorXd::Ones(1);
    unit.weights = Eigen::VectorXd::Ones(1);
    CHECK(metric::rbf_h(unit, Eigen::VectorXd::Zero(2)) == doctest::Approx(1.0).epsilon(1e-15));

    // K = 1 on symmetric data: the centroid is the data mean.
    rng::Stream rs = rng::derive(5, "test/rbf-sym");
    Matrix half = rs.normal_matrix(50, 2);
    Matrix data(100, 2);
    data.topRows(50) = half;
    data.bottomRows(50) = -half;
    metric::RbfModel k1 = metric::fit_rbf(data, 1, 1.0, 99);
    CHECK((k1.centroids.row(0).transpose() -
           data.colwise().mean().transpose())
              .norm() <= 1e-12);
    CHECK(k1.bandwidths[0] > 0.0);

    // h underflows to zero far away, so a beta > 0 calibrated inverse
    // metric plateaus at 1/beta.
    metric::MetricField field = metric::rbf_metric(k1);
    Eigen::VectorXd far(2);
    far << 1e6, 0.0;
    CHECK(std::abs(metric::rbf_h(k1, far)) <= 1e-300);
    field.alpha = 2.0;
    field.beta = 0.25;
    CHECK(field.eval(far)[0] == doctest::Approx(4.0).epsilon(1e-12));

    CHECK_THROWS_AS(metric::fit_rbf(data, 0, 1.0, 1), ConfigError);
    CHECK_THROWS_AS(metric::fit_rbf(data, 101, 1.0, 1), ConfigError);
    CHECK_THROWS_AS(metric::fit_rbf(data, 5, 0.0, 1), ConfigError);
}

TEST_CASE("RBF tape route matches the direct sum") {
    density::MixtureDensity d = density::semicircle_ucg();
    rng::Stream rs = rng::derive(6, "test/rbf-tape");
    Matrix data = density::sample(d, 800, rs);
    metric::RbfModel m = metric::fit_rbf(data, 12, 1.0, 2024);
    metric::MetricField field = metric::rbf_metric(m);

    Matrix X = box_points(data, 40, rs);
    Matrix taped = field.h_raw(X);
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        CHECK(testutil::rel_err(taped(i, 0),
                                metric::rbf_h(m, X.row(i).transpose())) <= 1e-12);
}

TEST_CASE("RBF fit on the uniform semicircle keeps h near one on data") {
    density::MixtureDensity d = density::semicircle_ucg();
    rng::Stream rs = rng::derive(8, "test/rbf-ucg");
    Matrix data = density::sample(d, 4000, rs);
    metric::RbfModel m = metric::fit_rbf(data, 30, 1.0, 515);

    double resid = 0.0;
    for (Eigen::Index i = 0; i < data.rows(); ++i)
        resid += std::abs(metric::rbf_h(m, data.row(i).transpose()) - 1.0);
    resid /= static_cast<double>(data.rows());
    CHECK(resid <= 0.15);

    // Determinism and JSON round trip.
    metric::RbfModel again = metric::fit_rbf(data, 30, 1.0, 515);
    CHECK(again.centroids == m.centroids);
    CHECK(again.weights == m.weights);
    metric::RbfModel loaded = metric::rbf_from_json(metric::rbf_to_json(m));
    CHECK(loaded.centroids == m.centroids);
    CHECK(loaded.bandwidths == m.bandwidths);
    CHECK(loaded.weights == m.weights);
    CHECK(loaded.kappa == m.kappa);
}

TEST_CASE("calibration set builder respects the separation filter") {
    density::MixtureDensity d = density::semicircle_ucg();
    rng::Stream rs = rng::derive(9, "test/calib-sets");
    Matrix data = density::sample(d, 1500, rs);
    metric::CalibrationSets sets =
        metric::build_calibration_sets(data, 200, 8.0, rs);
    REQUIRE(sets.on_manifold.rows() == 400);
    REQUIRE(sets.midpoints.rows() == 200);
    for (int p = 0; p < 200; ++p) {
        const Eigen::RowVector2d a = sets.on_manifold.row(2 * p);
        const Eigen::RowVector2d b = sets.on_manifold.row(2 * p + 1);
        CHECK((a - b).norm() >= 8.0);
        CHECK((0.5 * (a + b) - sets.midpoints.row(p)).norm() <= 1e-15);
    }

    rng::Stream rs2 = rng::derive(9, "test/calib-sets-2");
    CHECK_THROWS_AS(metric::build_calibration_sets(data, 10, 1e6, rs2),
                    ConfigError);
}

TEST_CASE("calibration lands the set means on the targets") {
    density::MixtureDensity d = density::semicircle_ucg();
    rng::Stream rs = rng::derive(10, "test/calib-exact");
    Matrix data = density::sample(d, 2000, rs);
    metric::CalibrationSets sets =
        metric::build_calibration_sets(data, 256, 8.0, rs);

    auto [g_e, g_inv] = metric::oracle_metrics(d);
    metric::LandModel land{data.topRows(1200), 1.0};
    metric::MetricField g_land = metric::land_metric(land);
    metric::RbfModel rbf = metric::fit_rbf(data, 30, 1.0, 77);
    metric::MetricField g_rbf = metric::rbf_metric(rbf);

    std::vector<metric::MetricField> fields = {g_e, g_inv, g_land, g_rbf};
    for (auto& f : fields) {
        metric::calibrate(f, sets);
        const double on = metric::calibrated_set_mean(f, sets.on_manifold);
        const double off = metric::calibrated_set_mean(f, sets.midpoints);
        INFO(f.provenance);
        CHECK(std::abs(on - sets.g_min) <= 1e-9 * sets.g_min);
        CHECK(std::abs(off - sets.g_max) <= 1e-9 * sets.g_max);

        // Recalibration with the same sets is idempotent.
        const double a0 = f.alpha, b0 = f.beta;
        metric::calibrate(f, sets);
        CHECK(f.alpha == a0);
        CHECK(f.beta == b0);
    }

    // A constant raw field cannot be calibrated.
    metric::MetricField flat = constant_h_field(1.0, metric::Form::Direct);
    CHECK_THROWS_AS(metric::calibrate(flat, sets), ConfigError);
}

TEST_CASE("oracle fields: symmetry and monotonicity") {
    // One Gaussian: equal lambda at equal radius.
    density::MixtureDensity g = density::MixtureDensity::single(Eigen::VectorXd::Zero(2));
    auto [g_e, g_inv] = metric::oracle_metrics(g);
    Matrix ring(4, 2);
    const double r = 3.0;
    ring << r, 0.0, -r, 0.0, 0.0, r, 0.0, -r;
    Matrix le = g_e.eval_batch(ring);
    Matrix li = g_inv.eval_batch(ring);
    CHECK((le.array() - le(0, 0)).abs().maxCoeff() <= 1e-12 * std::abs(le(0, 0)));
    CHECK((li.array() - li(0, 0)).abs().maxCoeff() <= 1e-12 * std::abs(li(0, 0)));

    // -log p grows along a ray leaving the semicircle ridge.
    density::MixtureDensity d = density::semicircle_ucg();
    auto [ge2, gi2] = metric::oracle_metrics(d);
    double prev = -1.0;
    for (int t = 0; t <= 5; ++t) {
        Eigen::VectorXd x(2);
        x << 0.0, 8.0 + 1.5 * t;
        const double lam = ge2.eval(x)[0];
        CHECK(lam > prev);
        prev = lam;
    }
}

TEST_CASE("positivity over the inflated data box") {
    density::MixtureDensity d = density::semicircle_ucg();
    rng::Stream rs = rng::derive(12, "test/positivity");
    Matrix data = density::sample(d, 4000, rs);
    Matrix pts = box_points(data, 100000, rs);

    metric::CalibrationSets sets =
        metric::build_calibration_sets(data, 256, 8.0, rs);

    // Canonical exact-density oracles: strictly positive with zero clamps.
    auto [g_e, g_inv] = metric::oracle_metrics(d);
    CHECK(chunked_eval(g_e, pts).minCoeff() > 0.0);
    CHECK(chunked_eval(g_inv, pts).minCoeff() > 0.0);
    CHECK(g_e.clamp_count() == 0);
    CHECK(g_inv.clamp_count() == 0);

    // Calibrated fields stay positive through the counted clamps.
    metric::LandModel land{data.topRows(1500), 1.0};
    metric::RbfModel rbf = metric::fit_rbf(data, 30, 1.0, 77);
    nets::EnergyModel model = zero_energy_model();
    auto [g_et, g_ipt] = metric::ebm_metrics(model);
    std::vector<metric::MetricField> calibrated = {
        g_e, g_inv, metric::land_metric(land), metric::rbf_metric(rbf)};
    for (auto& f : calibrated) {
        metric::calibrate(f, sets);
        f.reset_clamp_count();
        Matrix lam = chunked_eval(f, pts);
        INFO(f.provenance, " clamp count ", f.clamp_count(), " / ", lam.size());
        CHECK(lam.minCoeff() > 0.0);
        CHECK(lam.allFinite());
    }

    // Learned-energy fields (untrained here) rely on the same clamps.
    for (auto& f : {g_et, g_ipt}) {
        Matrix lam = chunked_eval(f, pts.topRows(20000));
        CHECK(lam.minCoeff() > 0.0);
        CHECK(lam.allFinite());
    }

    // Conformal fields return one entry per point; LAND returns D and is
    // genuinely anisotropic somewhere.
    metric::MetricField g_land = metric::land_metric(land);
    Matrix diag = g_land.eval_batch(pts.topRows(2000));
    REQUIRE(diag.cols() == 2);
    const double max_ratio =
        (diag.col(0).array() / diag.col(1).array()).maxCoeff();
    CHECK(max_ratio > 1.0 + 1e-6);
    CHECK(chunked_eval(g_e, pts.topRows(10)).cols() == 1);
}

TEST_CASE("euclidean field is identically one") {
    metric::MetricField eye = metric::euclidean_metric();
    rng::Stream rs = rng::derive(13, "test/eye");
    Matrix X = 10.0 * rs.normal_matrix(50, 2);
    Matrix lam = eye.eval_batch(X);
    CHECK((lam.array() == 1.0).all());
    CHECK(eye.clamp_count() == 0);
}

TEST_CASE("metric descriptors carry the calibration state") {
    metric::MetricField m = constant_h_field(2.0, metric::Form::Inverse);
    m.alpha = 0.5;
    m.beta = 0.125;
    m.provenance = "test/desc";
    nlohmann::json j = metric::metric_descriptor(m);
    CHECK(j.at("kind").get<std::string>() == "conformal");
    CHECK(j.at("form").get<std::string>() == "inverse");
    CHECK(j.at("alpha").get<double>() == 0.5);
    CHECK(j.at("beta").get<double>() == 0.125);
    CHECK(j.at("provenance").get<std::string>() == "test/desc");
}
