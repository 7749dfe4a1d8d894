#include "ebmgeo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "ebmgeo/common.hpp"

namespace ebmgeo::metric {

namespace {

using ad::Matrix;
using ad::Tensor;

// Pre-inverse clamp for calibrated inverse-form fields.
constexpr double kPreInverseEps = 1e-6;

Tensor affine_clamped(const MetricField& m, const Tensor& h) {
    Tensor pre = ad::add(ad::mul(h, Tensor::scalar(m.alpha)),
                         Tensor::scalar(m.beta));
    return ad::clamp_min(pre, m.floor);
}

}  // namespace

std::string kind_name(Kind k) {
    return k == Kind::Conformal ? "conformal" : "diagonal";
}

std::string form_name(Form f) {
    return f == Form::Direct ? "direct" : "inverse";
}

ad::Tensor MetricField::op(const ad::Tensor& x) const {
    Tensor clamped = affine_clamped(*this, h_op(x));
    return form == Form::Direct ? clamped : ad::reciprocal(clamped);
}

ad::Matrix MetricField::eval_batch(const ad::Matrix& X) const {
    Matrix h = h_raw(X);
    Matrix pre = (alpha * h.array() + beta).matrix();
    const long long below = (pre.array() < floor).count();
    if (below > 0) clamps_->fetch_add(below);
    Matrix clamped = pre.array().max(floor).matrix();
    if (form == Form::Direct) return clamped;
    return clamped.array().inverse().matrix();
}

Eigen::VectorXd MetricField::eval(const Eigen::VectorXd& x) const {
    Matrix row = x.transpose();
    return eval_batch(row).row(0).transpose();
}

ad::Matrix MetricField::h_raw(const ad::Matrix& X) const {
    return h_op(Tensor::constant(X)).value();
}

CalibrationSets build_calibration_sets(const ad::Matrix& data, int n_pairs,
                                       double min_separation, rng::Stream& rs) {
    if (data.rows() < 2) throw ConfigError("calibration: need at least two data points");
    if (n_pairs < 1) throw ConfigError("calibration: n_pairs must be positive");
    const Eigen::Index n = data.rows();
    CalibrationSets sets;
    sets.on_manifold.resize(2 * n_pairs, data.cols());
    sets.midpoints.resize(n_pairs, data.cols());
    const long long max_attempts = 1000LL * n_pairs;
    long long attempts = 0;
    for (int p = 0; p < n_pairs;) {
        if (++attempts > max_attempts)
            throw ConfigError(
                "calibration: min_separation rejects nearly every pair; lower "
                "it or provide more spread-out data");
        const Eigen::Index i = static_cast<Eigen::Index>(rs.integer(n));
        const Eigen::Index j = static_cast<Eigen::Index>(rs.integer(n));
        if (i == j) continue;
        if ((data.row(i) - data.row(j)).norm() < min_separation) continue;
        sets.on_manifold.row(2 * p) = data.row(i);
        sets.on_manifold.row(2 * p + 1) = data.row(j);
        sets.midpoints.row(p) = 0.5 * (data.row(i) + data.row(j));
        ++p;
    }
    return sets;
}

std::pair<double, double> calibrate_values(double h_m, double h_mbar, Form form,
                                           double g_min, double g_max) {
    if (!(g_min > 0.0) || !(g_max > g_min))
        throw ConfigError("calibration: need 0 < g_min < g_max");
    const double denom = h_mbar - h_m;
    const double scale = std::max({1.0, std::abs(h_m), std::abs(h_mbar)});
    if (std::abs(denom) <= 1e-12 * scale)
        throw ConfigError(
            "calibration: raw-field means over S_M and the midpoint set are "
            "(numerically) equal; use larger or better-separated calibration "
            "sets");
    double alpha, beta;
    if (form == Form::Direct) {
        alpha = (g_max - g_min) / denom;
        beta = g_min - alpha * h_m;
    } else {
        alpha = (1.0 / g_max - 1.0 / g_min) / denom;
        beta = 1.0 / g_min - alpha * h_m;
    }
    return {alpha, beta};
}

void calibrate(MetricField& m, const CalibrationSets& sets) {
    if (sets.on_manifold.rows() == 0 || sets.midpoints.rows() == 0)
        throw ConfigError("calibration: empty calibration set");
    const double h_m = m.h_raw(sets.on_manifold).mean();
    const double h_mbar = m.h_raw(sets.midpoints).mean();
    auto [alpha, beta] = calibrate_values(h_m, h_mbar, m.form, sets.g_min, sets.g_max);
    m.alpha = alpha;
    m.beta = beta;
    // Calibration can (and on these datasets does) produce beta < 0, so the
    // affine part goes nonpositive somewhere; install the clamp levels.
    // Direct fields floor at g_min so G >= g_min*I holds everywhere; inverse
    // fields clamp the pre-inverse value at epsilon.
    m.floor = m.form == Form::Direct ? sets.g_min : kPreInverseEps;
}

double calibrated_set_mean(const MetricField& m, const ad::Matrix& pts) {
    const double pre = std::max(m.alpha * m.h_raw(pts).mean() + m.beta, m.floor);
    return m.form == Form::Direct ? pre : 1.0 / pre;
}

MetricField euclidean_metric() {
    MetricField m;
    m.kind = Kind::Conformal;
    m.form = Form::Direct;
    m.alpha = 0.0;
    m.beta = 1.0;
    m.provenance = "euclidean";
    m.h_op = [](const Tensor& x) { return ad::sqnorm(x); };
    return m;
}

std::pair<MetricField, MetricField> oracle_metrics(const density::MixtureDensity& d) {
    // Exact densities never need clamping on their own (p > 0 and, for the
    // datasets here, -log p > 0), so the canonical fields disable the floor;
    // calibrate() installs the clamp levels along with alpha/beta.
    MetricField direct;
    direct.kind = Kind::Conformal;
    direct.form = Form::Direct;
    direct.floor = 0.0;
    direct.provenance = "g_E_M";
    direct.h_op = [d](const Tensor& x) {
        return ad::neg(density::log_density_op(d, x));
    };
    MetricField inverse;
    inverse.kind = Kind::Conformal;
    inverse.form = Form::Inverse;
    inverse.floor = 0.0;
    inverse.provenance = "g_1/p_M";
    inverse.h_op = [d](const Tensor& x) {
        return ad::exp(density::log_density_op(d, x));
    };
    return {direct, inverse};
}

std::pair<MetricField, MetricField> ebm_metrics(const nets::EnergyModel& model) {
    MetricField direct;
    direct.kind = Kind::Conformal;
    direct.form = Form::Direct;
    direct.provenance = "g_E_theta";
    direct.h_op = [model](const Tensor& x) { return model.forward(x); };
    MetricField inverse;
    inverse.kind = Kind::Conformal;
    inverse.form = Form::Inverse;
    inverse.provenance = "g_1/p_theta";
    inverse.h_op = [model](const Tensor& x) {
        return ad::exp(ad::neg(model.forward(x)));
    };
    return {direct, inverse};
}

Eigen::VectorXd land_h(const LandModel& m, const Eigen::VectorXd& x) {
    if (m.refs.rows() == 0) throw ConfigError("land_h: empty reference set");
    if (!(m.sigma > 0.0)) throw ConfigError("land_h: sigma must be positive");
    if (m.refs.cols() != x.size())
        throw ShapeError("land_h: query dimension mismatch");
    Eigen::VectorXd h = Eigen::VectorXd::Zero(x.size());
    const double inv2s2 = 1.0 / (2.0 * m.sigma * m.sigma);
    for (Eigen::Index i = 0; i < m.refs.rows(); ++i) {
        const Eigen::VectorXd diff = m.refs.row(i).transpose() - x;
        const double w = std::exp(-diff.squaredNorm() * inv2s2);
        h += (diff.array().square() * w).matrix();
    }
    return h;
}

MetricField land_metric(const LandModel& m) {
    if (m.refs.rows() == 0) throw ConfigError("land_metric: empty reference set");
    if (!(m.sigma > 0.0)) throw ConfigError("land_metric: sigma must be positive");
    MetricField field;
    field.kind = Kind::Diagonal;
    field.form = Form::Inverse;
    field.provenance = "land";
    // h^(j)(x) = [W r^2]_j - 2 x_j [W r]_j + x_j^2 [W 1]_j with the kernel
    // matrix W_ni = exp(-|x_n - r_i|^2 / (2 sigma^2)) split so each factor
    // fits the available broadcast shapes.
    const double phi = 1.0 / (2.0 * m.sigma * m.sigma);
    const Matrix refs = m.refs;
    const Matrix refs_t_scaled = (2.0 * phi) * refs.transpose();
    const Matrix refs_row_sq =
        (-phi * refs.rowwise().squaredNorm()).transpose();
    const Matrix refs_sq = refs.array().square().matrix();
    field.h_op = [=](const Tensor& x) {
        Tensor cross = ad::matmul(x, Tensor::constant(refs_t_scaled));
        Tensor w0 = ad::exp(ad::add(cross, Tensor::constant(refs_row_sq)));
        Tensor s = ad::exp(ad::mul(ad::sqnorm(x), Tensor::scalar(-phi)));
        Tensor w = ad::scale_rows(w0, s);
        Tensor a = ad::matmul(w, Tensor::constant(refs_sq));
        Tensor b = ad::matmul(w, Tensor::constant(refs));
        Tensor c = ad::row_sum(w);
        Tensor quad = ad::scale_rows(ad::square(x), c);
        Tensor lin = ad::mul(Tensor::scalar(2.0), ad::mul(x, b));
        return ad::sub(ad::add(a, quad), lin);
    };
    return field;
}

namespace {

// Lloyd with k-means++ seeding; empty clusters are reseeded from a random
// data point.  Deterministic given the stream.
Matrix kmeans(const Matrix& data, int K, rng::Stream& rs) {
    const Eigen::Index n = data.rows();
    Matrix centroids(K, data.cols());
    // k-means++: first centroid uniform, then proportional to squared
    // distance from the nearest chosen centroid.
    centroids.row(0) = data.row(static_cast<Eigen::Index>(rs.integer(n)));
    Eigen::VectorXd d2 =
        (data.rowwise() - centroids.row(0)).rowwise().squaredNorm();
    for (int k = 1; k < K; ++k) {
        const double total = d2.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            double u = rs.uniform() * total;
            double acc = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2[i];
                if (u <= acc) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<Eigen::Index>(rs.integer(n));
        }
        centroids.row(k) = data.row(pick);
        d2 = d2.cwiseMin(
            (data.rowwise() - centroids.row(k)).rowwise().squaredNorm());
    }

    std::vector<int> assign(n, -1);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double best_d = (data.row(i) - centroids.row(0)).squaredNorm();
            for (int k = 1; k < K; ++k) {
                const double dk = (data.row(i) - centroids.row(k)).squaredNorm();
                if (dk < best_d) {
                    best_d = dk;
                    best = k;
                }
            }
            if (assign[i] != best) {
                assign[i] = best;
                changed = true;
            }
        }
        if (!changed) break;
        Matrix sums = Matrix::Zero(K, data.cols());
        std::vector<Eigen::Index> counts(K, 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(assign[i]) += data.row(i);
            ++counts[assign[i]];
        }
        for (int k = 0; k < K; ++k) {
            if (counts[k] == 0)
                centroids.row(k) =
                    data.row(static_cast<Eigen::Index>(rs.integer(n)));
            else
                centroids.row(k) = sums.row(k) / static_cast<double>(counts[k]);
        }
    }
    return centroids;
}

}  // namespace

RbfModel fit_rbf(const ad::Matrix& data, int K, double kappa, std::uint64_t seed) {
    if (K < 1) throw ConfigError("fit_rbf: K must be >= 1");
    if (data.rows() < K)
        throw ConfigError("fit_rbf: more centroids than data points");
    if (!(kappa > 0.0)) throw ConfigError("fit_rbf: kappa must be positive");

    RbfModel m;
    m.kappa = kappa;
    rng::Stream rs = rng::derive(seed, "rbf/kmeans");
    m.centroids = kmeans(data, K, rs);

    // Bandwidth resolution: one lambda_k per centroid from its mean
    // distance to the other centroids.  With a single centroid the sum is
    // empty; fall back to unit bandwidth.
    m.bandwidths.resize(K);
    for (int k = 0; k < K; ++k) {
        double sum = 0.0;
        for (int k2 = 0; k2 < K; ++k2)
            sum += (m.centroids.row(k2) - m.centroids.row(k)).norm();
        const double s = kappa / (2.0 * K) * sum;
        m.bandwidths[k] = s > 0.0 ? 0.5 / (s * s) : 1.0;
    }

    // Least-squares weights: h(x_i) ~= 1 over the data.
    Matrix phi(data.rows(), K);
    for (Eigen::Index i = 0; i < data.rows(); ++i)
        for (int k = 0; k < K; ++k)
            phi(i, k) = std::exp(
                -0.5 * m.bandwidths[k] *
                (data.row(i) - m.centroids.row(k)).squaredNorm());
    m.weights = phi.colPivHouseholderQr().solve(
        Eigen::VectorXd::Ones(data.rows()));
    return m;
}

double rbf_h(const RbfModel& m, const Eigen::VectorXd& x) {
    double h = 0.0;
    for (Eigen::Index k = 0; k < m.centroids.rows(); ++k)
        h += m.weights[k] *
             std::exp(-0.5 * m.bandwidths[k] *
                      (m.centroids.row(k).transpose() - x).squaredNorm());
    return h;
}

MetricField rbf_metric(const RbfModel& m) {
    if (m.centroids.rows() == 0) throw ConfigError("rbf_metric: empty model");
    if ((m.bandwidths.array() <= 0.0).any())
        throw ConfigError("rbf_metric: bandwidths must be positive");
    MetricField field;
    field.kind = Kind::Conformal;
    field.form = Form::Inverse;
    field.provenance = "rbf";
    // -1/2 lambda_k |x - c_k|^2 = x.(lambda_k c_k) - 1/2 lambda_k |c_k|^2
    //                             - 1/2 lambda_k |x|^2,
    // assembled from two matmuls and a row-constant so the batch stays one
    // tape op per term.
    const Matrix scaled_centroids_t =
        (m.centroids.array().colwise() * m.bandwidths.array())
            .matrix()
            .transpose();
    const Matrix const_row =
        (-0.5 * m.bandwidths.array() *
         m.centroids.rowwise().squaredNorm().array())
            .matrix()
            .transpose();
    const Matrix neg_half_lambda_row = (-0.5 * m.bandwidths.array()).matrix().transpose();
    const Matrix w_col = m.weights;
    field.h_op = [=](const Tensor& x) {
        Tensor p = ad::matmul(x, Tensor::constant(scaled_centroids_t));
        Tensor t = ad::matmul(ad::sqnorm(x), Tensor::constant(neg_half_lambda_row));
        Tensor arg = ad::add(ad::add(p, Tensor::constant(const_row)), t);
        return ad::matmul(ad::exp(arg), Tensor::constant(w_col));
    };
    return field;
}

nlohmann::json metric_descriptor(const MetricField& m) {
    return nlohmann::json{{"provenance", m.provenance},
                          {"kind", kind_name(m.kind)},
                          {"form", form_name(m.form)},
                          {"alpha", m.alpha},
                          {"beta", m.beta},
                          {"floor", m.floor}};
}

nlohmann::json rbf_to_json(const RbfModel& m) {
    nlohmann::json centroids = nlohmann::json::array();
    for (Eigen::Index k = 0; k < m.centroids.rows(); ++k) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.centroids.cols(); ++j)
            row.push_back(m.centroids(k, j));
        centroids.push_back(row);
    }
    return nlohmann::json{
        {"kappa", m.kappa},
        {"centroids", centroids},
        {"bandwidths", std::vector<double>(m.bandwidths.begin(), m.bandwidths.end())},
        {"weights", std::vector<double>(m.weights.begin(), m.weights.end())}};
}

RbfModel rbf_from_json(const nlohmann::json& j) {
    RbfModel m;
    m.kappa = j.at("kappa").get<double>();
    const auto& centroids = j.at("centroids");
    if (centroids.empty()) throw ConfigError("rbf_from_json: no centroids");
    const Eigen::Index K = static_cast<Eigen::Index>(centroids.size());
    const Eigen::Index D = static_cast<Eigen::Index>(centroids.at(0).size());
    m.centroids.resize(K, D);
    for (Eigen::Index k = 0; k < K; ++k)
        for (Eigen::Index d = 0; d < D; ++d)
            m.centroids(k, d) = centroids.at(k).at(d).get<double>();
    const auto bw = j.at("bandwidths").get<std::vector<double>>();
    const auto w = j.at("weights").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(bw.size()) != K ||
        static_cast<Eigen::Index>(w.size()) != K)
        throw ConfigError("rbf_from_json: array length mismatch");
    m.bandwidths = Eigen::Map<const Eigen::VectorXd>(bw.data(), K);
    m.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), K);
    return m;
}

}  // namespace ebmgeo::metric
