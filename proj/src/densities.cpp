#include "ebmgeo/densities.hpp"

#include <cmath>
#include <numbers>

#include "ebmgeo/common.hpp"
#include "ebmgeo/ops.hpp"

namespace ebmgeo::density {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)

void require_finite(const Eigen::VectorXd& x, const char* who) {
    if (!x.allFinite())
        throw std::invalid_argument(std::string(who) + ": non-finite input point");
}

// Per-row logits log pi_k - (D/2) log(2pi) - |x - mu_k|^2 / 2 for one x.
Eigen::VectorXd logits_at(const MixtureDensity& d, const Eigen::VectorXd& x) {
    const double norm_const = 0.5 * static_cast<double>(d.dim()) * kLog2Pi;
    Eigen::VectorXd l(d.components());
    for (Eigen::Index k = 0; k < d.components(); ++k) {
        const double sq = (x.transpose() - d.centers.row(k)).squaredNorm();
        l[k] = std::log(d.weights[k]) - norm_const - 0.5 * sq;
    }
    return l;
}

}  // namespace

MixtureDensity MixtureDensity::single(const Eigen::VectorXd& center) {
    MixtureDensity d;
    d.centers = center.transpose();
    d.weights = Eigen::VectorXd::Ones(1);
    return d;
}

void MixtureDensity::validate() const {
    if (centers.rows() == 0) throw ConfigError("mixture has no components");
    if (weights.size() != centers.rows())
        throw ConfigError("mixture has " + std::to_string(centers.rows()) +
                          " centers but " + std::to_string(weights.size()) + " weights");
    if (weights.minCoeff() < 0.0) throw ConfigError("mixture weights must be nonnegative");
    if (std::abs(weights.sum() - 1.0) > 1e-12)
        throw ConfigError("mixture weights sum to " + std::to_string(weights.sum()) +
                          ", expected 1");
}

std::string DatasetSpec::variant_name() const {
    switch (variant) {
        case Variant::Ucg: return "ucg";
        case Variant::Wcg: return "wcg";
        default: return "custom";
    }
}

Variant variant_from_name(const std::string& name) {
    if (name == "ucg") return Variant::Ucg;
    if (name == "wcg") return Variant::Wcg;
    if (name == "custom") return Variant::Custom;
    throw ConfigError("unknown dataset variant '" + name + "' (want ucg|wcg|custom)");
}

namespace {

ad::Matrix semicircle_centers(int K, double R) {
    if (K < 1) throw ConfigError("semicircle needs K >= 1");
    ad::Matrix c(K, 2);
    if (K == 1) {
        c << R, 0.0;
        return c;
    }
    for (int k = 0; k < K; ++k) {
        const double t = std::numbers::pi * static_cast<double>(k) /
                         static_cast<double>(K - 1);
        c(k, 0) = R * std::cos(t);
        c(k, 1) = R * std::sin(t);
    }
    // Pin the mirror pairs to exact reflections so the layout's y-axis
    // symmetry holds to the last bit.
    for (int k = 0; k < K / 2; ++k) {
        c(K - 1 - k, 0) = -c(k, 0);
        c(K - 1 - k, 1) = c(k, 1);
    }
    if (K % 2 == 1) c(K / 2, 0) = 0.0;
    return c;
}

}  // namespace

MixtureDensity semicircle_ucg(int K, double R) {
    MixtureDensity d;
    d.centers = semicircle_centers(K, R);
    d.weights = Eigen::VectorXd::Constant(K, 1.0 / static_cast<double>(K));
    d.validate();
    return d;
}

Eigen::VectorXd wcg_weights(int K, double s) {
    if (K < 1) throw ConfigError("wcg_weights needs K >= 1");
    Eigen::VectorXd w(K);
    const double half = std::numbers::pi / 2.0;
    for (int k = 0; k <= (K - 1) / 2; ++k) {
        const double t = (K == 1) ? half
                                  : std::numbers::pi * static_cast<double>(k) /
                                        static_cast<double>(K - 1);
        const double dev = t - half;
        w[k] = std::exp(-dev * dev / (2.0 * s * s));
        w[K - 1 - k] = w[k];  // exact index symmetry by construction
    }
    w /= w.sum();
    return w;
}

MixtureDensity semicircle_wcg(int K, double R, double s) {
    MixtureDensity d;
    d.centers = semicircle_centers(K, R);
    d.weights = wcg_weights(K, s);
    d.validate();
    return d;
}

MixtureDensity make_density(const DatasetSpec& spec) {
    switch (spec.variant) {
        case Variant::Ucg: return semicircle_ucg(spec.K, spec.R);
        case Variant::Wcg: return semicircle_wcg(spec.K, spec.R);
        case Variant::Custom: {
            spec.custom.validate();
            return spec.custom;
        }
    }
    throw ConfigError("unhandled dataset variant");
}

double log_density(const MixtureDensity& d, const Eigen::VectorXd& x) {
    require_finite(x, "log_density");
    const Eigen::VectorXd l = logits_at(d, x);
    const double m = l.maxCoeff();
    return m + std::log((l.array() - m).exp().sum());
}

Eigen::VectorXd score(const MixtureDensity& d, const Eigen::VectorXd& x) {
    require_finite(x, "score");
    const Eigen::VectorXd l = logits_at(d, x);
    const double m = l.maxCoeff();
    Eigen::VectorXd r = (l.array() - m).exp();
    r /= r.sum();  // responsibilities
    Eigen::VectorXd s = Eigen::VectorXd::Zero(d.dim());
    for (Eigen::Index k = 0; k < d.components(); ++k)
        s += r[k] * (d.centers.row(k).transpose() - x);
    return s;
}

namespace {

// Shared constants of the quadratic expansion:
//   log p(x) = -|x|^2/2 + lse_k( x.mu_k + c_k ),
//   c_k = log pi_k - (D/2) log 2pi - |mu_k|^2 / 2
Eigen::RowVectorXd center_offsets(const MixtureDensity& d) {
    const double norm_const = 0.5 * static_cast<double>(d.dim()) * kLog2Pi;
    Eigen::RowVectorXd c(d.components());
    for (Eigen::Index k = 0; k < d.components(); ++k)
        c[k] = std::log(d.weights[k]) - norm_const -
               0.5 * d.centers.row(k).squaredNorm();
    return c;
}

}  // namespace

Eigen::VectorXd log_density_batch(const MixtureDensity& d, const ad::Matrix& X) {
    if (X.cols() != d.dim())
        throw ShapeError("log_density_batch: points are " + shape_str(X.rows(), X.cols()) +
                         ", density is " + std::to_string(d.dim()) + "-dimensional");
    const Eigen::RowVectorXd c = center_offsets(d);
    Eigen::VectorXd out(X.rows());
    const Eigen::Index block = 4096;
    for (Eigen::Index i0 = 0; i0 < X.rows(); i0 += block) {
        const Eigen::Index nb = std::min(block, X.rows() - i0);
        ad::Matrix logits = X.middleRows(i0, nb) * d.centers.transpose();
        logits.rowwise() += c;
        const Eigen::VectorXd m = logits.rowwise().maxCoeff();
        const Eigen::VectorXd lse =
            m.array() +
            (logits.colwise() - m).array().exp().rowwise().sum().log();
        out.segment(i0, nb) =
            lse - 0.5 * X.middleRows(i0, nb).rowwise().squaredNorm();
    }
    return out;
}

ad::Matrix score_batch(const MixtureDensity& d, const ad::Matrix& X) {
    ad::Matrix out(X.rows(), X.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        out.row(i) = score(d, X.row(i).transpose()).transpose();
    return out;
}

ad::Tensor log_density_op(const MixtureDensity& d, const ad::Tensor& x) {
    if (x.cols() != d.dim())
        throw ShapeError("log_density_op: points are " + shape_str(x.rows(), x.cols()) +
                         ", density is " + std::to_string(d.dim()) + "-dimensional");
    const ad::Tensor mu_t = ad::Tensor::constant(d.centers.transpose());
    const ad::Tensor c = ad::Tensor::constant(center_offsets(d));
    ad::Tensor lse = ad::logsumexp_rows(ad::add(ad::matmul(x, mu_t), c));
    return ad::sub(lse, 0.5 * ad::sqnorm(x));
}

ad::Matrix sample(const MixtureDensity& d, Eigen::Index n, rng::Stream& rs) {
    if (n < 1) throw ConfigError("sample: need n >= 1");
    // CDF inversion over components, then a unit-Gaussian offset.
    Eigen::VectorXd cdf(d.components());
    double acc = 0.0;
    for (Eigen::Index k = 0; k < d.components(); ++k) {
        acc += d.weights[k];
        cdf[k] = acc;
    }
    cdf[d.components() - 1] = 1.0;

    ad::Matrix out(n, d.dim());
    for (Eigen::Index i = 0; i < n; ++i) {
        const double u = rs.uniform();
        Eigen::Index k = 0;
        while (k + 1 < d.components() && u > cdf[k]) ++k;
        for (Eigen::Index j = 0; j < d.dim(); ++j)
            out(i, j) = d.centers(k, j) + rs.normal();
    }
    return out;
}

double grid_quadrature(const MixtureDensity& d, double lo, double hi, double step) {
    const auto n = static_cast<Eigen::Index>(std::llround((hi - lo) / step)) + 1;
    ad::Matrix row(n, 2);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double y = lo + static_cast<double>(i) * step;
        for (Eigen::Index j = 0; j < n; ++j) {
            row(j, 0) = lo + static_cast<double>(j) * step;
            row(j, 1) = y;
        }
        total += log_density_batch(d, row).array().exp().sum();
    }
    return total * step * step;
}

}  // namespace ebmgeo::density
