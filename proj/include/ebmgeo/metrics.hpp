// The metric zoo: conformal energy/density metrics (learned and oracle),
// the diagonal LAND metric, the RBF surrogate, and the affine calibration
// that pins every field to the same [g_min, g_max] scale.
//
// A MetricField wraps a raw scalar field h(x) together with the affine
// calibration (alpha, beta) and the algebraic form in which h enters the
// metric:
//
//   direct   : lambda(x) = max(alpha*h(x) + beta, floor)
//   inverse  : lambda(x) = 1 / max(alpha*h(x) + beta, floor)
//
// Conformal fields produce one lambda per point (G = lambda*I); diagonal
// fields (LAND) produce D entries.  Evaluation is pure and thread-safe;
// clamp events are counted on a shared atomic so eval reports can surface
// how often a calibrated field went nonpositive pre-clamp.
#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>

#include <json.hpp>

#include "ebmgeo/densities.hpp"
#include "ebmgeo/nets.hpp"
#include "ebmgeo/ops.hpp"
#include "ebmgeo/rng.hpp"
#include "ebmgeo/tensor.hpp"

namespace ebmgeo::metric {

enum class Kind { Conformal, Diagonal };
enum class Form { Direct, Inverse };

std::string kind_name(Kind k);
std::string form_name(Form f);

struct MetricField {
    Kind kind = Kind::Conformal;
    Form form = Form::Direct;
    double alpha = 1.0;
    double beta = 0.0;
    // Lower bound on the pre-clamp value alpha*h + beta: a lambda floor for
    // direct forms, the pre-inverse epsilon for inverse forms.  calibrate()
    // installs g_min (direct) or 1e-6 (inverse); exact-density oracles are
    // built with floor = 0, i.e. no clamping until calibrated.
    double floor = 1e-6;
    std::string provenance;

    // Raw field on the tape: [N, D] -> [N, 1] (conformal) or [N, D]
    // (diagonal).  Differentiable w.r.t. x wherever h is.
    std::function<ad::Tensor(const ad::Tensor&)> h_op;

    // Metric entries on the tape (for geodesic objectives).  Clamps are
    // applied via clamp_min but not counted on this path.
    ad::Tensor op(const ad::Tensor& x) const;

    // Plain evaluation; counts clamp events.  Rows of X are query points.
    ad::Matrix eval_batch(const ad::Matrix& X) const;
    Eigen::VectorXd eval(const Eigen::VectorXd& x) const;

    // Raw h without calibration or clamping.
    ad::Matrix h_raw(const ad::Matrix& X) const;

    long long clamp_count() const { return clamps_->load(); }
    void reset_clamp_count() const { clamps_->store(0); }

  private:
    std::shared_ptr<std::atomic<long long>> clamps_ =
        std::make_shared<std::atomic<long long>>(0);
};

// Endpoint/midpoint sets shared by every metric on a dataset.
struct CalibrationSets {
    ad::Matrix on_manifold;  // S_M: sampled pair endpoints
    ad::Matrix midpoints;    // S_Mbar: t = 1/2 points of the same pairs
    double g_min = 1.0;
    double g_max = 1000.0;
};

// Draws n_pairs random data pairs at least min_separation apart (endpoint
// duplicates allowed), midpoints at t = 1/2.  Errors when the separation
// filter rejects essentially every pair.
CalibrationSets build_calibration_sets(const ad::Matrix& data, int n_pairs,
                                       double min_separation, rng::Stream& rs);

// The affine solves on set means; pure arithmetic.
//   direct : alpha = (g_max - g_min)/(h_mbar - h_m), beta = g_min - alpha*h_m
//   inverse: alpha = (1/g_max - 1/g_min)/(h_mbar - h_m), beta = 1/g_min - alpha*h_m
// Degenerate (equal) means raise ConfigError.
std::pair<double, double> calibrate_values(double h_m, double h_mbar, Form form,
                                           double g_min, double g_max);

// Recomputes (alpha, beta) for m from raw-h means over the sets (diagonal
// fields average over coordinates too).  Idempotent: rerunning with the
// same sets reproduces the same constants.
void calibrate(MetricField& m, const CalibrationSets& sets);

// The calibrated mean in the sense of the affine construction: the form
// applied to alpha*mean_S h + beta.  After calibrate(), this equals g_min
// on S_M and g_max on S_Mbar up to roundoff.
double calibrated_set_mean(const MetricField& m, const ad::Matrix& pts);

// G = I as a MetricField (alpha = 0, beta = 1).
MetricField euclidean_metric();

// Exact-density references: G_E_M (direct, h = -log p) and G_1/p_M
// (inverse, h = p), uncalibrated (alpha = 1, beta = 0).
std::pair<MetricField, MetricField> oracle_metrics(const density::MixtureDensity& d);

// Learned-energy fields: G_Etheta (direct, h = E_theta) and G_1/ptheta
// (inverse, h = exp(-E_theta)).  The model's parameter tensors are shared,
// not copied.
std::pair<MetricField, MetricField> ebm_metrics(const nets::EnergyModel& model);

// LAND keeps the full reference set.
struct LandModel {
    ad::Matrix refs;  // [M, D]
    double sigma = 1.0;
};

// h^(j)(x) = sum_i (x_i^(j) - x^(j))^2 exp(-|x - x_i|^2 / (2 sigma^2)),
// evaluated directly (the tape route in land_metric is checked against
// this one).
Eigen::VectorXd land_h(const LandModel& m, const Eigen::VectorXd& x);

// Diagonal inverse field over land_h.
MetricField land_metric(const LandModel& m);

struct RbfModel {
    ad::Matrix centroids;      // [K, D]
    Eigen::VectorXd bandwidths;  // [K], lambda_k > 0
    Eigen::VectorXd weights;     // [K]
    double kappa = 1.0;
};

// K-means (k-means++ seeding, Lloyd, empty clusters reseeded from data)
// followed by per-centroid bandwidths from the mean inter-centroid
// distance, lambda_k = 1/2 * (kappa/(2K) * sum_k' |c_k' - c_k|)^(-2),
// and a least-squares fit of the weights to h ~= 1 on the data.
RbfModel fit_rbf(const ad::Matrix& data, int K, double kappa, std::uint64_t seed);

// h(x) = sum_k w_k exp(-1/2 lambda_k |x - c_k|^2), direct evaluation.
double rbf_h(const RbfModel& m, const Eigen::VectorXd& x);

// Conformal inverse field over the RBF surrogate.
MetricField rbf_metric(const RbfModel& m);

// Descriptors for manifests/reports: kind, form, constants, provenance.
nlohmann::json metric_descriptor(const MetricField& m);

nlohmann::json rbf_to_json(const RbfModel& m);
RbfModel rbf_from_json(const nlohmann::json& j);

}  // namespace ebmgeo::metric
