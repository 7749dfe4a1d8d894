// Geodesic machinery: the quadratic-correction path parameterization, the
// discrete kinetic-energy objective, and three solvers that minimize it —
// an amortized neural interpolant, a per-pair waypoint optimizer, and a
// shooting integrator of the conformal geodesic ODE (exact densities
// only).
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ebmgeo/densities.hpp"
#include "ebmgeo/metrics.hpp"
#include "ebmgeo/nets.hpp"
#include "ebmgeo/rng.hpp"
#include "ebmgeo/tensor.hpp"

namespace ebmgeo::geo {

// A discrete path on the uniform grid t_k = k/(T-1); rows 0 and T-1 are
// the endpoints exactly.
struct GeodesicPath {
    ad::Matrix points;  // [T, D]

    Eigen::Index T() const { return points.rows(); }
    Eigen::Index dim() const { return points.cols(); }
    double dt() const { return 1.0 / static_cast<double>(points.rows() - 1); }
    Eigen::RowVectorXd x0() const { return points.row(0); }
    Eigen::RowVectorXd x1() const { return points.row(points.rows() - 1); }

    // Forward differences (x_{t+1} - x_t)/dt, one row per interval.
    ad::Matrix velocities() const;
    double euclidean_length() const;
};

// Metric-dependent summary of a path.
struct PathStats {
    Eigen::VectorXd speeds;    // [T-1] Riemannian speeds at interval starts
    double kinetic = 0.0;      // 1/2 sum v'Gv dt
    double riemannian_length = 0.0;
    double euclidean_length = 0.0;
    double speed_cv = 0.0;     // std/mean of speeds
};

PathStats path_stats(const GeodesicPath& p, const metric::MetricField& m);

// x_t = (1-t) x0 + t x1 + 2t(1-t) phi_t.  The correction factor vanishes
// at the ends, so the boundary conditions hold for any phi.
GeodesicPath assemble_path(const Eigen::RowVectorXd& x0,
                           const Eigen::RowVectorXd& x1,
                           const ad::Matrix& phi);

GeodesicPath straight_line(const Eigen::RowVectorXd& x0,
                           const Eigen::RowVectorXd& x1, Eigen::Index T);

// Mean per-pair kinetic energy of B paths flattened t-major into
// [T*B, D] (row t*B + b is point t of pair b):
//   E_b = 1/2 sum_{t<T-1} v_t' G(x_t) v_t dt,   loss = mean_b E_b.
// Differentiable w.r.t. whatever produced `flat`.
ad::Tensor kinetic_energy_op(const ad::Tensor& flat, Eigen::Index T,
                             Eigen::Index B, const metric::MetricField& m);

double kinetic_energy(const GeodesicPath& p, const metric::MetricField& m);

// Interpolant-generated paths for a batch of endpoint pairs, flattened
// t-major as above; gradient flows to the network parameters.
ad::Tensor interpolant_paths_op(const nets::InterpolantNet& net,
                                const ad::Matrix& x0s, const ad::Matrix& x1s,
                                Eigen::Index T);

GeodesicPath interpolant_path(const nets::InterpolantNet& net,
                              const Eigen::RowVectorXd& x0,
                              const Eigen::RowVectorXd& x1, Eigen::Index T);

std::vector<GeodesicPath> interpolant_paths(const nets::InterpolantNet& net,
                                            const ad::Matrix& x0s,
                                            const ad::Matrix& x1s,
                                            Eigen::Index T);

struct InterpolantTrainConfig {
    Eigen::Index T = 100;
    int batch = 128;
    int steps = 10000;
    double lr = 1e-4;
    // Anneal the learning rate to zero over the run with a half-cosine.
    // Off by default; useful when the late-stage SGD jitter matters more
    // than continued exploration (e.g. before comparing against a
    // per-pair oracle).
    bool cosine_lr = false;
    std::uint64_t seed = 0;
    int log_every = 50;
};

struct InterpolantTrainResult {
    std::vector<std::pair<int, double>> log;  // (step, batch loss)
    double final_loss = 0.0;
};

// Algo trains one network for arbitrary endpoint pairs drawn uniformly
// from the dataset.  A non-finite loss aborts with diagnostics.
InterpolantTrainResult train_interpolant(const ad::Matrix& data,
                                         nets::InterpolantNet& net,
                                         const metric::MetricField& m,
                                         const InterpolantTrainConfig& cfg,
                                         const std::string& log_csv = "");

struct WaypointConfig {
    int max_iters = 400;
    double grad_tol = 1e-8;
};

struct WaypointResult {
    GeodesicPath path;
    double energy = 0.0;
    int iters = 0;
    bool converged = false;  // false: iteration budget hit, best-so-far path
};

// Per-pair oracle: minimizes the same discrete energy over the T-2
// interior points directly, starting from the straight line.  The line
// search only ever accepts descent steps, so the returned path never has
// higher energy than the initialization.
WaypointResult optimize_waypoints(const Eigen::RowVectorXd& x0,
                                  const Eigen::RowVectorXd& x1,
                                  const metric::MetricField& m, Eigen::Index T,
                                  const WaypointConfig& cfg = {});

// Conformal geodesic ODE in Newton form for G = (1/p) I:
//   a = <score, v> v - 1/2 |v|^2 score,   score = grad log p.
using ScoreFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

Eigen::VectorXd geodesic_ode_rhs(const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& v,
                                 const ScoreFn& score);

// RK4 integration of the ODE from (x0, v0) over unit time; T output
// nodes with `substeps` internal steps per interval.
GeodesicPath integrate_geodesic(const Eigen::RowVectorXd& x0,
                                const Eigen::VectorXd& v0,
                                const ScoreFn& score, Eigen::Index T,
                                int substeps);

struct ShootConfig {
    int restarts = 20;
    double tol = 1e-3;      // endpoint miss |x(1) - x1|
    int substeps = 8;       // RK4 steps per output interval
    int max_iters = 60;     // Newton iterations per restart
    std::uint64_t seed = 0;
};

struct ShootResult {
    GeodesicPath path;
    double miss = 0.0;
    double energy = 0.0;  // under the uncalibrated 1/p metric
    int restarts_used = 0;
};

// Boundary-value solve by shooting: Newton (finite-difference Jacobian)
// on the endpoint miss, restarted around the straight-line velocity;
// among converged solutions the minimum-energy one wins.  Throws
// NumericalError when no restart converges (multimodal densities can
// defeat shooting; the waypoint oracle is the fallback).
ShootResult shoot_geodesic(const Eigen::RowVectorXd& x0,
                           const Eigen::RowVectorXd& x1,
                           const density::MixtureDensity& d, Eigen::Index T,
                           const ShootConfig& cfg = {});

// One row per (path, timestep): pair_id, t, then the D coordinates.
void write_paths_csv(const std::string& path,
                     const std::vector<GeodesicPath>& paths);

}  // namespace ebmgeo::geo
