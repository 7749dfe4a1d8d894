// Quantitative path evaluation: accumulated probability, RMSE between
// paths, step-size profiles, nearest-neighbor adherence, and the
// aggregate suite with 2-sigma errors over trajectory sets.
#pragma once

#include <string>
#include <vector>

#include "ebmgeo/densities.hpp"
#include "ebmgeo/geodesics.hpp"
#include "ebmgeo/metrics.hpp"
#include "ebmgeo/nets.hpp"

namespace ebmgeo::eval {

// Sum of the density over all T grid points of the path.
double accumulated_probability(const geo::GeodesicPath& p,
                               const density::MixtureDensity& d);

// Density at the (numerically located) global mode; used to normalize
// accumulated probability to a per-step [0, 1] scale.
double max_density(const density::MixtureDensity& d);

// sqrt(mean_t ||a_t - b_t||^2).  Paths must share T and endpoints.
double path_rmse(const geo::GeodesicPath& a, const geo::GeodesicPath& b);

// Euclidean step lengths ||x_{t+1} - x_t||, one entry per interval.
Eigen::VectorXd step_size_profile(const geo::GeodesicPath& p);

// max/min of the step-size profile; +inf when some step is degenerate.
double step_ratio(const geo::GeodesicPath& p);

// Root-mean-square distance from path points to their nearest neighbor
// in the dataset (manifold-adherence measure; reference-path deviation
// is plain path_rmse against the reference).
double nn_rmse(const geo::GeodesicPath& p, const ad::Matrix& data);

// One requested report row.  Exactly one solver applies:
//  - linear: straight-line baseline (field unused);
//  - oracle: waypoint optimization under `field`;
//  - otherwise: forward passes of `net` (trained under `field`).
struct SuiteCase {
    std::string metric_name;
    metric::MetricField field;
    const nets::InterpolantNet* net = nullptr;
    bool oracle = false;
    bool linear = false;
    std::string rmse_baseline;  // metric_name of the oracle row to compare
                                // against; empty = no RMSE column
};

struct SuiteConfig {
    std::string dataset;
    Eigen::Index T = 100;
    int sets = 5;  // pairs are split into this many sets for the 2-sigma
    geo::WaypointConfig waypoint;
    int threads = 0;  // <= 0: hardware concurrency
};

struct EvalRow {
    std::string dataset, metric, solver;
    long n_pairs = 0;
    long skipped = 0;
    double acc_mean = 0.0, acc_2sig = 0.0;          // normalized per-step
    double acc_raw_mean = 0.0, acc_raw_2sig = 0.0;  // plain sum
    bool has_rmse = false;
    double rmse_mean = 0.0, rmse_2sig = 0.0;
    long long clamp_count = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    int sets = 0;
};

// Solves every case for every endpoint pair, aggregates per set, and
// reports mean and 2-sigma over the set means.  A solver failure on a
// pair skips that pair for the affected row and is counted, never
// silently dropped.  Pair count must be divisible by cfg.sets.
EvalReport run_eval_suite(const std::vector<SuiteCase>& cases,
                          const ad::Matrix& x0s, const ad::Matrix& x1s,
                          const density::MixtureDensity& d,
                          const SuiteConfig& cfg);

// Pinned report schema:
// dataset,metric,solver,n_pairs,acc_prob_mean,acc_prob_2sig,rmse_mean,
// rmse_2sig,skipped.  acc_prob is the normalized value; cells without a
// defined value (no baseline, or too few sets for 2-sigma) are empty.
void write_report_csv(const std::string& path, const EvalReport& report);

// Human-readable table with both raw and normalized accumulated
// probability plus clamp diagnostics.
std::string format_report_table(const EvalReport& report);

}  // namespace ebmgeo::eval
