#include "ebmgeo/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include "ebmgeo/common.hpp"
#include "ebmgeo/io/csv.hpp"

namespace ebmgeo::eval {

namespace {

using ad::Matrix;

// Runs fn(i) for i in [0, n) across a small thread pool.  Results must
// be written to per-index slots so the outcome is scheduling-invariant.
void parallel_for(Eigen::Index n, int threads,
                  const std::function<void(Eigen::Index)>& fn) {
    int n_threads = threads > 0
                        ? threads
                        : static_cast<int>(std::thread::hardware_concurrency());
    n_threads = std::max(1, std::min<int>(n_threads, static_cast<int>(n)));
    if (n_threads == 1) {
        for (Eigen::Index i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<Eigen::Index> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int w = 0; w < n_threads; ++w) {
        pool.emplace_back([&]() {
            for (;;) {
                const Eigen::Index i = next.fetch_add(1);
                if (i >= n) return;
                fn(i);
            }
        });
    }
    for (auto& t : pool) t.join();
}

double sample_std(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / (n - 1.0));
}

struct Aggregate {
    double mean = 0.0;
    double two_sigma = std::numeric_limits<double>::quiet_NaN();
    long count = 0;
};

// Mean of per-set means and 2x their sample std.  Sets with no
// contributing pairs are excluded; fewer than two surviving sets leave
// the 2-sigma undefined.
Aggregate aggregate_sets(const std::vector<std::vector<double>>& per_set) {
    Aggregate a;
    std::vector<double> set_means;
    for (const auto& s : per_set) {
        if (s.empty()) continue;
        double m = 0.0;
        for (double x : s) m += x;
        set_means.push_back(m / static_cast<double>(s.size()));
        a.count += static_cast<long>(s.size());
    }
    if (set_means.empty()) return a;
    for (double m : set_means) a.mean += m;
    a.mean /= static_cast<double>(set_means.size());
    if (set_means.size() >= 2) a.two_sigma = 2.0 * sample_std(set_means);
    return a;
}

std::string fmt_cell(double v) {
    return std::isfinite(v) ? io::fmt_g17(v) : std::string();
}

}  // namespace

double accumulated_probability(const geo::GeodesicPath& p,
                               const density::MixtureDensity& d) {
    if (p.dim() != d.dim())
        throw ShapeError("accumulated_probability: path/density dimension mismatch");
    return density::log_density_batch(d, p.points).array().exp().sum();
}

double max_density(const density::MixtureDensity& d) {
    // Ascend log-density from every component center; unit covariances
    // make this converge in a few dozen steps.
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < d.components(); ++k) {
        Eigen::VectorXd x = d.centers.row(k).transpose();
        for (int it = 0; it < 100; ++it) {
            const Eigen::VectorXd s = density::score(d, x);
            if (s.norm() < 1e-12) break;
            x += 0.25 * s;
        }
        best = std::max(best, density::log_density(d, x));
        best = std::max(best,
                        density::log_density(d, d.centers.row(k).transpose()));
    }
    return std::exp(best);
}

double path_rmse(const geo::GeodesicPath& a, const geo::GeodesicPath& b) {
    if (a.T() != b.T() || a.dim() != b.dim())
        throw ShapeError("path_rmse: paths have different shapes");
    const double scale = std::max({1.0, a.points.cwiseAbs().maxCoeff(),
                                   b.points.cwiseAbs().maxCoeff()});
    if ((a.x0() - b.x0()).norm() > 1e-9 * scale ||
        (a.x1() - b.x1()).norm() > 1e-9 * scale)
        throw ConfigError("path_rmse: endpoint mismatch, comparison undefined");
    return std::sqrt((a.points - b.points).rowwise().squaredNorm().mean());
}

Eigen::VectorXd step_size_profile(const geo::GeodesicPath& p) {
    const Eigen::Index n = p.T() - 1;
    return (p.points.bottomRows(n) - p.points.topRows(n)).rowwise().norm();
}

double step_ratio(const geo::GeodesicPath& p) {
    const Eigen::VectorXd s = step_size_profile(p);
    const double mn = s.minCoeff();
    if (mn <= 0.0) return std::numeric_limits<double>::infinity();
    return s.maxCoeff() / mn;
}

double nn_rmse(const geo::GeodesicPath& p, const ad::Matrix& data) {
    if (data.rows() == 0) throw ShapeError("nn_rmse: empty dataset");
    if (data.cols() != p.dim())
        throw ShapeError("nn_rmse: path/dataset dimension mismatch");
    double total = 0.0;
    for (Eigen::Index t = 0; t < p.T(); ++t) {
        total += (data.rowwise() - p.points.row(t))
                     .rowwise()
                     .squaredNorm()
                     .minCoeff();
    }
    return std::sqrt(total / static_cast<double>(p.T()));
}

EvalReport run_eval_suite(const std::vector<SuiteCase>& cases,
                          const ad::Matrix& x0s, const ad::Matrix& x1s,
                          const density::MixtureDensity& d,
                          const SuiteConfig& cfg) {
    if (cases.empty()) throw ConfigError("run_eval_suite: no metrics requested");
    if (x0s.rows() != x1s.rows() || x0s.cols() != x1s.cols())
        throw ShapeError("run_eval_suite: endpoint batch shapes differ");
    if (x0s.rows() == 0) throw ConfigError("run_eval_suite: no endpoint pairs");
    if (cfg.sets < 1) throw ConfigError("run_eval_suite: need at least one set");
    if (x0s.rows() % cfg.sets != 0)
        throw ConfigError("run_eval_suite: pair count not divisible into sets");
    for (const auto& c : cases) {
        const int modes = (c.net != nullptr) + c.oracle + c.linear;
        if (modes != 1)
            throw ConfigError("run_eval_suite: case '" + c.metric_name +
                              "' must select exactly one solver");
        if (!c.rmse_baseline.empty()) {
            const auto it = std::find_if(cases.begin(), cases.end(),
                                         [&](const SuiteCase& o) {
                                             return o.metric_name ==
                                                        c.rmse_baseline &&
                                                    o.oracle;
                                         });
            if (it == cases.end())
                throw ConfigError("run_eval_suite: baseline '" +
                                  c.rmse_baseline + "' of '" + c.metric_name +
                                  "' is not an oracle case in the suite");
        }
    }

    const Eigen::Index n = x0s.rows();
    const double p_max = max_density(d);
    const double norm = 1.0 / (p_max * static_cast<double>(cfg.T));

    // Solve every case for every pair.  A failed pair leaves an empty
    // path slot.
    std::vector<std::vector<geo::GeodesicPath>> paths(cases.size());
    std::vector<std::vector<char>> ok(cases.size());
    for (std::size_t c = 0; c < cases.size(); ++c) {
        paths[c].resize(static_cast<std::size_t>(n));
        ok[c].assign(static_cast<std::size_t>(n), 0);
        const SuiteCase& sc = cases[c];
        sc.field.reset_clamp_count();
        if (sc.net != nullptr) {
            // One batched forward pass per set keeps memory flat.
            const Eigen::Index per = n / cfg.sets;
            for (int s = 0; s < cfg.sets; ++s) {
                std::vector<geo::GeodesicPath> got = geo::interpolant_paths(
                    *sc.net, x0s.middleRows(s * per, per),
                    x1s.middleRows(s * per, per), cfg.T);
                for (Eigen::Index i = 0; i < per; ++i) {
                    paths[c][static_cast<std::size_t>(s * per + i)] =
                        std::move(got[static_cast<std::size_t>(i)]);
                    ok[c][static_cast<std::size_t>(s * per + i)] = 1;
                }
            }
        } else if (sc.linear) {
            for (Eigen::Index i = 0; i < n; ++i) {
                paths[c][static_cast<std::size_t>(i)] =
                    geo::straight_line(x0s.row(i), x1s.row(i), cfg.T);
                ok[c][static_cast<std::size_t>(i)] = 1;
            }
        } else {
            parallel_for(n, cfg.threads, [&](Eigen::Index i) {
                try {
                    geo::WaypointResult res = geo::optimize_waypoints(
                        x0s.row(i), x1s.row(i), sc.field, cfg.T, cfg.waypoint);
                    paths[c][static_cast<std::size_t>(i)] = std::move(res.path);
                    ok[c][static_cast<std::size_t>(i)] = 1;
                } catch (const std::runtime_error&) {
                    // counted below as a skipped pair
                }
            });
        }
    }

    EvalReport report;
    report.sets = cfg.sets;
    const Eigen::Index per = n / cfg.sets;
    for (std::size_t c = 0; c < cases.size(); ++c) {
        const SuiteCase& sc = cases[c];
        std::vector<std::vector<double>> acc(static_cast<std::size_t>(cfg.sets));
        std::vector<std::vector<double>> rmse(static_cast<std::size_t>(cfg.sets));
        const std::size_t base =
            sc.rmse_baseline.empty()
                ? cases.size()
                : static_cast<std::size_t>(
                      std::find_if(cases.begin(), cases.end(),
                                   [&](const SuiteCase& o) {
                                       return o.metric_name == sc.rmse_baseline &&
                                              o.oracle;
                                   }) -
                      cases.begin());
        long contributed = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!ok[c][static_cast<std::size_t>(i)]) continue;
            ++contributed;
            const std::size_t s = static_cast<std::size_t>(i / per);
            acc[s].push_back(
                accumulated_probability(paths[c][static_cast<std::size_t>(i)], d));
            if (base < cases.size() && ok[base][static_cast<std::size_t>(i)])
                rmse[s].push_back(
                    path_rmse(paths[c][static_cast<std::size_t>(i)],
                              paths[base][static_cast<std::size_t>(i)]));
        }

        EvalRow row;
        row.dataset = cfg.dataset;
        row.metric = sc.metric_name;
        row.solver = sc.net != nullptr ? "interpolant"
                     : sc.oracle       ? "waypoint"
                                       : "linear";
        row.n_pairs = contributed;
        row.skipped = static_cast<long>(n) - contributed;
        const Aggregate raw = aggregate_sets(acc);
        row.acc_raw_mean = raw.mean;
        row.acc_raw_2sig = raw.two_sigma;
        row.acc_mean = raw.mean * norm;
        row.acc_2sig = raw.two_sigma * norm;
        if (base < cases.size()) {
            const Aggregate r = aggregate_sets(rmse);
            row.has_rmse = true;
            row.rmse_mean = r.mean;
            row.rmse_2sig = r.two_sigma;
        }
        row.clamp_count = sc.field.clamp_count();
        report.rows.push_back(std::move(row));
    }
    return report;
}

void write_report_csv(const std::string& path, const EvalReport& report) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(report.rows.size());
    for (const EvalRow& r : report.rows) {
        rows.push_back({r.dataset, r.metric, r.solver,
                        std::to_string(r.n_pairs), fmt_cell(r.acc_mean),
                        fmt_cell(r.acc_2sig),
                        r.has_rmse ? fmt_cell(r.rmse_mean) : std::string(),
                        r.has_rmse ? fmt_cell(r.rmse_2sig) : std::string(),
                        std::to_string(r.skipped)});
    }
    io::write_csv(path,
                  {"dataset", "metric", "solver", "n_pairs", "acc_prob_mean",
                   "acc_prob_2sig", "rmse_mean", "rmse_2sig", "skipped"},
                  rows);
}

std::string format_report_table(const EvalReport& report) {
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof(line), "%-14s %-12s %-16s %-18s %-16s %8s %8s\n",
                  "metric", "solver", "acc. prob", "acc. prob (raw)",
                  "rmse", "skipped", "clamps");
    out << line;
    auto pm = [](double mean, double sig) {
        char buf[64];
        if (std::isfinite(sig))
            std::snprintf(buf, sizeof(buf), "%.3f +- %.3f", mean, sig);
        else
            std::snprintf(buf, sizeof(buf), "%.3f", mean);
        return std::string(buf);
    };
    for (const EvalRow& r : report.rows) {
        std::snprintf(line, sizeof(line), "%-14s %-12s %-16s %-18s %-16s %8ld %8lld\n",
                      r.metric.c_str(), r.solver.c_str(),
                      pm(r.acc_mean, r.acc_2sig).c_str(),
                      pm(r.acc_raw_mean, r.acc_raw_2sig).c_str(),
                      r.has_rmse ? pm(r.rmse_mean, r.rmse_2sig).c_str() : "-",
                      r.skipped, r.clamp_count);
        out << line;
    }
    return out.str();
}

}  // namespace ebmgeo::eval
