#include "ebmgeo/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "ebmgeo/checkpoint.hpp"
#include "ebmgeo/common.hpp"
#include "ebmgeo/eval.hpp"
#include "ebmgeo/io/config.hpp"
#include "ebmgeo/io/csv.hpp"
#include "ebmgeo/io/manifest.hpp"
#include "ebmgeo/io/svg.hpp"
#include "ebmgeo/metrics.hpp"
#include "ebmgeo/rng.hpp"

namespace fs = std::filesystem;

namespace ebmgeo::cli {

namespace {

// ---------------------------------------------------------------------
// Metric registry: file slugs, report display names, line colors.

struct MetricInfo {
    const char* slug;
    const char* display;
    const char* color;
    bool oracle;  // exact-density field, solved per pair, never amortized
};

constexpr MetricInfo kMetricTable[] = {
    {"g_e_m", "G_E_M", "#1f77b4", true},
    {"g_1p_m", "G_1/p_M", "#ff7f0e", true},
    {"g_e_t", "G_Etheta", "#2ca02c", false},
    {"g_1p_t", "G_1/ptheta", "#d62728", false},
    {"land", "LAND", "#9467bd", false},
    {"rbf", "RBF", "#8c564b", false},
};

const MetricInfo& metric_info(const std::string& slug) {
    for (const MetricInfo& m : kMetricTable)
        if (slug == m.slug) return m;
    std::string known;
    for (const MetricInfo& m : kMetricTable)
        known += std::string(known.empty() ? "" : ", ") + m.slug;
    throw ConfigError("unknown metric '" + slug + "' (want one of: " + known + ")");
}

// "all", one slug, or a comma-separated list.
std::vector<std::string> parse_metric_list(const std::string& flag,
                                           bool learned_only) {
    std::vector<std::string> slugs;
    if (flag == "all") {
        for (const MetricInfo& m : kMetricTable)
            if (!learned_only || !m.oracle) slugs.push_back(m.slug);
        return slugs;
    }
    std::stringstream ss(flag);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        slugs.push_back(metric_info(item).slug);
    }
    if (slugs.empty()) throw ConfigError("empty --metric list");
    return slugs;
}

std::string interp_ckpt_name(const std::string& slug) {
    return "interpolant_" + slug + ".ckpt";
}

std::string paths_csv_name(const std::string& slug) {
    return "paths_" + slug + ".csv";
}

// Prerequisite artifacts of a metric field beyond the dataset itself.
std::vector<std::string> metric_inputs(const std::string& slug) {
    if (slug == "g_e_t" || slug == "g_1p_t") return {"ebm.ckpt"};
    if (slug == "land") return {"land_refs.csv"};
    if (slug == "rbf") return {"rbf.json"};
    return {};
}

// ---------------------------------------------------------------------
// Run context.

struct Run {
    RunConfig cfg;
    std::string dir;
    io::Manifest manifest;
};

Run open_run(const std::string& config_path, const std::string& out_flag) {
    Run r;
    r.cfg = load_run_config(config_path);
    std::string root = out_flag.empty() ? "runs" : out_flag;
    if (const char* env = std::getenv(kOutputRootEnv); env && *env) root = env;
    r.dir = root + "/" + r.cfg.name;
    fs::create_directories(r.dir);
    r.manifest = io::load_manifest(r.dir);
    return r;
}

// Persist the manifest after a successful command.
void seal(Run& r) {
    r.manifest.tool_version = kToolVersion;
    r.manifest.config = r.cfg.snapshot;
    io::save_manifest(r.dir, r.manifest);
}

density::MixtureDensity run_density(const RunConfig& cfg) {
    switch (cfg.dataset.variant) {
        case density::Variant::Ucg:
            return density::semicircle_ucg(cfg.dataset.K, cfg.dataset.R);
        case density::Variant::Wcg:
            return density::semicircle_wcg(cfg.dataset.K, cfg.dataset.R,
                                           cfg.wcg_spread);
        default:
            throw ConfigError("[dataset] variant: only ucg and wcg runs are "
                              "supported by the pipeline commands");
    }
}

ad::Matrix load_dataset(const Run& r) {
    const std::string path =
        io::require_artifact(r.dir, "dataset.csv", "dataset gen");
    auto [columns, m] = io::read_matrix_csv(path);
    (void)columns;
    if (m.rows() == 0) throw MissingArtifactError("'" + path + "' is empty");
    return m;
}

nlohmann::json read_json_artifact(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("cannot read '" + path + "'");
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw MissingArtifactError("cannot parse '" + path + "': " + e.what());
    }
}

void write_json_artifact(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << j.dump(2) << "\n";
}

// Uncalibrated fields plus whatever state they capture.  LAND references
// and the RBF surrogate come from `metric fit` artifacts; the learned
// fields pull the EBM checkpoint.
struct FieldSet {
    density::MixtureDensity density;
    std::map<std::string, metric::MetricField> fields;  // by slug
};

metric::MetricField build_uncalibrated(const std::string& slug, const Run& r,
                                       const density::MixtureDensity& d) {
    if (slug == "g_e_m") return metric::oracle_metrics(d).first;
    if (slug == "g_1p_m") return metric::oracle_metrics(d).second;
    if (slug == "g_e_t" || slug == "g_1p_t") {
        nets::EnergyModel model = ckpt::load_energy_model(
            io::require_artifact(r.dir, "ebm.ckpt", "ebm train"));
        auto [direct, inverse] = metric::ebm_metrics(model);
        return slug == "g_e_t" ? direct : inverse;
    }
    if (slug == "land") {
        auto [columns, refs] = io::read_matrix_csv(
            io::require_artifact(r.dir, "land_refs.csv", "metric fit"));
        (void)columns;
        return metric::land_metric({refs, r.cfg.metrics.land_sigma});
    }
    if (slug == "rbf") {
        metric::RbfModel rbf = metric::rbf_from_json(read_json_artifact(
            io::require_artifact(r.dir, "rbf.json", "metric fit")));
        return metric::rbf_metric(rbf);
    }
    throw ConfigError("unknown metric '" + slug + "'");
}

// Rebuilds the requested fields and installs the constants persisted by
// `metric calibrate`.
FieldSet load_calibrated_fields(const Run& r, const std::vector<std::string>& slugs) {
    FieldSet set;
    set.density = run_density(r.cfg);
    const nlohmann::json cal = read_json_artifact(
        io::require_artifact(r.dir, "metrics.json", "metric calibrate"));
    for (const std::string& slug : slugs) {
        if (set.fields.count(slug)) continue;
        metric::MetricField f = build_uncalibrated(slug, r, set.density);
        if (!cal.contains("fields") || !cal["fields"].contains(slug))
            throw MissingArtifactError(
                "metrics.json has no calibration for '" + slug +
                "'; rerun `ebmgeo metric calibrate`");
        const nlohmann::json& c = cal["fields"][slug];
        f.alpha = c.at("alpha").get<double>();
        f.beta = c.at("beta").get<double>();
        f.floor = c.at("floor").get<double>();
        set.fields.emplace(slug, std::move(f));
    }
    return set;
}

// Endpoint pairs as distinct dataset rows.
std::pair<ad::Matrix, ad::Matrix> sample_pairs(const ad::Matrix& data, int n,
                                               rng::Stream& rs) {
    if (data.rows() < 2)
        throw ConfigError("need at least 2 data points to form endpoint pairs");
    ad::Matrix x0s(n, data.cols()), x1s(n, data.cols());
    for (int i = 0; i < n; ++i) {
        const auto a = rs.integer(static_cast<std::uint64_t>(data.rows()));
        std::uint64_t b;
        do {
            b = rs.integer(static_cast<std::uint64_t>(data.rows()));
        } while (b == a);
        x0s.row(i) = data.row(static_cast<Eigen::Index>(a));
        x1s.row(i) = data.row(static_cast<Eigen::Index>(b));
    }
    return {std::move(x0s), std::move(x1s)};
}

std::vector<geo::GeodesicPath> read_paths_csv(const std::string& path) {
    io::Csv csv = io::read_csv(path);
    if (csv.columns.size() < 3 || csv.columns[0] != "pair_id" ||
        csv.columns[1] != "t")
        throw MissingArtifactError("'" + path + "' is not a paths CSV");
    const Eigen::Index D = static_cast<Eigen::Index>(csv.columns.size()) - 2;
    std::vector<geo::GeodesicPath> paths;
    std::vector<Eigen::RowVectorXd> points;
    std::string current;
    auto flush = [&]() {
        if (points.empty()) return;
        ad::Matrix m(static_cast<Eigen::Index>(points.size()), D);
        for (std::size_t k = 0; k < points.size(); ++k)
            m.row(static_cast<Eigen::Index>(k)) = points[k];
        paths.push_back({std::move(m)});
        points.clear();
    };
    for (const auto& row : csv.rows) {
        if (row[0] != current) {
            flush();
            current = row[0];
        }
        Eigen::RowVectorXd p(D);
        for (Eigen::Index j = 0; j < D; ++j) p[j] = std::stod(row[2 + j]);
        points.push_back(std::move(p));
    }
    flush();
    if (paths.empty()) throw MissingArtifactError("'" + path + "' has no paths");
    return paths;
}

// ---------------------------------------------------------------------
// Commands.

void cmd_dataset_gen(Run& r, std::ostream& out) {
    const density::MixtureDensity d = run_density(r.cfg);
    rng::Stream rs = rng::derive(r.cfg.seed, "cli/dataset");
    const ad::Matrix pts = density::sample(d, r.cfg.dataset.n, rs);
    std::vector<std::string> columns;
    for (Eigen::Index j = 0; j < pts.cols(); ++j)
        columns.push_back("x" + std::to_string(j));
    io::write_matrix_csv(r.dir + "/dataset.csv", columns, pts);
    io::record_artifact(r.manifest, r.dir, "dataset.csv", "dataset gen", {});
    seal(r);
    out << "wrote " << r.dir << "/dataset.csv (" << pts.rows() << " points, "
        << r.cfg.dataset.variant_name() << ")\n";
}

void cmd_ebm_train(Run& r, std::ostream& out) {
    const ad::Matrix data = load_dataset(r);
    const std::string ckpt_path = r.dir + "/ebm.ckpt";
    const std::string log_path = r.dir + "/ebm_train_log.csv";
    ebm::TrainResult res =
        ebm::train_ebm(data, r.cfg.ebm, r.cfg.langevin, ckpt_path, log_path);
    if (res.diverged)
        throw NumericalError("ebm training diverged at step " +
                             std::to_string(res.aborted_at_step) + ": " +
                             res.abort_reason);
    io::record_artifact(r.manifest, r.dir, "ebm.ckpt", "ebm train",
                        {"dataset.csv"});
    io::record_artifact(r.manifest, r.dir, "ebm_train_log.csv", "ebm train",
                        {"dataset.csv"});
    seal(r);
    out << "trained EBM for " << r.cfg.ebm.steps << " steps";
    if (!res.log.empty()) {
        const ebm::TrainLogRow& last = res.log.back();
        out << " (final cd loss " << last.cd_loss << ", mean E+ "
            << last.mean_E_pos << ", mean E- " << last.mean_E_neg << ")";
    }
    out << "\nwrote " << ckpt_path << "\n";
}

void cmd_metric_fit(Run& r, std::ostream& out) {
    const ad::Matrix data = load_dataset(r);

    const metric::RbfModel rbf = metric::fit_rbf(
        data, r.cfg.metrics.rbf_centroids, r.cfg.metrics.rbf_kappa, r.cfg.seed);
    write_json_artifact(r.dir + "/rbf.json", metric::rbf_to_json(rbf));
    io::record_artifact(r.manifest, r.dir, "rbf.json", "metric fit",
                        {"dataset.csv"});

    // LAND keeps a reference subsample; a partial Fisher-Yates draw keeps
    // it unbiased and cheap for big datasets.
    const Eigen::Index m =
        std::min<Eigen::Index>(r.cfg.metrics.land_refs, data.rows());
    std::vector<Eigen::Index> idx(data.rows());
    for (Eigen::Index i = 0; i < data.rows(); ++i) idx[i] = i;
    rng::Stream rs = rng::derive(r.cfg.seed, "cli/land-refs");
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto j = i + static_cast<Eigen::Index>(rs.integer(
                               static_cast<std::uint64_t>(data.rows() - i)));
        std::swap(idx[i], idx[j]);
    }
    ad::Matrix refs(m, data.cols());
    for (Eigen::Index i = 0; i < m; ++i) refs.row(i) = data.row(idx[i]);
    std::vector<std::string> columns;
    for (Eigen::Index j = 0; j < refs.cols(); ++j)
        columns.push_back("x" + std::to_string(j));
    io::write_matrix_csv(r.dir + "/land_refs.csv", columns, refs);
    io::record_artifact(r.manifest, r.dir, "land_refs.csv", "metric fit",
                        {"dataset.csv"});

    seal(r);
    out << "fit RBF surrogate (" << rbf.centroids.rows()
        << " centroids) and drew " << m << " LAND references\n";
}

void cmd_metric_calibrate(Run& r, std::ostream& out) {
    const ad::Matrix data = load_dataset(r);
    const density::MixtureDensity d = run_density(r.cfg);

    rng::Stream rs = rng::derive(r.cfg.seed, "cli/calibration");
    metric::CalibrationSets sets = metric::build_calibration_sets(
        data, r.cfg.metrics.calibration_pairs, r.cfg.metrics.min_separation, rs);
    sets.g_min = r.cfg.metrics.g_min;
    sets.g_max = r.cfg.metrics.g_max;

    nlohmann::json fields = nlohmann::json::object();
    std::vector<std::string> inputs = {"dataset.csv"};
    for (const MetricInfo& info : kMetricTable) {
        metric::MetricField f = build_uncalibrated(info.slug, r, d);
        metric::calibrate(f, sets);
        fields[info.slug] = metric::metric_descriptor(f);
        for (const std::string& in : metric_inputs(info.slug))
            if (std::find(inputs.begin(), inputs.end(), in) == inputs.end())
                inputs.push_back(in);
        out << info.display << ": alpha=" << io::fmt_g17(f.alpha)
            << " beta=" << io::fmt_g17(f.beta) << "\n";
    }

    nlohmann::json top;
    top["dataset_hash"] = io::file_hash_hex(r.dir + "/dataset.csv");
    top["g_min"] = sets.g_min;
    top["g_max"] = sets.g_max;
    top["calibration_pairs"] = sets.on_manifold.rows();
    top["fields"] = fields;
    write_json_artifact(r.dir + "/metrics.json", top);
    io::record_artifact(r.manifest, r.dir, "metrics.json", "metric calibrate",
                        inputs);
    seal(r);
    out << "wrote " << r.dir << "/metrics.json\n";
}

void cmd_geodesic_train(Run& r, const std::string& metric_flag,
                        std::ostream& out) {
    const std::vector<std::string> slugs =
        parse_metric_list(metric_flag, /*learned_only=*/true);
    for (const std::string& slug : slugs)
        if (metric_info(slug).oracle)
            throw ConfigError(
                "metric '" + slug +
                "' is an exact-density oracle; its geodesics are solved per "
                "pair by the waypoint optimizer, no interpolant is trained");

    const ad::Matrix data = load_dataset(r);
    const FieldSet set = load_calibrated_fields(r, slugs);
    for (const std::string& slug : slugs) {
        rng::Stream init = rng::derive(r.cfg.seed, "cli/interp-init/" + slug);
        nets::InterpolantNet net =
            nets::InterpolantNet::create(data.cols(), init);
        const std::string log_rel = "interpolant_" + slug + "_log.csv";
        geo::InterpolantTrainResult res = geo::train_interpolant(
            data, net, set.fields.at(slug), r.cfg.interpolant,
            r.dir + "/" + log_rel);

        const std::string ckpt_rel = interp_ckpt_name(slug);
        nlohmann::json meta;
        meta["metric"] = slug;
        meta["steps"] = r.cfg.interpolant.steps;
        meta["final_loss"] = res.final_loss;
        ckpt::save_interpolant(net, r.dir + "/" + ckpt_rel, r.cfg.seed, meta);

        std::vector<std::string> inputs = {"dataset.csv", "metrics.json"};
        for (const std::string& in : metric_inputs(slug)) inputs.push_back(in);
        io::record_artifact(r.manifest, r.dir, ckpt_rel, "geodesic train", inputs);
        io::record_artifact(r.manifest, r.dir, log_rel, "geodesic train", inputs);
        out << metric_info(slug).display << ": trained "
            << r.cfg.interpolant.steps << " steps, final batch loss "
            << res.final_loss << "\n";
    }
    seal(r);
}

void cmd_geodesic_solve(Run& r, const std::string& metric_flag,
                        const std::string& solver_flag, int pairs_flag,
                        std::ostream& out) {
    if (solver_flag != "auto" && solver_flag != "interpolant" &&
        solver_flag != "waypoint")
        throw ConfigError("--solver must be auto, interpolant, or waypoint");
    const std::vector<std::string> slugs =
        parse_metric_list(metric_flag, /*learned_only=*/false);
    const ad::Matrix data = load_dataset(r);
    const FieldSet set = load_calibrated_fields(r, slugs);

    const int n = pairs_flag > 0 ? pairs_flag : r.cfg.geodesic.pairs;
    rng::Stream rs = rng::derive(r.cfg.seed, "cli/solve-pairs");
    auto [x0s, x1s] = sample_pairs(data, n, rs);

    std::vector<std::string> pcols = {"pair"};
    for (Eigen::Index j = 0; j < data.cols(); ++j)
        pcols.push_back("a" + std::to_string(j));
    for (Eigen::Index j = 0; j < data.cols(); ++j)
        pcols.push_back("b" + std::to_string(j));
    std::vector<std::vector<std::string>> prow;
    for (int i = 0; i < n; ++i) {
        std::vector<std::string> row = {std::to_string(i)};
        for (Eigen::Index j = 0; j < data.cols(); ++j)
            row.push_back(io::fmt_g17(x0s(i, j)));
        for (Eigen::Index j = 0; j < data.cols(); ++j)
            row.push_back(io::fmt_g17(x1s(i, j)));
        prow.push_back(std::move(row));
    }
    io::write_csv(r.dir + "/solve_pairs.csv", pcols, prow);
    io::record_artifact(r.manifest, r.dir, "solve_pairs.csv", "geodesic solve",
                        {"dataset.csv"});

    for (const std::string& slug : slugs) {
        const MetricInfo& info = metric_info(slug);
        const bool use_waypoint =
            solver_flag == "waypoint" || (solver_flag == "auto" && info.oracle);
        if (!use_waypoint && info.oracle)
            throw ConfigError("metric '" + slug +
                              "' has no interpolant; use --solver waypoint");

        std::vector<geo::GeodesicPath> paths;
        std::vector<std::string> inputs = {"dataset.csv", "metrics.json",
                                           "solve_pairs.csv"};
        if (use_waypoint) {
            int stalled = 0;
            for (int i = 0; i < n; ++i) {
                geo::WaypointResult res = geo::optimize_waypoints(
                    x0s.row(i), x1s.row(i), set.fields.at(slug),
                    r.cfg.geodesic.T, {r.cfg.geodesic.waypoint_iters, 1e-8});
                if (!res.converged) ++stalled;
                paths.push_back(std::move(res.path));
            }
            if (stalled)
                out << info.display << ": " << stalled << "/" << n
                    << " pairs hit the iteration budget (best-so-far paths "
                       "kept)\n";
        } else {
            nets::InterpolantNet net = ckpt::load_interpolant(io::require_artifact(
                r.dir, interp_ckpt_name(slug), "geodesic train"));
            paths = geo::interpolant_paths(net, x0s, x1s, r.cfg.geodesic.T);
            inputs.push_back(interp_ckpt_name(slug));
        }
        const std::string rel = paths_csv_name(slug);
        geo::write_paths_csv(r.dir + "/" + rel, paths);
        io::record_artifact(r.manifest, r.dir, rel, "geodesic solve", inputs);
        out << info.display << ": wrote " << rel << " ("
            << (use_waypoint ? "waypoint" : "interpolant") << ", " << n
            << " pairs)\n";
    }
    seal(r);
}

Eigen::RowVectorXd parse_point(const std::string& flag, const std::string& name) {
    std::vector<double> vals;
    std::stringstream ss(flag);
    std::string item;
    while (std::getline(ss, item, ',')) {
        errno = 0;
        char* end = nullptr;
        double v = std::strtod(item.c_str(), &end);
        if (errno != 0 || end == item.c_str() || *end != '\0')
            throw ConfigError(name + ": expected comma-separated coordinates, "
                                     "got '" + flag + "'");
        vals.push_back(v);
    }
    if (vals.size() < 2)
        throw ConfigError(name + ": expected at least 2 coordinates");
    Eigen::RowVectorXd x(static_cast<Eigen::Index>(vals.size()));
    for (std::size_t j = 0; j < vals.size(); ++j)
        x[static_cast<Eigen::Index>(j)] = vals[j];
    return x;
}

void cmd_geodesic_shoot(Run& r, const std::string& x0_flag,
                        const std::string& x1_flag, std::ostream& out) {
    const Eigen::RowVectorXd x0 = parse_point(x0_flag, "--x0");
    const Eigen::RowVectorXd x1 = parse_point(x1_flag, "--x1");
    if (x0.size() != x1.size())
        throw ConfigError("--x0 and --x1 must have the same dimension");
    const density::MixtureDensity d = run_density(r.cfg);
    if (x0.size() != d.dim())
        throw ConfigError("endpoints are " + std::to_string(x0.size()) +
                          "-dimensional but the dataset is " +
                          std::to_string(d.dim()) + "-dimensional");

    geo::ShootConfig cfg;
    cfg.seed = r.cfg.seed;
    geo::ShootResult res =
        geo::shoot_geodesic(x0, x1, d, r.cfg.geodesic.T, cfg);
    geo::write_paths_csv(r.dir + "/shoot_path.csv", {res.path});
    io::record_artifact(r.manifest, r.dir, "shoot_path.csv", "geodesic shoot", {});
    seal(r);
    out << "shot geodesic: endpoint miss " << res.miss << ", energy "
        << res.energy << ", restarts used " << res.restarts_used << "\n"
        << "wrote " << r.dir << "/shoot_path.csv\n";
}

void cmd_eval_run(Run& r, std::ostream& out) {
    std::vector<std::string> slugs;
    for (const MetricInfo& m : kMetricTable) slugs.push_back(m.slug);
    const ad::Matrix data = load_dataset(r);
    const FieldSet set = load_calibrated_fields(r, slugs);

    // Interpolant networks must outlive the suite; unique_ptr keeps their
    // addresses stable in the cases below.
    std::map<std::string, std::unique_ptr<nets::InterpolantNet>> nets_by_slug;
    std::vector<std::string> inputs = {"dataset.csv", "metrics.json"};
    for (const MetricInfo& info : kMetricTable) {
        for (const std::string& in : metric_inputs(info.slug))
            if (std::find(inputs.begin(), inputs.end(), in) == inputs.end())
                inputs.push_back(in);
        if (info.oracle) continue;
        const std::string rel = interp_ckpt_name(info.slug);
        nets_by_slug[info.slug] = std::make_unique<nets::InterpolantNet>(
            ckpt::load_interpolant(io::require_artifact(r.dir, rel,
                                                        "geodesic train")));
        inputs.push_back(rel);
    }

    rng::Stream rs = rng::derive(r.cfg.seed, "cli/eval-pairs");
    auto [x0s, x1s] = sample_pairs(data, r.cfg.eval.pairs, rs);

    // Fig. 1b row set: oracle references first (the RMSE baselines), the
    // learned metrics compared against their matching oracle, and the
    // straight-line baseline.
    std::vector<eval::SuiteCase> cases;
    auto field = [&](const char* slug) { return set.fields.at(slug); };
    cases.push_back({"G_E_M", field("g_e_m"), nullptr, true, false, ""});
    cases.push_back({"G_1/p_M", field("g_1p_m"), nullptr, true, false, ""});
    cases.push_back({"G_Etheta", field("g_e_t"), nets_by_slug["g_e_t"].get(),
                     false, false, "G_E_M"});
    cases.push_back({"G_1/ptheta", field("g_1p_t"),
                     nets_by_slug["g_1p_t"].get(), false, false, "G_1/p_M"});
    cases.push_back({"LAND", field("land"), nets_by_slug["land"].get(), false,
                     false, "G_1/p_M"});
    cases.push_back({"RBF", field("rbf"), nets_by_slug["rbf"].get(), false,
                     false, "G_1/p_M"});
    cases.push_back({"linear", metric::euclidean_metric(), nullptr, false,
                     true, ""});

    eval::SuiteConfig cfg;
    cfg.dataset = r.cfg.dataset.variant_name();
    cfg.T = r.cfg.eval.T;
    cfg.sets = r.cfg.eval.sets;
    cfg.waypoint = {r.cfg.eval.waypoint_iters, 1e-8};
    cfg.threads = r.cfg.threads;
    const eval::EvalReport rep =
        eval::run_eval_suite(cases, x0s, x1s, set.density, cfg);

    eval::write_report_csv(r.dir + "/eval_report.csv", rep);
    io::record_artifact(r.manifest, r.dir, "eval_report.csv", "eval run", inputs);
    seal(r);
    out << eval::format_report_table(rep);
    out << "wrote " << r.dir << "/eval_report.csv\n";
}

// Shared by both figures: dataset density field on the plot grid.
Eigen::MatrixXd neg_log_density_grid(const density::MixtureDensity& d,
                                     const Eigen::VectorXd& xs,
                                     const Eigen::VectorXd& ys) {
    ad::Matrix query(xs.size() * ys.size(), 2);
    for (Eigen::Index i = 0; i < ys.size(); ++i)
        for (Eigen::Index j = 0; j < xs.size(); ++j)
            query.row(i * xs.size() + j) << xs[j], ys[i];
    const Eigen::VectorXd logp = density::log_density_batch(d, query);
    Eigen::MatrixXd field(ys.size(), xs.size());
    for (Eigen::Index i = 0; i < ys.size(); ++i)
        for (Eigen::Index j = 0; j < xs.size(); ++j)
            field(i, j) = -logp[i * xs.size() + j];
    return field;
}

void cmd_plot_fig1(Run& r, std::ostream& out) {
    const ad::Matrix data = load_dataset(r);
    const density::MixtureDensity d = run_density(r.cfg);
    const PlotConfig& pc = r.cfg.plot;

    const Eigen::VectorXd xs =
        Eigen::VectorXd::LinSpaced(pc.grid, -pc.box, pc.box);
    const Eigen::VectorXd ys = xs;
    const Eigen::MatrixXd field = neg_log_density_grid(d, xs, ys);

    io::SvgCanvas canvas(-pc.box, pc.box, -pc.box, pc.box);
    const double fmin = field.minCoeff();
    canvas.add_isobands(field, xs, ys,
                        io::linspace_levels(fmin, fmin + pc.span, pc.bands),
                        io::gray_band_fills(pc.bands));

    if (pc.scatter > 0) {
        const Eigen::Index m = std::min<Eigen::Index>(pc.scatter, data.rows());
        rng::Stream rs = rng::derive(r.cfg.seed, "cli/plot-scatter");
        ad::Matrix sub(m, data.cols());
        for (Eigen::Index i = 0; i < m; ++i)
            sub.row(i) = data.row(static_cast<Eigen::Index>(
                rs.integer(static_cast<std::uint64_t>(data.rows()))));
        canvas.add_scatter(sub.leftCols(2), 1.5, "#4d88d9", 0.35);
    }

    std::vector<std::string> inputs = {"dataset.csv"};
    int row = 0;
    for (const MetricInfo& info : kMetricTable) {
        const std::string rel = paths_csv_name(info.slug);
        io::require_artifact(r.dir, rel, "geodesic solve");
        for (const geo::GeodesicPath& p : read_paths_csv(r.dir + "/" + rel))
            canvas.add_polyline(p.points.leftCols(2), info.color, 1.6);
        canvas.add_text(-pc.box * 0.95, pc.box * (0.92 - 0.07 * row),
                        info.display, info.color);
        inputs.push_back(rel);
        ++row;
    }

    canvas.write(r.dir + "/fig1.svg");
    io::record_artifact(r.manifest, r.dir, "fig1.svg", "plot fig1", inputs);
    seal(r);
    out << "wrote " << r.dir << "/fig1.svg\n";
}

void cmd_plot_fig2(Run& r, std::ostream& out) {
    const int k = r.cfg.plot.fig2_pair;

    std::vector<std::string> inputs;
    std::vector<std::pair<std::string, Eigen::VectorXd>> profiles;  // slug order
    for (const MetricInfo& info : kMetricTable) {
        const std::string rel = paths_csv_name(info.slug);
        const std::vector<geo::GeodesicPath> paths =
            read_paths_csv(io::require_artifact(r.dir, rel, "geodesic solve"));
        if (k < 0 || static_cast<std::size_t>(k) >= paths.size())
            throw ConfigError("[plot] fig2_pair: pair " + std::to_string(k) +
                              " is out of range (" + rel + " has " +
                              std::to_string(paths.size()) + " paths)");
        profiles.emplace_back(info.slug,
                              eval::step_size_profile(paths[static_cast<std::size_t>(k)]));
        inputs.push_back(rel);
    }

    std::vector<std::vector<std::string>> rows;
    double max_step = 0.0;
    Eigen::Index max_len = 0;
    for (const auto& [slug, prof] : profiles) {
        max_step = std::max(max_step, prof.maxCoeff());
        max_len = std::max(max_len, prof.size());
        for (Eigen::Index i = 0; i < prof.size(); ++i)
            rows.push_back({slug, std::to_string(i), io::fmt_g17(prof[i])});
    }
    io::write_csv(r.dir + "/fig2.csv", {"metric", "step", "size"}, rows);
    io::record_artifact(r.manifest, r.dir, "fig2.csv", "plot fig2", inputs);

    io::SvgCanvas canvas(0.0, static_cast<double>(std::max<Eigen::Index>(max_len - 1, 1)),
                         0.0, max_step * 1.05);
    int row = 0;
    for (const auto& [slug, prof] : profiles) {
        Eigen::MatrixXd pts(prof.size(), 2);
        for (Eigen::Index i = 0; i < prof.size(); ++i)
            pts.row(i) << static_cast<double>(i), prof[i];
        const MetricInfo& info = metric_info(slug);
        canvas.add_polyline(pts, info.color, 1.6);
        canvas.add_text(max_len * 0.03, max_step * (1.0 - 0.05 * row),
                        info.display, info.color);
        ++row;
    }
    canvas.write(r.dir + "/fig2.svg");
    io::record_artifact(r.manifest, r.dir, "fig2.svg", "plot fig2", inputs);
    seal(r);
    out << "wrote " << r.dir << "/fig2.csv and fig2.svg (pair " << k << ")\n";
}

}  // namespace

// ---------------------------------------------------------------------
// Configuration schema.

RunConfig load_run_config(const std::string& path) {
    io::ConfigReader c(io::Ini::parse_file(path));
    RunConfig r;

    auto field_error = [&](const std::string& sec, const std::string& key,
                           const std::string& msg) -> ConfigError {
        return ConfigError(path + ": [" + sec + "] " + key + ": " + msg);
    };

    r.name = c.get_str("run", "name", "run");
    r.seed = c.get_seed("run", "seed", 0);
    r.threads = static_cast<int>(c.get_int("run", "threads", 0));
    if (r.name.empty() || r.name == "." || r.name == ".." ||
        r.name.find('/') != std::string::npos)
        throw field_error("run", "name", "must be a plain directory name");

    const std::string variant = c.get_str("dataset", "variant", "ucg");
    if (variant != "ucg" && variant != "wcg")
        throw field_error("dataset", "variant", "expected ucg or wcg, got '" +
                                                    variant + "'");
    r.dataset.variant = density::variant_from_name(variant);
    r.dataset.K = static_cast<int>(c.get_int("dataset", "components", 200));
    r.dataset.R = c.get_num("dataset", "radius", 8.0);
    r.dataset.n = static_cast<int>(c.get_int("dataset", "samples", 10000));
    r.wcg_spread = c.get_num("dataset", "wcg_spread", 0.83);
    r.dataset.seed = r.seed;
    if (r.dataset.K < 1) throw field_error("dataset", "components", "must be >= 1");
    if (!(r.dataset.R > 0)) throw field_error("dataset", "radius", "must be positive");
    if (r.dataset.n < 1) throw field_error("dataset", "samples", "must be >= 1");
    if (!(r.wcg_spread > 0))
        throw field_error("dataset", "wcg_spread", "must be positive");

    r.ebm.batch = static_cast<int>(c.get_int("ebm", "batch", r.ebm.batch));
    r.ebm.steps = static_cast<int>(c.get_int("ebm", "steps", r.ebm.steps));
    r.ebm.lr = c.get_num("ebm", "lr", r.ebm.lr);
    r.ebm.reg_weight = c.get_num("ebm", "reg_weight", r.ebm.reg_weight);
    r.ebm.divergence_bound =
        c.get_num("ebm", "divergence_bound", r.ebm.divergence_bound);
    r.ebm.seed = r.seed;
    r.langevin.steps =
        static_cast<int>(c.get_int("ebm", "langevin_steps", r.langevin.steps));
    r.langevin.step_size =
        c.get_num("ebm", "langevin_step_size", r.langevin.step_size);
    r.langevin.noise = c.get_num("ebm", "langevin_noise", r.langevin.noise);
    r.langevin.buffer_prob =
        c.get_num("ebm", "langevin_buffer_prob", r.langevin.buffer_prob);
    r.langevin.drift_clip =
        c.get_num("ebm", "langevin_drift_clip", r.langevin.drift_clip);

    r.metrics.g_min = c.get_num("metrics", "g_min", r.metrics.g_min);
    r.metrics.g_max = c.get_num("metrics", "g_max", r.metrics.g_max);
    r.metrics.calibration_pairs = static_cast<int>(
        c.get_int("metrics", "calibration_pairs", r.metrics.calibration_pairs));
    r.metrics.min_separation =
        c.get_num("metrics", "min_separation", r.dataset.R);
    r.metrics.land_sigma = c.get_num("metrics", "land_sigma", r.metrics.land_sigma);
    r.metrics.land_refs =
        static_cast<int>(c.get_int("metrics", "land_refs", r.metrics.land_refs));
    r.metrics.rbf_centroids = static_cast<int>(
        c.get_int("metrics", "rbf_centroids", r.metrics.rbf_centroids));
    r.metrics.rbf_kappa = c.get_num("metrics", "rbf_kappa", r.metrics.rbf_kappa);
    if (!(r.metrics.g_min > 0) || !(r.metrics.g_max > r.metrics.g_min))
        throw field_error("metrics", "g_min",
                          "need 0 < g_min < g_max (g_max is checked here too)");
    if (r.metrics.calibration_pairs < 2)
        throw field_error("metrics", "calibration_pairs", "must be >= 2");
    if (!(r.metrics.min_separation >= 0))
        throw field_error("metrics", "min_separation", "must be >= 0");
    if (!(r.metrics.land_sigma > 0))
        throw field_error("metrics", "land_sigma", "must be positive");
    if (r.metrics.land_refs < 1)
        throw field_error("metrics", "land_refs", "must be >= 1");
    if (r.metrics.rbf_centroids < 1)
        throw field_error("metrics", "rbf_centroids", "must be >= 1");
    if (!(r.metrics.rbf_kappa > 0))
        throw field_error("metrics", "rbf_kappa", "must be positive");

    r.interpolant.T = c.get_int("interpolant", "T", r.interpolant.T);
    r.interpolant.batch =
        static_cast<int>(c.get_int("interpolant", "batch", r.interpolant.batch));
    r.interpolant.steps =
        static_cast<int>(c.get_int("interpolant", "steps", r.interpolant.steps));
    r.interpolant.lr = c.get_num("interpolant", "lr", r.interpolant.lr);
    r.interpolant.cosine_lr =
        c.get_flag("interpolant", "cosine_lr", r.interpolant.cosine_lr);
    r.interpolant.log_every = static_cast<int>(
        c.get_int("interpolant", "log_every", r.interpolant.log_every));
    r.interpolant.seed = r.seed;
    if (r.interpolant.T < 2) throw field_error("interpolant", "T", "must be >= 2");
    if (r.interpolant.batch < 1)
        throw field_error("interpolant", "batch", "must be >= 1");
    if (r.interpolant.steps < 1)
        throw field_error("interpolant", "steps", "must be >= 1");
    if (!(r.interpolant.lr > 0))
        throw field_error("interpolant", "lr", "must be positive");
    if (r.interpolant.log_every < 1)
        throw field_error("interpolant", "log_every", "must be >= 1");

    r.geodesic.pairs =
        static_cast<int>(c.get_int("geodesic", "pairs", r.geodesic.pairs));
    r.geodesic.T = c.get_int("geodesic", "T", r.geodesic.T);
    r.geodesic.waypoint_iters = static_cast<int>(
        c.get_int("geodesic", "waypoint_iters", r.geodesic.waypoint_iters));
    if (r.geodesic.pairs < 1) throw field_error("geodesic", "pairs", "must be >= 1");
    if (r.geodesic.T < 2) throw field_error("geodesic", "T", "must be >= 2");
    if (r.geodesic.waypoint_iters < 1)
        throw field_error("geodesic", "waypoint_iters", "must be >= 1");

    r.eval.pairs = static_cast<int>(c.get_int("eval", "pairs", r.eval.pairs));
    r.eval.sets = static_cast<int>(c.get_int("eval", "sets", r.eval.sets));
    r.eval.T = c.get_int("eval", "T", r.eval.T);
    r.eval.waypoint_iters = static_cast<int>(
        c.get_int("eval", "waypoint_iters", r.eval.waypoint_iters));
    if (r.eval.sets < 1) throw field_error("eval", "sets", "must be >= 1");
    if (r.eval.pairs < r.eval.sets)
        throw field_error("eval", "pairs", "must be >= sets");
    if (r.eval.pairs % r.eval.sets != 0)
        throw field_error("eval", "pairs",
                          "must be divisible by sets for the 2-sigma split");
    if (r.eval.T < 2) throw field_error("eval", "T", "must be >= 2");
    if (r.eval.waypoint_iters < 1)
        throw field_error("eval", "waypoint_iters", "must be >= 1");

    r.plot.grid = static_cast<int>(c.get_int("plot", "grid", r.plot.grid));
    r.plot.bands = static_cast<int>(c.get_int("plot", "bands", r.plot.bands));
    r.plot.box = c.get_num("plot", "box", r.plot.box);
    r.plot.span = c.get_num("plot", "span", r.plot.span);
    r.plot.scatter = static_cast<int>(c.get_int("plot", "scatter", r.plot.scatter));
    r.plot.fig2_pair =
        static_cast<int>(c.get_int("plot", "fig2_pair", r.plot.fig2_pair));
    if (r.plot.grid < 2) throw field_error("plot", "grid", "must be >= 2");
    if (r.plot.bands < 1) throw field_error("plot", "bands", "must be >= 1");
    if (!(r.plot.box > 0)) throw field_error("plot", "box", "must be positive");
    if (!(r.plot.span > 0)) throw field_error("plot", "span", "must be positive");
    if (r.plot.scatter < 0) throw field_error("plot", "scatter", "must be >= 0");
    if (r.plot.fig2_pair < 0)
        throw field_error("plot", "fig2_pair", "must be >= 0");

    c.assert_no_unknown_keys();
    r.ebm.validate();
    r.langevin.validate();
    r.snapshot = c.ini().to_json();
    return r;
}

// ---------------------------------------------------------------------
// Entry point.

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
    CLI::App app{"Riemannian geodesics from generative-model metrics"};
    app.fallthrough();

    std::string config_path = "run.ini";
    std::string out_flag;
    std::string metric_flag = "all";
    std::string solver_flag = "auto";
    std::string x0_flag, x1_flag;
    int pairs_flag = 0;
    app.add_option("--config", config_path, "Run configuration file")
        ->capture_default_str();
    app.add_option("--out", out_flag,
                   "Output root (default 'runs'; $EBMGEO_OUT overrides)");
    app.require_subcommand(1);

    auto open = [&]() { return open_run(config_path, out_flag); };

    CLI::App* dataset = app.add_subcommand("dataset", "Dataset artifacts");
    dataset->require_subcommand(1);
    dataset->add_subcommand("gen", "Sample the mixture dataset to CSV")
        ->callback([&]() {
            Run r = open();
            cmd_dataset_gen(r, out);
        });

    CLI::App* ebm = app.add_subcommand("ebm", "Energy-based model");
    ebm->require_subcommand(1);
    ebm->add_subcommand("train", "Contrastive-divergence training")
        ->callback([&]() {
            Run r = open();
            cmd_ebm_train(r, out);
        });

    CLI::App* metric = app.add_subcommand("metric", "Metric zoo");
    metric->require_subcommand(1);
    metric->add_subcommand("fit", "Fit the RBF surrogate and LAND references")
        ->callback([&]() {
            Run r = open();
            cmd_metric_fit(r, out);
        });
    metric
        ->add_subcommand("calibrate",
                         "Calibrate every metric to [g_min, g_max]")
        ->callback([&]() {
            Run r = open();
            cmd_metric_calibrate(r, out);
        });

    CLI::App* geodesic = app.add_subcommand("geodesic", "Geodesic solvers");
    geodesic->require_subcommand(1);
    CLI::App* gtrain = geodesic->add_subcommand(
        "train", "Train interpolant networks (learned metrics)");
    gtrain->add_option("--metric", metric_flag,
                       "Metric slug list or 'all' (learned metrics)");
    gtrain->callback([&]() {
        Run r = open();
        cmd_geodesic_train(r, metric_flag, out);
    });
    CLI::App* gsolve =
        geodesic->add_subcommand("solve", "Solve geodesics for sampled pairs");
    gsolve->add_option("--metric", metric_flag, "Metric slug list or 'all'");
    gsolve->add_option("--solver", solver_flag,
                       "auto | interpolant | waypoint");
    gsolve->add_option("--pairs", pairs_flag,
                       "Endpoint pairs (default from [geodesic] pairs)");
    gsolve->callback([&]() {
        Run r = open();
        cmd_geodesic_solve(r, metric_flag, solver_flag, pairs_flag, out);
    });
    CLI::App* gshoot = geodesic->add_subcommand(
        "shoot", "Shooting BVP under the exact 1/p metric");
    gshoot->add_option("--x0", x0_flag, "Start point, e.g. \"-2,0\"")
        ->required();
    gshoot->add_option("--x1", x1_flag, "End point, e.g. \"2,0\"")->required();
    gshoot->callback([&]() {
        Run r = open();
        cmd_geodesic_shoot(r, x0_flag, x1_flag, out);
    });

    CLI::App* evalc = app.add_subcommand("eval", "Quantitative evaluation");
    evalc->require_subcommand(1);
    evalc->add_subcommand("run", "Accumulated probability / RMSE suite")
        ->callback([&]() {
            Run r = open();
            cmd_eval_run(r, out);
        });

    CLI::App* plot = app.add_subcommand("plot", "Figures");
    plot->require_subcommand(1);
    plot->add_subcommand("fig1", "Density iso-bands with geodesic overlays")
        ->callback([&]() {
            Run r = open();
            cmd_plot_fig1(r, out);
        });
    plot->add_subcommand("fig2", "Step-size profiles along geodesics")
        ->callback([&]() {
            Run r = open();
            cmd_plot_fig2(r, out);
        });

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
        return 0;
    } catch (const CLI::ParseError& e) {
        // CLI11 treats --help as a parse "error" with exit code 0.
        const int rc = app.exit(e, out, err);
        return rc == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ShapeError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ckpt::CheckpointError& e) {
        err << "artifact error: " << e.what() << "\n";
        return 3;
    } catch (const MissingArtifactError& e) {
        err << "missing artifact: " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace ebmgeo::cli
