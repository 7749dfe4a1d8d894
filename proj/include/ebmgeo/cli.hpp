// Command-line orchestration of the pipeline: dataset generation, EBM
// training, metric fitting/calibration, geodesic solving, evaluation,
// and figure emission.  Every command reads one INI run configuration,
// writes its artifacts under <output root>/<run name>/, and records them
// in the run manifest.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "ebmgeo/densities.hpp"
#include "ebmgeo/ebm.hpp"
#include "ebmgeo/geodesics.hpp"

namespace ebmgeo::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// When set, overrides --out (relocates artifact trees without touching
// configs).
inline constexpr const char* kOutputRootEnv = "EBMGEO_OUT";

struct MetricsConfig {
    double g_min = 1.0;
    double g_max = 1000.0;
    int calibration_pairs = 1024;
    double min_separation = 8.0;  // defaults to the dataset radius
    double land_sigma = 1.0;
    int land_refs = 2000;
    int rbf_centroids = 30;
    double rbf_kappa = 1.0;
};

struct GeodesicCmdConfig {
    int pairs = 8;  // endpoint pairs per `geodesic solve`
    Eigen::Index T = 100;
    int waypoint_iters = 400;
};

struct EvalCmdConfig {
    int pairs = 1000;
    int sets = 5;
    Eigen::Index T = 100;
    int waypoint_iters = 400;
};

struct PlotConfig {
    int grid = 200;      // iso-band field resolution per axis
    int bands = 9;       // filled -log p bands
    double box = 14.0;   // world half-width of the figure
    double span = 12.0;  // -log p range covered by the bands, above its min
    int scatter = 400;   // dataset points overlaid on fig1
    int fig2_pair = 0;   // which solved pair fig2 profiles
};

struct RunConfig {
    std::string name = "run";  // subdirectory under the output root
    std::uint64_t seed = 0;
    int threads = 0;  // evaluation worker pool; <= 0 uses all cores

    density::DatasetSpec dataset;  // seed mirrors the master seed
    double wcg_spread = 0.83;

    ebm::EbmTrainConfig ebm;
    ebm::LangevinConfig langevin;
    MetricsConfig metrics;
    geo::InterpolantTrainConfig interpolant;
    GeodesicCmdConfig geodesic;
    EvalCmdConfig eval;
    PlotConfig plot;

    nlohmann::json snapshot;  // raw INI content, kept for the manifest
};

// Parses and validates the full schema (all sections), rejecting unknown
// keys and out-of-range values with field-level messages.
RunConfig load_run_config(const std::string& path);

// argv without the program name.  Returns the process exit code:
// 0 success, 2 config/usage error, 3 missing or unreadable artifact,
// 4 numerical failure.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace ebmgeo::cli
