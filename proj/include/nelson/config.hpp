#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "nelson/params.hpp"
#include "nelson/sde.hpp"
#include "nelson/spectral.hpp"

namespace nelson {

/// Unreadable or unwritable files.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Settings for the autocorrelation cross-check run next to a matrix gap:
/// planar paths started at perihelion.
struct AutocorrRun {
    int n_paths{128};
    double duration{300.0};
    int record_stride{50};
};

struct OutputConfig {
    std::string dir{"."};
    std::string trajectories{"trajectories.csv"};
    std::string diagnostics{"diagnostics.json"};
    std::string marginal{"marginal.csv"};
    std::string widths{"widths.csv"};
    std::string gap{"gap.json"};
    std::string scan{"gu_scan.csv"};
    bool jsonl{false};

    [[nodiscard]] std::string path(const std::string& file) const;
};

/// Fully resolved run configuration. Built from a JSON document with the
/// sections params, sim, grid, spectral and output; every key is optional
/// and unknown keys are rejected.
struct RunConfig {
    PhysParams params;
    SimConfig sim;
    double burn_in{10.0};
    int histogram_bins{64};
    ConvergenceCriteria convergence;
    GridSpec grid;
    SpectralConfig spectral;
    GapOptions gap;
    AutocorrOptions autocorr;
    AutocorrRun autocorr_run;
    std::vector<double> scan_radii{0.1, 0.5, 1, 2, 5, 10, 30, 100};
    GuScanOptions scan;
    OutputConfig output;
};

/// Resolves a document into a RunConfig. Defaults that depend on the
/// physical parameters (time step, drift cap, ring radius, grid resolution)
/// are derived after the params section is read, so overriding eps also
/// moves them unless they are given explicitly. Throws ConfigError.
RunConfig resolve_config(const nlohmann::json& doc);

/// Reads and resolves a file; IoError when unreadable, ConfigError on bad JSON.
RunConfig load_config(const std::string& path);
nlohmann::json read_config_document(const std::string& path);

/// The resolved configuration as a document that resolves to itself.
nlohmann::json to_json(const RunConfig& cfg);

/// Nodes per unit length a (a multiple of 5) whose spacing resolves the
/// volcano width with a margin over build_generator's check.
int resolving_density(const PhysParams& p, int dimension);

}  // namespace nelson
