#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "drmob/core.hpp"
#include "drmob/displacement.hpp"
#include "drmob/engine/runtime.hpp"
#include "drmob/homework.hpp"
#include "drmob/ingest.hpp"
#include "drmob/landuse.hpp"
#include "drmob/stats.hpp"

namespace drmob::cli {

inline constexpr const char* kToolName = "drmob";
inline constexpr const char* kVersion = "0.1.0";

/// Subcommands in the order the usage text lists them.
const std::vector<std::string>& subcommands();

struct GridSpec {
    BBox bbox;
    double cell_m = 0.0;
};

struct RunConfig {
    std::string subcommand;
    std::optional<std::filesystem::path> config_path;

    std::vector<std::filesystem::path> inputs;
    PingSchemaConfig schema;
    FilterSpec filter;
    std::optional<std::filesystem::path> users_file;
    UserFilterCriteria user_filter;
    LocalClock clock;

    std::optional<std::filesystem::path> tessellation_path;
    std::optional<GridSpec> grid;

    HomeWorkConfig homework;
    std::optional<EventConfig> event;
    DisplacementConfig displacement;
    GroupingSpec grouping;

    std::size_t landuse_k = 2;
    Linkage linkage = Linkage::ward;
    Metric metric = Metric::euclidean;
    CountMode count_mode = CountMode::pings;

    std::optional<std::filesystem::path> poi_path;
    double poi_radius_m = 100.0;

    std::size_t k_anonymity = kDefaultKAnonymity;
    engine::EngineConfig engine;
    std::filesystem::path output_dir;
    bool charts = true;

    /// Effective values of every key read, defaults included, as TOML text.
    std::string snapshot;
};

/// A `--section.key value` pair from the command line.
using Override = std::pair<std::string, std::string>;

/// Merges the TOML file (optional) with overrides, which win, then decodes
/// and validates everything the subcommand needs. Relative paths in the file
/// resolve against its directory; paths given as flags against the working
/// directory. Throws ConfigError on any invalid, unknown or missing setting.
RunConfig load_run_config(const std::string& subcommand, const std::optional<std::filesystem::path>& config_path,
                          const std::vector<Override>& overrides);

std::string usage();

/// Entry point behind the executable. Returns 0 on success, 2 on a usage or
/// configuration error (nothing written), 1 on a runtime failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace drmob::cli
