#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "drmob/core.hpp"
#include "drmob/engine/dataset.hpp"
#include "drmob/records.hpp"
#include "drmob/spatial.hpp"

namespace drmob {

inline constexpr std::size_t kHoursPerWeek = 168;
using WeekBins = std::array<double, kHoursPerWeek>;

struct ActivityProfile {
    std::string tile_id;
    WeekBins bins{};
    std::uint64_t total_events = 0;

    friend bool operator==(const ActivityProfile&, const ActivityProfile&) = default;
};

enum class CountMode { pings, distinct_users };
CountMode parse_count_mode(std::string_view s);

/// Hour-of-week event counts per tile, sorted by tile_id. Tiles without events are omitted.
/// In distinct_users mode a bin counts users seen in that tile and hour-of-week.
std::vector<ActivityProfile> tile_activity_profiles(const engine::Dataset<Ping>& pings,
                                                    std::shared_ptr<const Tessellation> tess,
                                                    const LocalClock& clock, CountMode mode = CountMode::pings);

/// Distinct users with at least one ping in each tile; tiles without pings are omitted.
std::map<std::string, std::size_t> tile_user_counts(const engine::Dataset<Ping>& pings,
                                                    std::shared_ptr<const Tessellation> tess);

/// Scales each profile's bins to sum to 1. Profiles with no events are dropped
/// and their ids appended to `excluded` when given.
std::vector<ActivityProfile> normalize_profiles(std::vector<ActivityProfile> profiles,
                                                std::vector<std::string>* excluded = nullptr);

enum class Linkage { ward, average };
enum class Metric { euclidean, cosine };
Linkage parse_linkage(std::string_view s);
Metric parse_metric(std::string_view s);

/// One agglomeration step. Leaves are 0..n-1 in tile_id order; step i creates node n+i.
struct Merge {
    std::size_t left = 0;
    std::size_t right = 0;
    double distance = 0.0;
    std::size_t size = 0;
};

struct LandUseClustering {
    std::size_t k = 0;
    /// Leaf order: tile ids ascending.
    std::vector<std::string> tile_ids;
    /// Parallel to tile_ids; 0 is the largest cluster.
    std::vector<std::size_t> labels;
    /// Full dendrogram, n-1 merges; labels come from cutting it after n-k merges.
    std::vector<Merge> merge_tree;

    std::map<std::string, std::size_t> label_map() const;
};

/// Exact agglomerative clustering. Ties in linkage distance go to the pair whose
/// smallest member tile ids are lexicographically smallest. Ward requires euclidean.
LandUseClustering hierarchical_cluster(const std::vector<ActivityProfile>& profiles, std::size_t k,
                                       Linkage linkage = Linkage::ward, Metric metric = Metric::euclidean);

/// Mean profile of each cluster, indexed by label.
std::vector<WeekBins> cluster_signatures(const std::vector<ActivityProfile>& profiles,
                                         const LandUseClustering& clustering);

void write_profiles_csv(std::ostream& out, const std::vector<ActivityProfile>& profiles);
void write_labels_csv(std::ostream& out, const LandUseClustering& c);
void write_merge_tree_csv(std::ostream& out, const LandUseClustering& c);

}  // namespace drmob
