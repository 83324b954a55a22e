#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "drmob/core.hpp"
#include "drmob/engine/dataset.hpp"
#include "drmob/records.hpp"
#include "drmob/spatial.hpp"

namespace drmob {

enum class Period { home, work, other };

/// Home hours apply on every day; work hours only on work days.
Period label_period(EpochSeconds timestamp_utc, const LocalClock& clock, const DaySchedule& schedule);

struct MeanShiftParams {
    double bandwidth_m = 300.0;
    double convergence_tol_m = 1.0;
    int max_iterations = 100;
    /// Defaults to bandwidth / 2 when unset.
    std::optional<double> seed_bin_m;
    std::optional<double> mode_merge_m;

    double seed_bin() const { return seed_bin_m.value_or(bandwidth_m / 2); }
    double mode_merge() const { return mode_merge_m.value_or(bandwidth_m / 2); }
    void validate() const;
};

/// Mode in the frame of the input points. member_indices index the caller's input.
template <typename Point>
struct Mode {
    Point center;
    std::size_t member_count = 0;
    std::vector<std::size_t> member_indices;
};

using ModeCluster = Mode<LonLat>;

/// Flat-kernel mean shift on planar metre coordinates. Result sorted by
/// member_count descending, then lexicographic centre.
std::vector<Mode<Vec2>> mean_shift(std::span<const Vec2> points, const MeanShiftParams& params);

/// Mean shift in an equirectangular frame centred on the points' centroid.
/// Points must fit in a 200 km square.
std::vector<ModeCluster> mean_shift(std::span<const LonLat> points, const MeanShiftParams& params);

struct Anchor {
    LonLat point;
    std::optional<std::string> tile_id;
    std::size_t support = 0;

    friend bool operator==(const Anchor&, const Anchor&) = default;
};

struct HomeWorkResult {
    std::string user_id;
    std::optional<Anchor> home;
    std::optional<Anchor> work;

    friend bool operator==(const HomeWorkResult&, const HomeWorkResult&) = default;
};

struct HomeWorkConfig {
    LocalClock clock;
    DaySchedule schedule = DaySchedule::defaults();
    MeanShiftParams params;
    std::size_t min_home_pings = 5;
    std::size_t min_work_pings = 5;
    /// Pings outside this window are ignored when set.
    std::optional<TimeWindow> window;

    void validate() const;
};

/// Largest extent mean_shift accepts. Before clustering, a user's period points
/// farther than 95% of half this from the per-axis median are discarded.
inline constexpr double kMaxClusterExtentM = 200'000.0;

/// Home/work for one user's pings; all pings must share a user_id.
HomeWorkResult user_home_work(std::span<const Ping> pings, const HomeWorkConfig& config,
                              const Tessellation& tess);

/// Home/work results sorted by user_id, tagged with the window they were inferred over.
struct HomeTable {
    std::vector<HomeWorkResult> rows;
    std::optional<TimeWindow> window;

    const HomeWorkResult* find(const std::string& user_id) const;
};

/// Shuffles pings by user and infers home/work per user in parallel.
HomeTable infer_home_work(const engine::Dataset<Ping>& pings, const HomeWorkConfig& config,
                          std::shared_ptr<const Tessellation> tess);

struct ODCoverage {
    std::size_t users = 0;
    std::size_t with_both = 0;
    std::size_t missing_home = 0;
    std::size_t missing_work = 0;
};

struct ODMatrix {
    std::map<std::pair<std::string, std::string>, std::size_t> entries;
    std::size_t total_users = 0;
    ODCoverage coverage;
};

/// Counts users whose home and work both fall in a tile.
ODMatrix od_matrix(const std::vector<HomeWorkResult>& results);

void write_home_work_csv(std::ostream& out, const std::vector<HomeWorkResult>& rows);
/// Entries with fewer than min_users users are omitted.
void write_od_csv(std::ostream& out, const ODMatrix& od, std::size_t min_users = 0);

}  // namespace drmob
