#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "drmob/core.hpp"
#include "drmob/engine/dataset.hpp"
#include "drmob/homework.hpp"
#include "drmob/records.hpp"
#include "drmob/spatial.hpp"

namespace drmob {

inline constexpr std::size_t kDefaultKAnonymity = 10;

struct EventConfig {
    EpochSeconds event_time = 0;
    std::optional<LonLat> epicenter;
    TimeWindow baseline{0, 1};
    TimeWindow observation{0, 1};

    /// Throws ConfigError unless baseline.end <= event_time <= observation.start.
    void validate() const;
};

struct DisplacementConfig {
    LocalClock clock;
    /// Hours >= 12 belong to that date's night; earlier hours to the previous date's.
    HourSet night_hours = DaySchedule::defaults().home_hours;
    double threshold_m = 500.0;

    void validate() const;
};

/// Local date whose night contains the given local hour on `date`.
LocalDate night_of(LocalDate date, int hour);

/// Component-wise median of the night-hour pings; none without night pings.
/// Even counts take the mean of the two middle values.
std::optional<LonLat> nightly_position(std::span<const Ping> user_night_pings, const LocalClock& clock,
                                       const HourSet& night_hours);

struct DisplacementRecord {
    std::string user_id;
    LocalDate date;
    LonLat night_position;
    double distance_from_home_m = 0.0;
    bool displaced = false;

    friend bool operator==(const DisplacementRecord&, const DisplacementRecord&) = default;
};

struct DisplacementSeries {
    /// Sorted by (user_id, date).
    std::vector<DisplacementRecord> records;
    std::size_t users_with_nights = 0;
    std::size_t users_without_home = 0;
};

enum class SeriesWindow { observation, baseline };

/// Per user with a home, one record per local night inside the chosen window.
/// `homes` must have been inferred over event.baseline.
DisplacementSeries displacement_series(const engine::Dataset<Ping>& pings, std::shared_ptr<const HomeTable> homes,
                                       const EventConfig& event, const DisplacementConfig& config,
                                       SeriesWindow window = SeriesWindow::observation);

enum class GroupingKind { none, epicenter_rings, tile_attribute_quantiles };
GroupingKind parse_grouping_kind(std::string_view s);

struct GroupingSpec {
    GroupingKind kind = GroupingKind::none;
    std::vector<double> ring_edges_km;
    std::string attribute;
    std::size_t quantile_count = 4;

    void validate() const;
};

struct Grouping {
    /// Group index -> label, e.g. "0-10km", "q1", "all".
    std::vector<std::string> labels;
    std::map<std::string, std::size_t> user_group;
    std::size_t users_without_home = 0;
    std::size_t users_missing_attribute = 0;
};

Grouping group_users(const HomeTable& homes, const Tessellation& tess, const GroupingSpec& spec,
                     const EventConfig& event);

struct DailyRate {
    LocalDate date;
    std::size_t group = 0;
    std::string group_label;
    std::size_t observed_users = 0;
    std::size_t displaced_users = 0;
    double rate = 0.0;

    friend bool operator==(const DailyRate&, const DailyRate&) = default;
};

/// Rows sorted by (date, group); rows with observed_users < k_anonymity are dropped.
/// Users absent from the grouping are ignored.
std::vector<DailyRate> displacement_rates(const std::vector<DisplacementRecord>& records, const Grouping& groups,
                                          std::size_t k_anonymity = kDefaultKAnonymity);

struct AnomalyRow {
    std::string tile_id;
    LocalDate date;
    std::size_t observed_users = 0;
    double baseline_mean = 0.0;
    double baseline_std = 0.0;
    std::optional<double> z_score;
    std::optional<double> pct_change;

    friend bool operator==(const AnomalyRow&, const AnomalyRow&) = default;
};

/// Distinct users per tile and observation date against the tile's zero-filled
/// baseline (sample standard deviation). Every tile seen in either window gets a
/// row for every observation date; rows below k_anonymity are dropped.
std::vector<AnomalyRow> tile_population_anomalies(const engine::Dataset<Ping>& pings,
                                                  std::shared_ptr<const Tessellation> tess, const LocalClock& clock,
                                                  const EventConfig& event,
                                                  std::size_t k_anonymity = kDefaultKAnonymity);

/// Local dates covered by a window, first to last inclusive.
std::vector<LocalDate> window_dates(const TimeWindow& w, const LocalClock& clock);

/// Mean and sample standard deviation of `values`; std is 0 for fewer than two values.
std::pair<double, double> mean_and_std(std::span<const double> values);

void write_rates_csv(std::ostream& out, const std::vector<DailyRate>& rates);
void write_anomalies_csv(std::ostream& out, const std::vector<AnomalyRow>& rows);
void write_coverage_csv(std::ostream& out, const std::vector<std::pair<std::string, std::size_t>>& reasons);

}  // namespace drmob
