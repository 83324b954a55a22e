#pragma once

#include <bitset>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace drmob {

using EpochSeconds = std::int64_t;

inline constexpr EpochSeconds kSecondsPerDay = 86400;
inline constexpr EpochSeconds kSecondsPerWeek = 7 * kSecondsPerDay;
/// 2100-01-01T00:00:00Z, exclusive upper end of supported timestamps.
inline constexpr EpochSeconds kMaxSupportedTimestamp = 4102444800;
/// Raw timestamp values above this are taken to be milliseconds.
inline constexpr std::int64_t kMillisecondThreshold = 100'000'000'000;

struct LonLat {
    double lon = 0.0;
    double lat = 0.0;

    friend auto operator<=>(const LonLat&, const LonLat&) = default;
};

/// One device observation.
struct Ping {
    std::string user_id;
    EpochSeconds timestamp = 0;
    double lat = 0.0;
    double lon = 0.0;
    std::optional<double> accuracy_m;

    LonLat position() const { return {lon, lat}; }
    friend bool operator==(const Ping&, const Ping&) = default;
};

bool is_valid_coordinate(double lon, double lat);

/// Axis-aligned lon/lat box, boundary inclusive.
struct BBox {
    double min_lon = 0.0;
    double min_lat = 0.0;
    double max_lon = 0.0;
    double max_lat = 0.0;

    /// Throws ConfigError unless min < max on both axes and all corners are valid coordinates.
    void validate() const;
    bool contains(double lon, double lat) const noexcept {
        return lon >= min_lon && lon <= max_lon && lat >= min_lat && lat <= max_lat;
    }
    friend bool operator==(const BBox&, const BBox&) = default;
};

/// Calendar date in local time, stored as days since 1970-01-01.
struct LocalDate {
    std::int32_t days = 0;

    friend auto operator<=>(const LocalDate&, const LocalDate&) = default;
    LocalDate next() const { return {days + 1}; }
    LocalDate prev() const { return {days - 1}; }
};

/// "YYYY-MM-DD"
std::string format_date(LocalDate d);
/// Parses "YYYY-MM-DD"; nullopt on malformed input.
std::optional<LocalDate> parse_date(std::string_view s);

/// Fixed UTC offset applied to every timestamp of a run (no DST).
class LocalClock {
public:
    static constexpr int kMinOffset = -720;
    static constexpr int kMaxOffset = 840;

    constexpr LocalClock() = default;
    /// Throws ConfigError when the offset is outside [-720, 840].
    explicit LocalClock(int utc_offset_minutes);

    int utc_offset_minutes() const noexcept { return offset_minutes_; }
    EpochSeconds offset_seconds() const noexcept { return EpochSeconds{offset_minutes_} * 60; }

private:
    int offset_minutes_ = 0;
};

struct LocalTime {
    LocalDate date;
    int hour = 0;
    int minute = 0;
    int second = 0;
    int weekday = 0;  // 0 = Monday ... 6 = Sunday
};

LocalTime to_local(EpochSeconds timestamp_utc, const LocalClock& clock);
/// Inverse of to_local for the given wall-clock fields.
EpochSeconds from_local(LocalDate date, int hour, int minute, int second, const LocalClock& clock);
/// 0 = Monday 00:00-00:59 local, ..., 167 = Sunday 23:00-23:59 local.
int hour_of_week(EpochSeconds timestamp_utc, const LocalClock& clock);
inline LocalDate local_date(EpochSeconds timestamp_utc, const LocalClock& clock) {
    return to_local(timestamp_utc, clock).date;
}

/// Half-open [start_utc, end_utc).
class TimeWindow {
public:
    /// Throws ConfigError unless start < end.
    TimeWindow(EpochSeconds start_utc, EpochSeconds end_utc);

    EpochSeconds start() const noexcept { return start_; }
    EpochSeconds end() const noexcept { return end_; }
    bool contains(EpochSeconds t) const noexcept { return t >= start_ && t < end_; }
    bool overlaps(const TimeWindow& o) const noexcept { return start_ < o.end_ && o.start_ < end_; }
    /// Local dates touched by the window: first = date of start, last = date of end - 1.
    LocalDate first_date(const LocalClock& c) const { return local_date(start_, c); }
    LocalDate last_date(const LocalClock& c) const { return local_date(end_ - 1, c); }

    friend bool operator==(const TimeWindow&, const TimeWindow&) = default;

private:
    EpochSeconds start_;
    EpochSeconds end_;
};

using HourSet = std::bitset<24>;
using WeekdaySet = std::bitset<7>;

HourSet hours_from_list(std::initializer_list<int> hours);

struct DaySchedule {
    HourSet home_hours;
    HourSet work_hours;
    WeekdaySet work_days;

    /// Home 22:00-05:59, work 09:00-16:59 Monday to Friday.
    static DaySchedule defaults();
    /// Throws ConfigError if the hour sets intersect or either is empty.
    void validate() const;
};

/// Accepts integer epoch seconds or "YYYY-MM-DD[THH:MM[:SS]][Z]" interpreted in the given clock.
std::optional<EpochSeconds> parse_time_point(std::string_view text, const LocalClock& clock);

}  // namespace drmob
