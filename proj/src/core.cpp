#include "drmob/core.hpp"

#include "drmob/errors.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>

namespace drmob {

namespace {

constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

bool parse_int(std::string_view s, int& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

}  // namespace

bool is_valid_coordinate(double lon, double lat) {
    return lat >= -90.0 && lat <= 90.0 && lon >= -180.0 && lon <= 180.0;
}

void BBox::validate() const {
    if (!is_valid_coordinate(min_lon, min_lat) || !is_valid_coordinate(max_lon, max_lat))
        throw ConfigError("bbox corners must be valid WGS84 coordinates");
    if (!(min_lon < max_lon) || !(min_lat < max_lat))
        throw ConfigError("bbox must satisfy min_lon < max_lon and min_lat < max_lat");
}

std::string format_date(LocalDate d) {
    using namespace std::chrono;
    const year_month_day ymd{sys_days{days{d.days}}};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

std::optional<LocalDate> parse_date(std::string_view s) {
    using namespace std::chrono;
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    int y = 0, m = 0, d = 0;
    if (!parse_int(s.substr(0, 4), y) || !parse_int(s.substr(5, 2), m) ||
        !parse_int(s.substr(8, 2), d))
        return std::nullopt;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(m)},
                             day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) return std::nullopt;
    return LocalDate{static_cast<std::int32_t>(sys_days{ymd}.time_since_epoch().count())};
}

LocalClock::LocalClock(int utc_offset_minutes) : offset_minutes_(utc_offset_minutes) {
    if (utc_offset_minutes < kMinOffset || utc_offset_minutes > kMaxOffset)
        throw ConfigError("utc offset " + std::to_string(utc_offset_minutes) +
                          " min outside [-720, 840]");
}

LocalTime to_local(EpochSeconds timestamp_utc, const LocalClock& clock) {
    const std::int64_t local = timestamp_utc + clock.offset_seconds();
    const std::int64_t day = floor_div(local, kSecondsPerDay);
    const std::int64_t sec = local - day * kSecondsPerDay;
    LocalTime t;
    t.date = LocalDate{static_cast<std::int32_t>(day)};
    t.hour = static_cast<int>(sec / 3600);
    t.minute = static_cast<int>((sec % 3600) / 60);
    t.second = static_cast<int>(sec % 60);
    // 1970-01-01 was a Thursday.
    t.weekday = static_cast<int>(((day + 3) % 7 + 7) % 7);
    return t;
}

EpochSeconds from_local(LocalDate date, int hour, int minute, int second, const LocalClock& clock) {
    return EpochSeconds{date.days} * kSecondsPerDay + hour * 3600 + minute * 60 + second -
           clock.offset_seconds();
}

int hour_of_week(EpochSeconds timestamp_utc, const LocalClock& clock) {
    const LocalTime t = to_local(timestamp_utc, clock);
    return t.weekday * 24 + t.hour;
}

TimeWindow::TimeWindow(EpochSeconds start_utc, EpochSeconds end_utc)
    : start_(start_utc), end_(end_utc) {
    if (!(start_utc < end_utc))
        throw ConfigError("time window start " + std::to_string(start_utc) +
                          " must precede end " + std::to_string(end_utc));
}

HourSet hours_from_list(std::initializer_list<int> hours) {
    HourSet s;
    for (int h : hours) s.set(static_cast<std::size_t>(h));
    return s;
}

DaySchedule DaySchedule::defaults() {
    DaySchedule s;
    s.home_hours = hours_from_list({22, 23, 0, 1, 2, 3, 4, 5});
    s.work_hours = hours_from_list({9, 10, 11, 12, 13, 14, 15, 16});
    s.work_days = WeekdaySet{0b0011111};
    return s;
}

void DaySchedule::validate() const {
    if (home_hours.none()) throw ConfigError("schedule: home_hours is empty");
    if (work_hours.none()) throw ConfigError("schedule: work_hours is empty");
    if (work_days.none()) throw ConfigError("schedule: work_days is empty");
    if ((home_hours & work_hours).any())
        throw ConfigError("schedule: home_hours and work_hours overlap");
}

std::optional<EpochSeconds> parse_time_point(std::string_view text, const LocalClock& clock) {
    EpochSeconds epoch = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), epoch);
    if (ec == std::errc{} && p == text.data() + text.size()) return epoch;

    if (text.size() < 10) return std::nullopt;
    auto date = parse_date(text.substr(0, 10));
    if (!date) return std::nullopt;
    std::string_view rest = text.substr(10);
    bool utc = false;
    if (!rest.empty() && rest.back() == 'Z') {
        utc = true;
        rest.remove_suffix(1);
    }
    int h = 0, m = 0, s = 0;
    if (!rest.empty()) {
        if (rest[0] != 'T' && rest[0] != ' ') return std::nullopt;
        rest.remove_prefix(1);
        if (rest.size() != 5 && rest.size() != 8) return std::nullopt;
        if (rest[2] != ':' || !parse_int(rest.substr(0, 2), h) || !parse_int(rest.substr(3, 2), m))
            return std::nullopt;
        if (rest.size() == 8 && (rest[5] != ':' || !parse_int(rest.substr(6, 2), s)))
            return std::nullopt;
        if (h > 23 || m > 59 || s > 59) return std::nullopt;
    }
    return from_local(*date, h, m, s, utc ? LocalClock{} : clock);
}

}  // namespace drmob
