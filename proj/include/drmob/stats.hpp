#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "drmob/core.hpp"
#include "drmob/engine/dataset.hpp"
#include "drmob/records.hpp"

namespace drmob {

/// Set of local dates stored as a bitmap anchored at its first date.
class DayBitmap {
public:
    void insert(LocalDate d);
    void merge(const DayBitmap& other);
    std::size_t count() const noexcept;
    bool empty() const noexcept { return words_.empty(); }
    bool contains(LocalDate d) const noexcept;
    /// Valid only when non-empty.
    LocalDate first() const noexcept;
    LocalDate last() const noexcept;

private:
    void rebase(std::int32_t new_base);
    std::int32_t base_ = 0;  // multiple of 64
    std::vector<std::uint64_t> words_;
};

struct UserStats {
    std::string user_id;
    std::uint64_t total_pings = 0;
    std::uint32_t active_days = 0;
    std::uint32_t span_days = 0;
    double avg_pings_per_active_day = 0.0;

    friend bool operator==(const UserStats&, const UserStats&) = default;
};

/// One row per user, sorted by user_id. Active days are local dates.
std::vector<UserStats> user_stats(const engine::Dataset<Ping>& pings, const LocalClock& clock);

struct UserFilterCriteria {
    std::optional<std::uint32_t> min_active_days;
    std::optional<std::uint64_t> min_total_pings;
    std::optional<double> min_avg_pings_per_day;
    std::optional<std::uint32_t> min_span_days;

    void validate() const;
    bool empty() const noexcept;
    bool accepts(const UserStats& s) const noexcept;
};

/// Keeps every ping of each user whose stats meet all present thresholds.
/// A user absent from `stats` fails the pipeline with a DataError.
engine::Dataset<Ping> filter_users(const engine::Dataset<Ping>& pings, const std::vector<UserStats>& stats,
                                   const UserFilterCriteria& criteria);

void write_user_stats_csv(std::ostream& out, const std::vector<UserStats>& stats);

}  // namespace drmob
