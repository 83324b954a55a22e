#include "drmob/stats.hpp"

#include <bit>
#include <cmath>
#include <unordered_map>

#include "drmob/csv.hpp"
#include "drmob/errors.hpp"

namespace drmob {

namespace {

std::int32_t word_floor(std::int32_t day) {
    return static_cast<std::int32_t>(std::floor(static_cast<double>(day) / 64.0)) * 64;
}

struct StatsAcc {
    std::string user_id;
    std::uint64_t pings = 0;
    DayBitmap days;
};

struct StatsAggregator {
    using Acc = StatsAcc;
    LocalClock clock;

    Acc init(const Ping& p) const {
        Acc a{p.user_id, 1, {}};
        a.days.insert(local_date(p.timestamp, clock));
        return a;
    }
    void fold(Acc& a, const Ping& p) const {
        ++a.pings;
        a.days.insert(local_date(p.timestamp, clock));
    }
    void merge(Acc& a, Acc&& b) const {
        a.pings += b.pings;
        a.days.merge(b.days);
    }
};

}  // namespace

void DayBitmap::rebase(std::int32_t new_base) {
    const auto shift = static_cast<std::size_t>((base_ - new_base) / 64);
    words_.insert(words_.begin(), shift, 0);
    base_ = new_base;
}

void DayBitmap::insert(LocalDate d) {
    const std::int32_t wb = word_floor(d.days);
    if (words_.empty()) {
        base_ = wb;
        words_.assign(1, 0);
    } else if (wb < base_) {
        rebase(wb);
    }
    const auto word = static_cast<std::size_t>((wb - base_) / 64);
    if (word >= words_.size()) words_.resize(word + 1, 0);
    words_[word] |= std::uint64_t{1} << (d.days - wb);
}

void DayBitmap::merge(const DayBitmap& other) {
    if (other.words_.empty()) return;
    if (words_.empty()) {
        *this = other;
        return;
    }
    if (other.base_ < base_) rebase(other.base_);
    const auto offset = static_cast<std::size_t>((other.base_ - base_) / 64);
    if (offset + other.words_.size() > words_.size()) words_.resize(offset + other.words_.size(), 0);
    for (std::size_t i = 0; i < other.words_.size(); ++i) words_[offset + i] |= other.words_[i];
}

std::size_t DayBitmap::count() const noexcept {
    std::size_t n = 0;
    for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
}

bool DayBitmap::contains(LocalDate d) const noexcept {
    if (words_.empty() || d.days < base_) return false;
    const auto word = static_cast<std::size_t>((d.days - base_) / 64);
    return word < words_.size() && (words_[word] >> ((d.days - base_) % 64) & 1U);
}

LocalDate DayBitmap::first() const noexcept {
    for (std::size_t i = 0; i < words_.size(); ++i)
        if (words_[i]) return {base_ + static_cast<std::int32_t>(i * 64 + std::countr_zero(words_[i]))};
    return {base_};
}

LocalDate DayBitmap::last() const noexcept {
    for (std::size_t i = words_.size(); i-- > 0;)
        if (words_[i])
            return {base_ + static_cast<std::int32_t>(i * 64 + 63 - std::countl_zero(words_[i]))};
    return {base_};
}

std::vector<UserStats> user_stats(const engine::Dataset<Ping>& pings, const LocalClock& clock) {
    auto table = engine::reduce_by_key(pings, "user_id", StatsAggregator{clock}, "user_stats").get();
    std::vector<UserStats> out;
    out.reserve(table.size());
    for (auto& [key, acc] : table) {
        UserStats s;
        s.user_id = std::move(acc.user_id);
        s.total_pings = acc.pings;
        s.active_days = static_cast<std::uint32_t>(acc.days.count());
        s.span_days = static_cast<std::uint32_t>(acc.days.last().days - acc.days.first().days + 1);
        s.avg_pings_per_active_day = static_cast<double>(s.total_pings) / s.active_days;
        out.push_back(std::move(s));
    }
    return out;
}

void UserFilterCriteria::validate() const {
    if (min_avg_pings_per_day && !(*min_avg_pings_per_day >= 0.0))
        throw ConfigError("min_avg_pings_per_day must be >= 0");
}

bool UserFilterCriteria::empty() const noexcept {
    return !min_active_days && !min_total_pings && !min_avg_pings_per_day && !min_span_days;
}

bool UserFilterCriteria::accepts(const UserStats& s) const noexcept {
    return (!min_active_days || s.active_days >= *min_active_days) &&
           (!min_total_pings || s.total_pings >= *min_total_pings) &&
           (!min_avg_pings_per_day || s.avg_pings_per_active_day >= *min_avg_pings_per_day) &&
           (!min_span_days || s.span_days >= *min_span_days);
}

engine::Dataset<Ping> filter_users(const engine::Dataset<Ping>& pings, const std::vector<UserStats>& stats,
                                   const UserFilterCriteria& criteria) {
    criteria.validate();
    if (criteria.empty()) return pings;
    auto keep = std::make_shared<std::unordered_map<std::string, bool>>();
    keep->reserve(stats.size());
    for (const auto& s : stats) (*keep)[s.user_id] = criteria.accepts(s);
    return engine::filter(
        pings,
        [keep](const Ping& p) {
            auto it = keep->find(p.user_id);
            if (it == keep->end()) throw DataError("user '" + p.user_id + "' has no stats row");
            return it->second;
        },
        "filter_users");
}

void write_user_stats_csv(std::ostream& out, const std::vector<UserStats>& stats) {
    out << "user_id,total_pings,active_days,span_days,avg_pings_per_active_day\n";
    for (const auto& s : stats)
        csv::row(out, {s.user_id, csv::num(s.total_pings), csv::num(std::uint64_t{s.active_days}),
                       csv::num(std::uint64_t{s.span_days}), csv::num(s.avg_pings_per_active_day)});
}

}  // namespace drmob
