#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "drmob/errors.hpp"
#include "drmob/stats.hpp"

using namespace drmob;

namespace {

EpochSeconds at(const char* date, int hour = 12) {
    return from_local(*parse_date(date), hour, 0, 0, LocalClock{});
}

std::vector<Ping> synthetic(std::size_t users, std::size_t pings, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> user(0, users - 1);
    std::uniform_int_distribution<EpochSeconds> ts(1'672'531'200 - 40 * 86400, 1'672'531'200 + 60 * 86400);
    std::vector<Ping> out;
    for (std::size_t i = 0; i < pings; ++i) {
        // Skew activity so users differ in days and counts.
        const std::size_t u = std::min(user(rng), user(rng));
        EpochSeconds t = ts(rng);
        if (u % 5 == 0) t = 1'672'531'200 + static_cast<EpochSeconds>(u % 7) * 3600;
        out.push_back({"u" + std::to_string(u), t, 10.0, 20.0, std::nullopt});
    }
    return out;
}

// Single sequential pass with explicit day arithmetic.
std::map<std::string, UserStats> naive_stats(const std::vector<Ping>& pings, int offset_minutes) {
    std::map<std::string, std::set<std::int64_t>> days;
    std::map<std::string, std::uint64_t> counts;
    for (const auto& p : pings) {
        const std::int64_t local = p.timestamp + offset_minutes * 60;
        const std::int64_t day = local >= 0 ? local / 86400 : -((-local + 86399) / 86400);
        days[p.user_id].insert(day);
        ++counts[p.user_id];
    }
    std::map<std::string, UserStats> out;
    for (const auto& [u, d] : days) {
        UserStats s{u, counts[u], static_cast<std::uint32_t>(d.size()),
                    static_cast<std::uint32_t>(*d.rbegin() - *d.begin() + 1), 0.0};
        s.avg_pings_per_active_day = static_cast<double>(s.total_pings) / s.active_days;
        out[u] = s;
    }
    return out;
}

std::map<std::string, std::size_t> counts_by_user(const std::vector<Ping>& pings) {
    std::map<std::string, std::size_t> c;
    for (const auto& p : pings) ++c[p.user_id];
    return c;
}

}  // namespace

TEST_CASE("day bitmap tracks dates across words and negative days") {
    DayBitmap b;
    CHECK(b.empty());
    b.insert({5});
    b.insert({-70});
    b.insert({200});
    b.insert({5});
    CHECK(b.count() == 3);
    CHECK(b.first().days == -70);
    CHECK(b.last().days == 200);
    CHECK(b.contains({-70}));
    CHECK_FALSE(b.contains({6}));

    DayBitmap c;
    c.insert({-300});
    c.insert({201});
    b.merge(c);
    CHECK(b.count() == 5);
    CHECK(b.first().days == -300);
    CHECK(b.last().days == 201);
}

TEST_CASE("user stats examples") {
    engine::Session s;
    auto ds = engine::from_vector(s,
                                  std::vector<Ping>{{"a", at("2023-01-01", 8), 0, 0, {}},
                                                    {"a", at("2023-01-03", 9), 0, 0, {}},
                                                    {"a", at("2023-01-03", 10), 0, 0, {}}},
                                  2);
    auto st = user_stats(ds, LocalClock{});
    REQUIRE(st.size() == 1);
    CHECK(st[0].active_days == 2);
    CHECK(st[0].span_days == 3);
    CHECK(st[0].total_pings == 3);
    CHECK(st[0].avg_pings_per_active_day == 1.5);

    auto empty = engine::from_vector(s, std::vector<Ping>{}, 3);
    CHECK(user_stats(empty, LocalClock{}).empty());
}

TEST_CASE("active days follow the local clock") {
    engine::Session s;
    // 2023-01-02 03:00 UTC is still 2023-01-01 in UTC-6.
    auto ds = engine::from_vector(s,
                                  std::vector<Ping>{{"a", at("2023-01-01", 20), 0, 0, {}},
                                                    {"a", at("2023-01-02", 3), 0, 0, {}}},
                                  1);
    CHECK(user_stats(ds, LocalClock{})[0].active_days == 2);
    CHECK(user_stats(ds, LocalClock{-360})[0].active_days == 1);
}

TEST_CASE("user stats match a sequential oracle for any partitioning") {
    const auto pings = synthetic(500, 100'000, 11);
    const auto oracle = naive_stats(pings, -300);
    std::uint64_t sum = 0;
    for (std::size_t parts : {1, 7, 32}) {
        for (std::size_t workers : {1, 4}) {
            engine::EngineConfig cfg;
            cfg.worker_count = workers;
            engine::Session s{cfg};
            auto st = user_stats(engine::from_vector(s, pings, parts), LocalClock{-300});
            REQUIRE(st.size() == oracle.size());
            sum = 0;
            for (const auto& u : st) {
                CHECK(u == oracle.at(u.user_id));
                CHECK(u.active_days <= u.span_days);
                CHECK(u.total_pings >= u.active_days);
                sum += u.total_pings;
            }
            CHECK(std::is_sorted(st.begin(), st.end(),
                                 [](const UserStats& a, const UserStats& b) { return a.user_id < b.user_id; }));
            CHECK(sum == pings.size());
        }
    }
}

TEST_CASE("user stats are invariant under partition permutation") {
    const auto pings = synthetic(50, 5'000, 3);
    std::vector<std::vector<Ping>> parts(6);
    for (std::size_t i = 0; i < pings.size(); ++i) parts[i % 6].push_back(pings[i]);
    engine::Session s;
    const auto base = user_stats(engine::from_partitions(s, parts), LocalClock{});
    std::mt19937 rng(5);
    for (int k = 0; k < 5; ++k) {
        std::shuffle(parts.begin(), parts.end(), rng);
        CHECK(user_stats(engine::from_partitions(s, parts), LocalClock{}) == base);
    }
}

TEST_CASE("filter users examples") {
    engine::Session s;
    std::vector<Ping> pings = {{"one", at("2023-01-01"), 0, 0, {}},
                               {"two", at("2023-01-01"), 0, 0, {}},
                               {"two", at("2023-01-02"), 0, 0, {}}};
    auto ds = engine::from_vector(s, pings, 2);
    const auto st = user_stats(ds, LocalClock{});

    UserFilterCriteria c;
    c.min_active_days = 2;
    auto kept = engine::collect(filter_users(ds, st, c)).get();
    CHECK(counts_by_user(kept) == std::map<std::string, std::size_t>{{"two", 2}});

    CHECK(engine::collect(filter_users(ds, st, UserFilterCriteria{})).get() == pings);

    std::vector<UserStats> partial = {st[1]};
    CHECK_THROWS_WITH(engine::collect(filter_users(ds, partial, c)).get(), doctest::Contains("'one'"));

    UserFilterCriteria bad;
    bad.min_avg_pings_per_day = -1;
    CHECK_THROWS_AS(filter_users(ds, st, bad), ConfigError);
}

TEST_CASE("filter users matches a per-user scan for random thresholds") {
    const auto pings = synthetic(200, 30'000, 21);
    const auto before = counts_by_user(pings);
    engine::Session s;
    auto ds = engine::from_vector(s, pings, 8);
    const auto st = user_stats(ds, LocalClock{});
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        UserFilterCriteria c;
        if (rng() % 2) c.min_active_days = static_cast<std::uint32_t>(rng() % 40);
        if (rng() % 2) c.min_total_pings = rng() % 400;
        if (rng() % 2) c.min_avg_pings_per_day = static_cast<double>(rng() % 100) / 10.0;
        if (rng() % 2) c.min_span_days = static_cast<std::uint32_t>(rng() % 100);

        std::set<std::string> expected;
        for (const auto& [u, o] : naive_stats(pings, 0)) {
            const bool ok = (!c.min_active_days || o.active_days >= *c.min_active_days) &&
                            (!c.min_total_pings || o.total_pings >= *c.min_total_pings) &&
                            (!c.min_avg_pings_per_day || o.avg_pings_per_active_day >= *c.min_avg_pings_per_day) &&
                            (!c.min_span_days || o.span_days >= *c.min_span_days);
            if (ok) expected.insert(u);
        }
        const auto after = counts_by_user(engine::collect(filter_users(ds, st, c)).get());
        std::set<std::string> survivors;
        for (const auto& [u, n] : after) {
            survivors.insert(u);
            CHECK(n == before.at(u));
        }
        CHECK(survivors == expected);
    }
}

TEST_CASE("user stats csv") {
    std::ostringstream os;
    write_user_stats_csv(os, {{"a,b", 3, 2, 3, 1.5}});
    CHECK(os.str() == "user_id,total_pings,active_days,span_days,avg_pings_per_active_day\n\"a,b\",3,2,3,1.5\n");
}
