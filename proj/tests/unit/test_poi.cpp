#include <doctest.h>

#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "drmob/errors.hpp"
#include "drmob/poi.hpp"
#include "drmob/spatial.hpp"
#include "support/synth.hpp"
#include "support/temp_dir.hpp"

using namespace drmob;
using namespace drmob::testing;

namespace {

const LonLat kPlaza{-99.1332, 19.4326};

EpochSeconds at(LocalDate d, int hour, int minute = 0) { return from_local(d, hour, minute, 0, LocalClock{}); }

EventConfig two_week_event(LocalDate day0, int baseline_days = 14, int observation_days = 7) {
    EventConfig e;
    e.event_time = at(LocalDate{day0.days + baseline_days}, 0);
    e.baseline = TimeWindow(at(day0, 0), e.event_time);
    e.observation = TimeWindow(e.event_time, at(LocalDate{day0.days + baseline_days + observation_days}, 0));
    return e;
}

}  // namespace

TEST_CASE("poi: a ping 50 m from a 100 m POI counts one visitor, repeats do not add") {
    engine::Session s;
    auto pois = std::make_shared<const PoiSet>(std::vector<PointOfInterest>{{"plaza", kPlaza, 100}});
    const LocalDate d = *parse_date("2023-03-01");
    const LonLat near = offset_m(kPlaza, 50, 0);
    const LonLat far = offset_m(kPlaza, 150, 0);
    std::vector<Ping> pings;
    for (int i = 0; i < 5; ++i) pings.push_back({"alice", at(d, 9 + i), near.lat, near.lon, std::nullopt});
    pings.push_back({"bob", at(d, 12), far.lat, far.lon, std::nullopt});

    const auto rows = daily_visits(engine::from_vector(s, pings, 3), pois, LocalClock{});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0] == VisitRow{"plaza", d, 1});
}

TEST_CASE("poi: radius is inclusive and exact") {
    PoiSet set({{"a", kPlaza, 100}});
    std::vector<std::size_t> hits;
    const LonLat edge = offset_m(kPlaza, 0, 99.999);
    set.within(edge.lon, edge.lat, hits);
    CHECK(hits.size() == 1);
    const LonLat out = offset_m(kPlaza, 0, 100.01);
    set.within(out.lon, out.lat, hits);
    CHECK(hits.empty());
}

TEST_CASE("poi: grid index agrees with a full scan") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> lon(-99.2, -99.0), lat(19.3, 19.5), radius(20, 900);
    std::vector<PointOfInterest> list;
    for (int i = 0; i < 20; ++i) list.push_back({"p" + std::to_string(i), {lon(rng), lat(rng)}, radius(rng)});
    // High-latitude and antimeridian POIs exercise the fallback list.
    list.push_back({"north", {10.0, 88.999}, 500});
    list.push_back({"dateline", {179.9999, 0.0}, 300});
    PoiSet set(list);

    std::vector<std::size_t> fast, slow;
    std::size_t total_hits = 0;
    for (int i = 0; i < 10'000; ++i) {
        const double x = lon(rng), y = lat(rng);
        set.within(x, y, fast);
        // independent oracle: naive double loop over the raw list
        slow.clear();
        for (std::size_t j = 0; j < list.size(); ++j)
            if (haversine_m(x, y, list[j].location.lon, list[j].location.lat) <= list[j].radius_m) slow.push_back(j);
        REQUIRE(fast == slow);
        total_hits += fast.size();
    }
    CHECK(total_hits > 100);

    for (LonLat q : {LonLat{10.0, 89.0}, LonLat{-179.9999, 0.0}, LonLat{179.998, 0.0}}) {
        set.within(q.lon, q.lat, fast);
        set.within_brute_force(q.lon, q.lat, slow);
        CHECK(fast == slow);
        CHECK(fast.size() == 1);
    }
}

TEST_CASE("poi: daily visits match a naive recomputation at any parallelism") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> lon(-99.3, -98.9), lat(19.2, 19.6);
    std::vector<PointOfInterest> list;
    for (int i = 0; i < 20; ++i) list.push_back({"poi" + std::to_string(i), {lon(rng), lat(rng)}, 3000});
    auto pois = std::make_shared<const PoiSet>(list);
    const auto pings = random_corpus(300, 20'000, 11);
    const LocalClock clock(-360);

    std::map<std::pair<std::string, std::int32_t>, std::set<std::string>> naive;
    for (const auto& p : pings)
        for (const auto& poi : list)
            if (haversine_m(p.lon, p.lat, poi.location.lon, poi.location.lat) <= poi.radius_m)
                naive[{poi.poi_id, local_date(p.timestamp, clock).days}].insert(p.user_id);
    std::vector<VisitRow> expected;
    for (const auto& [key, users] : naive) expected.push_back({key.first, LocalDate{key.second}, users.size()});
    REQUIRE(!expected.empty());

    for (std::size_t workers : {1, 4}) {
        engine::EngineConfig ec;
        ec.worker_count = workers;
        engine::Session s{ec};
        CHECK(daily_visits(engine::from_vector(s, pings, 7), pois, clock) == expected);
    }
}

TEST_CASE("poi: rate change against the baseline") {
    const LocalDate day0 = *parse_date("2023-03-01");
    const EventConfig event = two_week_event(day0);
    const std::vector<PointOfInterest> list{{"market", kPlaza, 100}, {"school", kPlaza, 50}, {"clinic", kPlaza, 80}};
    std::vector<VisitRow> visits;
    for (int d = 0; d < 14; ++d) visits.push_back({"market", LocalDate{day0.days + d}, 10});
    visits.push_back({"market", LocalDate{day0.days + 14}, 5});
    for (int d = 0; d < 14; ++d) visits.push_back({"school", LocalDate{day0.days + d}, 8u + d % 2 * 4});
    visits.push_back({"clinic", LocalDate{day0.days + 15}, 12});

    SUBCASE("halved attendance is -50%") {
        const auto rows = visit_rate_change(visits, list, event, LocalClock{}, 0);
        REQUIRE(rows.size() == 3 * 7);
        const auto& first_market =
            *std::find_if(rows.begin(), rows.end(), [](const VisitChange& r) { return r.poi_id == "market"; });
        CHECK(first_market.date == LocalDate{day0.days + 14});
        CHECK(first_market.visitors == 5);
        CHECK(first_market.baseline_mean == 10.0);
        REQUIRE(first_market.pct_change);
        CHECK(*first_market.pct_change == doctest::Approx(-0.5).epsilon(1e-12));
        CHECK_FALSE(first_market.z_score);  // constant baseline
    }
    SUBCASE("closure reads as -100%") {
        const auto rows = visit_rate_change(visits, list, event, LocalClock{}, 0);
        std::size_t closed = 0;
        for (const auto& r : rows)
            if (r.poi_id == "school") {
                REQUIRE(r.pct_change);
                CHECK(*r.pct_change == -1.0);
                REQUIRE(r.z_score);
                CHECK(*r.z_score < 0);
                ++closed;
            }
        CHECK(closed == 7);
    }
    SUBCASE("never visited in the baseline has no percentage") {
        const auto rows = visit_rate_change(visits, list, event, LocalClock{}, 0);
        for (const auto& r : rows)
            if (r.poi_id == "clinic") {
                CHECK(r.baseline_mean == 0.0);
                CHECK_FALSE(r.pct_change);
                CHECK_FALSE(r.z_score);
            }
    }
    SUBCASE("small counts are suppressed") {
        const auto rows = visit_rate_change(visits, list, event, LocalClock{}, 10);
        REQUIRE(rows.size() == 1);
        CHECK(rows[0].poi_id == "clinic");
        CHECK(rows[0].visitors == 12);
    }
    SUBCASE("short baseline is rejected") {
        CHECK_THROWS_AS(visit_rate_change(visits, list, two_week_event(day0, 6), LocalClock{}, 0), ConfigError);
    }
}

TEST_CASE("poi: validation and loading") {
    CHECK_THROWS_AS(PoiSet({{"a", kPlaza, 100}, {"a", kPlaza, 50}}), DataError);
    CHECK_THROWS_AS(PoiSet({{"a", kPlaza, 0}}), DataError);
    CHECK_THROWS_AS(PoiSet({{"a", {200, 0}, 10}}), DataError);

    TempDir dir;
    const auto path = dir.path() / "pois.csv";
    std::ofstream(path) << "poi_id,lon,lat,radius_m\nmarket,-99.1,19.4,250\nschool,-99.2,19.5,\n";
    const auto list = load_pois(path, 100);
    REQUIRE(list.size() == 2);
    CHECK(list[0].radius_m == 250);
    CHECK(list[1].radius_m == 100);
    CHECK(list[1].location == LonLat{-99.2, 19.5});

    std::ofstream(path) << "poi_id,lon,lat\nx,-99.1,19.4\nx,-99.2,19.5\n";
    CHECK_THROWS_AS(load_pois(path, 100), DataError);
    std::ofstream(path) << "id,x,y\n";
    CHECK_THROWS_AS(load_pois(path, 100), DataError);
}

TEST_CASE("poi: CSV output") {
    std::ostringstream os;
    write_visits_csv(os, {{"a", *parse_date("2023-03-01"), 3}, {"b", *parse_date("2023-03-01"), 12}}, 10);
    CHECK(os.str() == "poi_id,date,unique_visitors\nb,2023-03-01,12\n");
    std::ostringstream ch;
    write_visit_change_csv(ch, {{"a", *parse_date("2023-03-02"), 5, 10.0, -0.5, std::nullopt}});
    CHECK(ch.str() == "poi_id,date,visitors,baseline_mean,pct_change,z_score\na,2023-03-02,5,10,-0.5,\n");
}
