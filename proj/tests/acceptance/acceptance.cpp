// Acceptance suite: one PASS/FAIL line per criterion. Run with criterion
// numbers as arguments, or none for all of them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "drmob/cli.hpp"
#include "drmob/displacement.hpp"
#include "drmob/homework.hpp"
#include "drmob/ingest.hpp"
#include "drmob/landuse.hpp"
#include "drmob/poi.hpp"
#include "drmob/spatial.hpp"
#include "drmob/stats.hpp"
#include "support/synth.hpp"
#include "support/temp_dir.hpp"

using namespace drmob;
using namespace drmob::testing;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kScalingMaxRatio = 1.0 / 3.0;
constexpr double kScalingBudgetS = 600.0;
constexpr std::size_t kScalingPings = 5'000'000;
constexpr std::size_t kMemoryRows = 2'000'000;
constexpr std::size_t kMemoryPartitionRows = 10'000;
constexpr double kBlobModeToMeanM = 50.0;
constexpr double kBlobModeToOracleM = 15.0;  // 10 m lattice: nearest node within 7.1 m, plus convergence
constexpr double kAnchorRadiusM = 150.0;
constexpr double kAnchorRecovery = 0.99;
constexpr double kHaversineRelTol = 1e-6;
constexpr std::size_t kK = 10;

struct Result {
    bool pass = false;
    std::string detail;
};

struct Check {
    bool ok = true;
    std::ostringstream why;
    void expect(bool cond, const std::string& what) {
        if (!cond) {
            if (!ok) why << "; ";
            why << what;
            ok = false;
        }
    }
    Result result(const std::string& summary) const { return {ok, ok ? summary : why.str()}; }
};

// ---------------------------------------------------------------------------
// Independent reference computations.

constexpr double kR = 6'371'000.0;

double ref_haversine(double lon1, double lat1, double lon2, double lat2) {
    const double r = std::numbers::pi / 180.0;
    const double a = std::pow(std::sin((lat2 - lat1) * r / 2), 2) +
                     std::cos(lat1 * r) * std::cos(lat2 * r) * std::pow(std::sin((lon2 - lon1) * r / 2), 2);
    return 2 * kR * std::asin(std::min(1.0, std::sqrt(a)));
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) { return a / b - ((a % b != 0) && ((a < 0) != (b < 0))); }

std::int32_t ref_local_day(EpochSeconds t, int offset_min) {
    return static_cast<std::int32_t>(floor_div(t + offset_min * 60LL, 86400));
}

int ref_hour_of_week(EpochSeconds t, int offset_min) {
    const std::int64_t local = t + offset_min * 60LL;
    const std::int64_t day = floor_div(local, 86400);
    const int weekday = static_cast<int>(((day + 3) % 7 + 7) % 7);  // 1970-01-01 was a Thursday
    const int hour = static_cast<int>((local - day * 86400) / 3600);
    return weekday * 24 + hour;
}

bool ref_in_rings(const std::vector<Ring>& rings, double x, double y) {
    bool inside = false;
    for (const auto& ring : rings)
        for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
            const auto& a = ring[i];
            const auto& b = ring[j];
            if ((a.lat > y) != (b.lat > y) && x < (b.lon - a.lon) * (y - a.lat) / (b.lat - a.lat) + a.lon)
                inside = !inside;
        }
    return inside;
}

/// First tile in tile_id order whose rings contain the point.
std::optional<std::string> ref_locate(const Tessellation& tess, double lon, double lat) {
    std::optional<std::string> best;
    for (const auto& t : tess.tiles())
        if ((!best || t.tile_id < *best) && ref_in_rings(t.rings, lon, lat)) best = t.tile_id;
    return best;
}

auto ping_key(const Ping& p) { return std::tie(p.user_id, p.timestamp, p.lat, p.lon, p.accuracy_m); }
void sort_pings(std::vector<Ping>& v) {
    std::sort(v.begin(), v.end(), [](const Ping& a, const Ping& b) { return ping_key(a) < ping_key(b); });
}

engine::EngineConfig engine_config(std::size_t workers, std::uint64_t chunk_bytes = 256 << 10) {
    engine::EngineConfig c;
    c.worker_count = workers;
    c.chunk_bytes = chunk_bytes;
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    std::vector<std::string_view> f;
    while (std::getline(in, line)) {
        split_csv_line(line, ',', f);
        rows.emplace_back(f.begin(), f.end());
    }
    return rows;
}

int run_cli(const std::vector<std::string>& args, std::string* err_text = nullptr) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    if (err_text) *err_text = err.str();
    return code;
}

std::string event_toml(const Scenario& sc) {
    std::ostringstream os;
    os.precision(17);
    os << "[clock]\nutc_offset_minutes = " << sc.clock.utc_offset_minutes() << "\n"
       << "[event]\ntime = " << sc.event_time << "\nepicenter = [" << sc.epicenter.lon << ", " << sc.epicenter.lat
       << "]\nbaseline_start = " << sc.baseline.start() << "\nobservation_end = " << sc.observation.end() << "\n";
    return os.str();
}

std::string fmt(double v, int prec = 3) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(prec);
    os << v;
    return os.str();
}

// ---------------------------------------------------------------------------

Result oracle_equivalence() {
    const int offset = -360;
    const LocalClock clock(offset);
    const BBox box{-99.3, 19.2, -98.9, 19.6};
    const auto corpus = random_corpus(500, 100'000, 42, box);
    TempDir dir;
    write_pings_csv(dir / "pings.csv", corpus);
    auto tess = std::make_shared<const Tessellation>(make_grid(box, 2000));

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> lon(box.min_lon, box.max_lon), lat(box.min_lat, box.max_lat),
        radius(300, 1500);
    std::vector<PointOfInterest> poi_list;
    for (int i = 0; i < 20; ++i) poi_list.push_back({"poi" + std::to_string(i), {lon(rng), lat(rng)}, radius(rng)});
    auto pois = std::make_shared<const PoiSet>(poi_list);

    FilterSpec spec;
    spec.bbox = BBox{-99.25, 19.25, -99.0, 19.55};
    spec.time_window = TimeWindow(1'678'000'000, 1'679'500'000);
    spec.max_accuracy_m = 40;
    spec.user_allowlist.emplace();
    for (std::size_t u = 0; u < 500; u += 2) spec.user_allowlist->insert(user_name(u));
    UserFilterCriteria crit;
    crit.min_active_days = 20;
    crit.min_total_pings = 150;

    // Naive single-pass references.
    struct Acc {
        std::uint64_t n = 0;
        std::set<std::int32_t> days;
    };
    std::map<std::string, Acc> per_user;
    for (const auto& p : corpus) {
        auto& a = per_user[p.user_id];
        ++a.n;
        a.days.insert(ref_local_day(p.timestamp, offset));
    }
    std::vector<UserStats> ref_stats;
    for (const auto& [u, a] : per_user)
        ref_stats.push_back({u, a.n, static_cast<std::uint32_t>(a.days.size()),
                             static_cast<std::uint32_t>(*a.days.rbegin() - *a.days.begin() + 1),
                             static_cast<double>(a.n) / static_cast<double>(a.days.size())});

    std::vector<Ping> ref_filtered;
    for (const auto& p : corpus) {
        const bool in_box = p.lon >= spec.bbox->min_lon && p.lon <= spec.bbox->max_lon &&
                            p.lat >= spec.bbox->min_lat && p.lat <= spec.bbox->max_lat;
        const bool in_time = p.timestamp >= spec.time_window->start() && p.timestamp < spec.time_window->end();
        const bool accurate = !p.accuracy_m || *p.accuracy_m <= *spec.max_accuracy_m;
        if (in_box && in_time && accurate && spec.user_allowlist->count(p.user_id)) ref_filtered.push_back(p);
    }
    sort_pings(ref_filtered);

    std::vector<Ping> ref_users;
    for (const auto& p : corpus) {
        const auto& a = per_user[p.user_id];
        if (a.days.size() >= 20 && a.n >= 150) ref_users.push_back(p);
    }
    sort_pings(ref_users);

    std::map<std::string, std::array<double, 168>> ref_ping_prof;
    std::map<std::string, std::array<std::set<std::string>, 168>> ref_user_sets;
    for (const auto& p : corpus) {
        auto tile = ref_locate(*tess, p.lon, p.lat);
        if (!tile) continue;
        const int h = ref_hour_of_week(p.timestamp, offset);
        ref_ping_prof[*tile][h] += 1;
        ref_user_sets[*tile][h].insert(p.user_id);
    }

    std::map<std::pair<std::string, std::int32_t>, std::set<std::string>> ref_visit_sets;
    for (const auto& p : corpus)
        for (const auto& poi : poi_list)
            if (ref_haversine(p.lon, p.lat, poi.location.lon, poi.location.lat) <= poi.radius_m)
                ref_visit_sets[{poi.poi_id, ref_local_day(p.timestamp, offset)}].insert(p.user_id);
    std::vector<VisitRow> ref_visits;
    for (const auto& [k, users] : ref_visit_sets) ref_visits.push_back({k.first, LocalDate{k.second}, users.size()});

    Check c;
    for (std::size_t workers : {1u, 8u}) {
        const std::string w = " (workers=" + std::to_string(workers) + ")";
        engine::Session s(engine_config(workers));
        auto input = read_pings(s, {dir / "pings.csv"}, PingSchemaConfig{});
        auto stats = user_stats(input.dataset, clock);
        c.expect(stats == ref_stats, "user_stats differs" + w);

        auto filtered = engine::collect(filter_pings(input.dataset, spec)).get();
        sort_pings(filtered);
        c.expect(filtered == ref_filtered, "filter_pings differs" + w);

        auto kept = engine::collect(filter_users(input.dataset, stats, crit)).get();
        sort_pings(kept);
        c.expect(kept == ref_users, "filter_users differs" + w);

        for (auto mode : {CountMode::pings, CountMode::distinct_users}) {
            const auto prof = tile_activity_profiles(input.dataset, tess, clock, mode);
            bool same = prof.size() == ref_ping_prof.size();
            for (const auto& p : prof) {
                if (!same) break;
                auto it = ref_ping_prof.find(p.tile_id);
                if (it == ref_ping_prof.end()) {
                    same = false;
                    break;
                }
                double total = 0;
                for (int h = 0; h < 168; ++h) {
                    const double want = mode == CountMode::pings ? it->second[h]
                                                                 : static_cast<double>(ref_user_sets[p.tile_id][h].size());
                    same = same && p.bins[h] == want;
                    total += want;
                }
                same = same && p.total_events == static_cast<std::uint64_t>(total);
            }
            c.expect(same, std::string("tile_activity_profiles (") +
                               (mode == CountMode::pings ? "pings" : "distinct_users") + ") differs" + w);
        }

        c.expect(daily_visits(input.dataset, pois, clock) == ref_visits, "daily_visits differs" + w);
        c.expect(input.report->totals().emitted == corpus.size(), "ingest row count differs" + w);
    }
    return c.result("5 operations identical to naive references at workers 1 and 8 (" +
                    std::to_string(ref_stats.size()) + " users, " + std::to_string(ref_filtered.size()) +
                    " filtered pings, " + std::to_string(ref_visits.size()) + " visit rows)");
}

Result engine_determinism() {
    const auto sc = disaster_scenario();
    TempDir dir;
    write_pings_csv(dir / "pings.csv", sc.pings);
    spit(dir / "run.toml", "[input]\npaths = \"pings.csv\"\n" + event_toml(sc) +
                               "[grouping]\nkind = \"epicenter_rings\"\n"
                               "[tessellation]\ngrid_bbox = [-99.5, 18.0, -97.0, 20.0]\ngrid_cell_m = 5000\n"
                               "[engine]\nchunk_mb = 1\n");
    Check c;
    for (std::string w : {"1", "8"}) {
        std::string err;
        const int code = run_cli({"displacement", "--config", (dir / "run.toml").string(), "--workers", w, "--out",
                                  (dir / ("w" + w)).string()},
                                 &err);
        c.expect(code == 0, "run at workers=" + w + " exited " + std::to_string(code) + ": " + err);
    }
    if (!c.ok) return c.result("");
    std::size_t compared = 0, bytes = 0;
    for (const auto& e : fs::directory_iterator(dir / "w1")) {
        const auto name = e.path().filename().string();
        if (name == "manifest.toml") continue;
        const auto a = slurp(e.path());
        c.expect(fs::exists(dir / "w8" / name) && a == slurp(dir / "w8" / name), name + " differs");
        ++compared;
        bytes += a.size();
    }
    std::size_t other = 0;
    for (const auto& e : fs::directory_iterator(dir / "w8")) other += e.path().filename() != "manifest.toml";
    c.expect(other == compared, "different file sets");
    c.expect(compared >= 5, "expected at least 5 output files");
    c.expect(read_csv(dir / "w1" / "rates.csv").size() > 1, "rates.csv is empty");
    return c.result(std::to_string(compared) + " output files (" + std::to_string(bytes) +
                    " bytes) byte-identical at workers 1 and 8");
}

Result scaling_bound() {
    const auto t_begin = std::chrono::steady_clock::now();
    TempDir dir;
    {
        const auto corpus = random_corpus(100'000, kScalingPings, 99);
        write_pings_csv(dir / "pings.csv", corpus);
    }
    const LocalClock clock(-360);
    auto timed = [&](std::size_t workers, std::vector<UserStats>& out) {
        const auto t0 = std::chrono::steady_clock::now();
        engine::Session s(engine_config(workers, 32 << 20));
        auto input = read_pings(s, {dir / "pings.csv"}, PingSchemaConfig{});
        out = user_stats(input.dataset, clock);
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    std::vector<UserStats> one, eight;
    const double t1 = timed(1, one);
    const double t8 = timed(8, eight);
    const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();

    Check c;
    c.expect(one == eight, "results differ between worker counts");
    const std::string timing = "1 worker " + fmt(t1, 2) + " s, 8 workers " + fmt(t8, 2) + " s, ratio " +
                               fmt(t8 / t1, 3) + " (bound " + fmt(kScalingMaxRatio, 3) + "), benchmark " +
                               fmt(total, 1) + " s, hardware threads " +
                               std::to_string(std::thread::hardware_concurrency());
    c.expect(t8 <= t1 * kScalingMaxRatio, timing);
    c.expect(total <= kScalingBudgetS, "benchmark took " + fmt(total, 1) + " s");
    return c.result(timing);
}

Result memory_bound() {
    TempDir dir;
    write_pings_csv(dir / "pings.csv", random_corpus(2000, kMemoryRows, 5));
    const LocalClock clock(-360);
    Check c;
    std::string detail;
    for (std::size_t workers : {1u, 8u}) {
        engine::EngineConfig cfg = engine_config(workers, 8 << 20);
        cfg.max_partition_rows = kMemoryPartitionRows;
        engine::Session s(cfg);
        auto input = read_pings(s, {dir / "pings.csv"}, PingSchemaConfig{});
        FilterSpec spec;
        spec.bbox = BBox{-99.3, 19.2, -99.0, 19.6};
        auto ds = filter_pings(input.dataset, spec);
        auto tess = std::make_shared<const Tessellation>(make_grid({-99.3, 19.2, -98.9, 19.6}, 2000));

        HomeWorkConfig hw;
        hw.clock = clock;
        const auto homes = infer_home_work(ds, hw, tess);
        const auto stats = user_stats(ds, clock);
        const auto prof = tile_activity_profiles(ds, tess, clock);
        const auto parts = engine::partition_sizes(input.dataset).get();

        const auto peak = s.runtime().tracker().peak_rows();
        const auto bound = static_cast<std::int64_t>(workers * kMemoryPartitionRows);
        const std::string w = "workers=" + std::to_string(workers);
        c.expect(input.report->totals().read == kMemoryRows, w + ": read " + std::to_string(input.report->totals().read));
        c.expect(peak > 0 && peak <= bound, w + ": peak " + std::to_string(peak) + " > bound " + std::to_string(bound));
        c.expect(s.runtime().tracker().live_rows() == 0, w + ": rows still materialized");
        c.expect(homes.rows.size() == stats.size() && stats.size() > 1900 && !prof.empty(), w + ": incomplete results (" + std::to_string(homes.rows.size()) + " homes, " + std::to_string(stats.size()) + " users, " + std::to_string(prof.size()) + " profiles)");
        detail += (detail.empty() ? "" : "; ") + w + " peak " + std::to_string(peak) + " <= " + std::to_string(bound) +
                  " over " + std::to_string(parts.size()) + " input partitions";
    }
    return c.result(detail);
}

Result mean_shift_correctness() {
    Check c;
    std::mt19937_64 rng(31);
    const LonLat origin{-99.13, 19.43};
    MeanShiftParams params;  // bandwidth 300 m
    const double h = params.bandwidth_m;
    double worst_mean = 0, worst_oracle = 0;
    for (int trial = 0; trial < 5; ++trial) {
        std::normal_distribution<double> g(0, 30);
        std::vector<LonLat> pts;
        std::array<std::vector<std::pair<double, double>>, 2> local;
        for (int b = 0; b < 2; ++b)
            for (int i = 0; i < 60; ++i) {
                const double e = b * 2000.0 + g(rng), n = g(rng);
                local[b].emplace_back(e, n);
                pts.push_back(offset_m(origin, e, n));
            }
        const auto modes = mean_shift(std::span<const LonLat>(pts), params);
        c.expect(modes.size() == 2, "trial " + std::to_string(trial) + ": " + std::to_string(modes.size()) + " modes");
        if (modes.size() != 2) continue;
        for (int b = 0; b < 2; ++b) {
            double me = 0, mn = 0;
            for (auto [e, n] : local[b]) me += e / 60, mn += n / 60;
            const LonLat blob_mean = offset_m(origin, me, mn);
            const auto& m = ref_haversine(modes[0].center.lon, modes[0].center.lat, blob_mean.lon, blob_mean.lat) <
                                    ref_haversine(modes[1].center.lon, modes[1].center.lat, blob_mean.lon, blob_mean.lat)
                                ? modes[0]
                                : modes[1];
            const double d_mean = ref_haversine(m.center.lon, m.center.lat, blob_mean.lon, blob_mean.lat);
            // Oracle: maximise the Epanechnikov density (the flat kernel's shadow) on a 10 m lattice.
            double best = -1;
            std::pair<double, double> arg{0, 0};
            for (double e = b * 2000.0 - 150; e <= b * 2000.0 + 150; e += 10)
                for (double n = -150; n <= 150; n += 10) {
                    double f = 0;
                    for (const auto& q : local[0]) f += std::max(0.0, 1 - (std::pow(q.first - e, 2) + std::pow(q.second - n, 2)) / (h * h));
                    for (const auto& q : local[1]) f += std::max(0.0, 1 - (std::pow(q.first - e, 2) + std::pow(q.second - n, 2)) / (h * h));
                    if (f > best) best = f, arg = {e, n};
                }
            const LonLat peak = offset_m(origin, arg.first, arg.second);
            const double d_oracle = ref_haversine(m.center.lon, m.center.lat, peak.lon, peak.lat);
            worst_mean = std::max(worst_mean, d_mean);
            worst_oracle = std::max(worst_oracle, d_oracle);
        }
    }
    c.expect(worst_mean <= kBlobModeToMeanM, "mode " + fmt(worst_mean, 1) + " m from blob mean");
    c.expect(worst_oracle <= kBlobModeToOracleM, "mode " + fmt(worst_oracle, 1) + " m from density oracle");

    const std::vector<LonLat> single{origin};
    const std::vector<LonLat> same(25, origin);
    const auto m1 = mean_shift(std::span<const LonLat>(single), params);
    const auto m2 = mean_shift(std::span<const LonLat>(same), params);
    c.expect(m1.size() == 1 && m1[0].member_count == 1, "single point does not give one mode");
    c.expect(m2.size() == 1 && m2[0].member_count == 25 &&
                 ref_haversine(m2[0].center.lon, m2[0].center.lat, origin.lon, origin.lat) < 1e-6,
             "identical points do not give one mode at the point");
    return c.result("2 modes in 5 trials; worst distance to blob mean " + fmt(worst_mean, 1) + " m, to lattice oracle " +
                    fmt(worst_oracle, 1) + " m; degenerate inputs give 1 mode");
}

Result home_work_recovery() {
    const auto sc = routine_scenario(200, 2024, 30.0);
    auto tess = std::make_shared<const Tessellation>(make_grid({-98.6, 18.6, -97.8, 19.4}, 1000));
    HomeWorkConfig cfg;
    cfg.clock = sc.clock;
    cfg.window = sc.baseline;
    engine::Session s(engine_config(4));
    const auto table = infer_home_work(engine::from_vector(s, sc.pings, 8), cfg, tess);

    std::size_t homes_ok = 0, works_ok = 0;
    for (const auto& u : sc.users) {
        const auto* r = table.find(u.user_id);
        auto good = [&](const std::optional<Anchor>& a, LonLat planted) {
            return a && ref_haversine(a->point.lon, a->point.lat, planted.lon, planted.lat) <= kAnchorRadiusM &&
                   a->tile_id == ref_locate(*tess, planted.lon, planted.lat);
        };
        if (r && good(r->home, u.home)) ++homes_ok;
        if (r && good(r->work, u.work)) ++works_ok;
    }
    const double n = static_cast<double>(sc.users.size());
    Check c;
    const std::string detail = "homes " + std::to_string(homes_ok) + "/200, works " + std::to_string(works_ok) +
                               "/200 within " + fmt(kAnchorRadiusM, 0) + " m and in the planted tile";
    c.expect(homes_ok / n >= kAnchorRecovery && works_ok / n >= kAnchorRecovery, detail);
    return c.result(detail);
}

Result displacement_exactness() {
    const auto sc = disaster_scenario();  // 1000 users, 200 relocated 8 km
    std::size_t relocated = 0;
    for (const auto& u : sc.users) relocated += u.relocated.has_value();

    engine::Session s(engine_config(8));
    auto ds = engine::from_vector(s, sc.pings, 16);
    HomeWorkConfig hw;
    hw.clock = sc.clock;
    hw.window = sc.baseline;
    auto tess = std::make_shared<const Tessellation>(make_grid({-99.5, 18.0, -97.0, 20.0}, 5000));
    auto homes = std::make_shared<const HomeTable>(infer_home_work(ds, hw, tess));
    EventConfig event;
    event.event_time = sc.event_time;
    event.epicenter = sc.epicenter;
    event.baseline = sc.baseline;
    event.observation = sc.observation;
    DisplacementConfig dc;
    dc.clock = sc.clock;
    const auto after = displacement_series(ds, homes, event, dc, SeriesWindow::observation);
    const auto before = displacement_series(ds, homes, event, dc, SeriesWindow::baseline);

    GroupingSpec none;
    GroupingSpec rings;
    rings.kind = GroupingKind::epicenter_rings;
    rings.ring_edges_km = {10, 50};
    const auto overall = displacement_rates(after.records, group_users(*homes, *tess, none, event));
    const auto pre = displacement_rates(before.records, group_users(*homes, *tess, none, event));
    const auto by_ring = displacement_rates(after.records, group_users(*homes, *tess, rings, event));

    Check c;
    c.expect(relocated * 5 == sc.users.size(), "scenario does not relocate exactly 20%");
    c.expect(overall.size() == 14, "expected 14 post-event dates, got " + std::to_string(overall.size()));
    for (const auto& r : overall)
        c.expect(r.rate == 0.2 && r.observed_users == 1000,
                 format_date(r.date) + " post-event rate " + fmt(r.rate, 6));
    c.expect(pre.size() == 14, "expected 14 pre-event dates, got " + std::to_string(pre.size()));
    for (const auto& r : pre) c.expect(r.rate == 0.0, format_date(r.date) + " pre-event rate " + fmt(r.rate, 6));
    const std::map<std::string, double> planted = {{"0-10km", 0.3}, {"10-50km", 0.15}, {"50km+", 0.1}};
    c.expect(by_ring.size() == 14 * 3, "expected 42 ring rows");
    for (const auto& r : by_ring)
        c.expect(planted.count(r.group_label) && r.rate == planted.at(r.group_label),
                 format_date(r.date) + " " + r.group_label + " rate " + fmt(r.rate, 6));
    return c.result("post-event 0.200 on 14/14 dates, pre-event 0.000 on 14/14, rings 0.300/0.150/0.100 exact");
}

/// Adjusted Rand index from the contingency table.
double adjusted_rand(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    std::map<std::pair<std::size_t, std::size_t>, double> nij;
    std::map<std::size_t, double> ai, bj;
    for (std::size_t i = 0; i < a.size(); ++i) {
        nij[{a[i], b[i]}] += 1;
        ai[a[i]] += 1;
        bj[b[i]] += 1;
    }
    auto c2 = [](double x) { return x * (x - 1) / 2; };
    double sum_ij = 0, sum_a = 0, sum_b = 0;
    for (auto& [k, v] : nij) sum_ij += c2(v);
    for (auto& [k, v] : ai) sum_a += c2(v);
    for (auto& [k, v] : bj) sum_b += c2(v);
    const double expected = sum_a * sum_b / c2(static_cast<double>(a.size()));
    const double max_index = (sum_a + sum_b) / 2;
    return (sum_ij - expected) / (max_index - expected);
}

Result landuse_separation() {
    const LocalClock clock(-360);
    auto tess = std::make_shared<const Tessellation>(make_grid({-99.2, 19.3, -99.05, 19.388}, 2000));
    std::mt19937_64 rng(8);
    std::vector<std::size_t> planted;
    for (std::size_t i = 0; i < tess->size(); ++i) planted.push_back(i % 2);
    std::shuffle(planted.begin(), planted.end(), rng);

    // Commercial: weekday working hours. Residential: evenings, nights, weekends.
    auto weight = [](int archetype, int how) {
        const int day = how / 24, hour = how % 24;
        if (archetype == 0) return (day < 5 && hour >= 9 && hour < 18) ? 1.0 : 0.0;
        return (hour >= 19 || hour < 7 || day >= 5) ? 1.0 : 0.0;
    };
    const EpochSeconds monday = from_local(*parse_date("2023-03-06"), 0, 0, 0, clock);
    std::vector<Ping> pings;
    std::uniform_real_distribution<double> unit(0, 1);
    std::uniform_int_distribution<int> any_hour(0, 167), minute(0, 3599), week(0, 2);
    for (std::size_t t = 0; t < tess->size(); ++t) {
        const auto& bb = tess->tiles()[t].bbox;
        std::vector<double> w(168);
        for (int h = 0; h < 168; ++h) w[h] = weight(static_cast<int>(planted[t]), h);
        std::discrete_distribution<int> hours(w.begin(), w.end());
        for (int i = 0; i < 2000; ++i) {
            const int how = unit(rng) < 0.01 ? any_hour(rng) : hours(rng);
            const double lon = bb.min_lon + (0.1 + 0.8 * unit(rng)) * (bb.max_lon - bb.min_lon);
            const double lat = bb.min_lat + (0.1 + 0.8 * unit(rng)) * (bb.max_lat - bb.min_lat);
            pings.push_back({user_name(static_cast<std::size_t>(i % 50)),
                             monday + week(rng) * 7 * 86400 + how * 3600 + minute(rng), lat, lon, std::nullopt});
        }
    }
    engine::Session s(engine_config(4));
    const auto profiles = normalize_profiles(tile_activity_profiles(engine::from_vector(s, pings, 8), tess, clock));
    const auto clustering = hierarchical_cluster(profiles, 2, Linkage::ward);

    std::vector<std::size_t> truth;
    for (const auto& id : clustering.tile_ids) truth.push_back(planted[tess->find(id) - tess->tiles().data()]);
    const double ari = adjusted_rand(clustering.labels, truth);
    bool monotone = true;
    for (std::size_t i = 1; i < clustering.merge_tree.size(); ++i)
        monotone = monotone && clustering.merge_tree[i].distance >= clustering.merge_tree[i - 1].distance;

    Check c;
    c.expect(tess->size() == 40 && profiles.size() == 40, "expected 40 tiles, got " + std::to_string(profiles.size()));
    c.expect(ari == 1.0, "ARI " + fmt(ari, 6));
    c.expect(monotone, "merge distances decrease");
    return c.result("40 tiles, ARI " + fmt(ari, 3) + ", " + std::to_string(clustering.merge_tree.size()) +
                    " merges with non-decreasing distance");
}

Result spatial_correctness() {
    // Jittered 20x20 lattice with shared vertices: a true tessellation of irregular quads.
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> jit(-0.3, 0.3);
    const int n = 20;
    const double x0 = -99.3, y0 = 19.2, step = 0.01;
    std::vector<std::vector<LonLat>> v(n + 1, std::vector<LonLat>(n + 1));
    for (int i = 0; i <= n; ++i)
        for (int j = 0; j <= n; ++j) {
            const bool border = i == 0 || j == 0 || i == n || j == n;
            v[i][j] = {x0 + step * (j + (border ? 0 : jit(rng))), y0 + step * (i + (border ? 0 : jit(rng)))};
        }
    std::vector<Tile> tiles;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            Tile t;
            t.tile_id = "q" + std::to_string(i * n + j);
            t.rings = {{v[i][j], v[i][j + 1], v[i + 1][j + 1], v[i + 1][j], v[i][j]}};
            tiles.push_back(std::move(t));
        }
    const Tessellation tess(std::move(tiles));

    std::uniform_real_distribution<double> lon(x0 - 0.02, x0 + n * step + 0.02), lat(y0 - 0.02, y0 + n * step + 0.02);
    std::size_t mismatches = 0, located = 0;
    for (int i = 0; i < 10'000; ++i) {
        const double x = lon(rng), y = lat(rng);
        const auto idx = tess.locate(x, y);
        const auto got = idx ? std::optional(tess.tiles()[*idx].tile_id) : std::nullopt;
        mismatches += got != ref_locate(tess, x, y);
        located += got.has_value();
    }

    const double half = std::numbers::pi * kR, degree = std::numbers::pi * kR / 180;
    struct Case {
        const char* name;
        double lon1, lat1, lon2, lat2, want;
    };
    const std::vector<Case> cases = {{"zero", 12.5, -33.0, 12.5, -33.0, 0.0},
                                     {"antipodal", 0, 0, 180, 0, half},
                                     {"pole to pole", 0, 90, 0, -90, half},
                                     {"one degree of latitude", -99, 19, -99, 20, degree},
                                     {"one degree on the equator", 10, 0, 11, 0, degree}};
    Check c;
    c.expect(mismatches == 0, std::to_string(mismatches) + " of 10000 points assigned differently");
    double worst = 0;
    for (const auto& k : cases) {
        const double got = haversine_m(k.lon1, k.lat1, k.lon2, k.lat2);
        const double err = k.want == 0 ? std::abs(got) : std::abs(got - k.want) / k.want;
        worst = std::max(worst, err);
        c.expect(err <= kHaversineRelTol, std::string(k.name) + " relative error " + std::to_string(err));
    }
    return c.result("10000/10000 points agree with the brute-force scan (" + std::to_string(located) +
                    " inside tiles); haversine worst relative error " + std::to_string(worst));
}

Result privacy_suppression() {
    const LocalClock clock(-360);
    const LonLat epicenter{-98.2, 19.0};
    const BBox grid_box{-98.5, 18.8, -97.9, 19.7};
    const auto grid = make_grid(grid_box, 5000);
    auto centre_of_tile = [&](LonLat p) {
        const auto& t = grid.tiles()[*grid.locate(p.lon, p.lat)];
        return std::pair{t.tile_id, LonLat{(t.bbox.min_lon + t.bbox.max_lon) / 2, (t.bbox.min_lat + t.bbox.max_lat) / 2}};
    };
    const auto [h1_tile, h1] = centre_of_tile(offset_m(epicenter, 3000, 1000));
    const auto [w1_tile, w1] = centre_of_tile(offset_m(epicenter, -15000, 0));
    const auto [h2_tile, h2] = centre_of_tile(offset_m(epicenter, 0, 60000));
    const auto [w2_tile, w2] = centre_of_tile(offset_m(h2, 8000, 0));

    const LocalDate day0 = *parse_date("2023-03-01");
    const int baseline_days = 14, observation_days = 14;
    const EpochSeconds event_time = from_local(LocalDate{day0.days + baseline_days}, 0, 0, 0, clock);
    std::mt19937_64 rng(10);
    std::normal_distribution<double> jitter(0, 40);
    std::uniform_real_distribution<double> angle(0, 2 * std::numbers::pi);
    std::vector<Ping> pings;
    auto add_group = [&](const std::string& prefix, std::size_t n, std::size_t relocated, LonLat home, LonLat work) {
        for (std::size_t u = 0; u < n; ++u) {
            const std::string id = prefix + std::to_string(u);
            const double a = angle(rng);
            const LonLat away = offset_m(home, 8000 * std::cos(a), 8000 * std::sin(a));
            for (int d = 0; d < baseline_days + observation_days; ++d) {
                const LocalDate date{day0.days + d};
                const LonLat night = d >= baseline_days && u < relocated ? away : home;
                auto emit = [&](LonLat where, LocalDate dd, int hour) {
                    const LonLat p = offset_m(where, jitter(rng), jitter(rng));
                    pings.push_back({id, from_local(dd, hour, 10, 0, clock), p.lat, p.lon, 5.0});
                };
                emit(night, date, 23);
                emit(night, date.next(), 1);
                emit(night, date.next(), 3);
                if (to_local(from_local(date, 12, 0, 0, clock), clock).weekday < 5) {
                    emit(work, date, 10);
                    emit(work, date, 14);
                }
            }
        }
    };
    add_group("big", 30, 6, h1, w1);
    add_group("small", 4, 1, h2, w2);

    TempDir dir;
    write_pings_csv(dir / "pings.csv", pings);
    std::ostringstream pois;
    pois.precision(17);
    pois << "poi_id,lon,lat,radius_m\npoi_big," << h1.lon << ',' << h1.lat << ",500\npoi_small," << h2.lon << ','
         << h2.lat << ",500\n";
    spit(dir / "pois.csv", pois.str());
    std::ostringstream cfg;
    cfg.precision(17);
    cfg << "[input]\npaths = \"pings.csv\"\n[clock]\nutc_offset_minutes = -360\n"
        << "[event]\ntime = " << event_time << "\nepicenter = [" << epicenter.lon << ", " << epicenter.lat << "]\n"
        << "baseline_start = " << from_local(day0, 0, 0, 0, clock) << "\nobservation_end = "
        << from_local(LocalDate{day0.days + baseline_days + observation_days}, 0, 0, 0, clock) << "\n"
        << "[tessellation]\ngrid_bbox = [" << grid_box.min_lon << ", " << grid_box.min_lat << ", " << grid_box.max_lon
        << ", " << grid_box.max_lat << "]\ngrid_cell_m = 5000\n"
        << "[grouping]\nkind = \"epicenter_rings\"\n[landuse]\nk = 2\n[poi]\npath = \"pois.csv\"\n";
    spit(dir / "run.toml", cfg.str());

    Check c;
    for (const std::string cmd : {"displacement", "anomalies", "od", "poi", "landuse"}) {
        std::string err;
        const int code =
            run_cli({cmd, "--config", (dir / "run.toml").string(), "--out", (dir / cmd).string()}, &err);
        c.expect(code == 0, cmd + " exited " + std::to_string(code) + ": " + err);
    }
    if (!c.ok) return c.result("");

    // Every aggregate CSV: no user-count column below k.
    const std::set<std::string> count_columns = {"observed_users", "users", "unique_visitors", "visitors", "count"};
    const std::set<std::string> unit_records = {"rejects.csv", "user_stats.csv", "home_work.csv"};
    std::size_t files = 0, rows_checked = 0;
    std::map<std::string, std::vector<std::vector<std::string>>> tables;
    for (const std::string cmd : {"displacement", "anomalies", "od", "poi", "landuse"})
        for (const auto& e : fs::directory_iterator(dir / cmd)) {
            const auto name = e.path().filename().string();
            if (e.path().extension() != ".csv" || unit_records.count(name)) continue;
            auto rows = read_csv(e.path());
            tables[cmd + "/" + name] = rows;
            ++files;
            if (rows.empty()) continue;
            for (std::size_t col = 0; col < rows[0].size(); ++col) {
                if (!count_columns.count(rows[0][col])) continue;
                for (std::size_t r = 1; r < rows.size(); ++r, ++rows_checked)
                    c.expect(std::stoul(rows[r][col]) >= kK, cmd + "/" + name + " row " + std::to_string(r) + " has " +
                                                                 rows[0][col] + " = " + rows[r][col]);
            }
        }

    auto any_row = [&](const std::string& table, const std::function<bool(const std::vector<std::string>&)>& pred) {
        const auto& rows = tables[table];
        return std::any_of(rows.begin() + (rows.empty() ? 0 : 1), rows.end(), pred);
    };
    auto has = [](std::size_t col, const std::string& v) {
        return [col, v](const std::vector<std::string>& r) { return r.size() > col && r[col] == v; };
    };
    // Planted small groups are absent, planted large groups present.
    c.expect(!any_row("displacement/rates.csv", has(1, "50km+")), "small ring published in rates.csv");
    c.expect(any_row("displacement/rates.csv", has(1, "0-10km")), "large ring missing from rates.csv");
    c.expect(!any_row("displacement/baseline_rates.csv", has(1, "50km+")), "small ring published in baseline_rates.csv");
    c.expect(!any_row("anomalies/anomalies.csv", has(0, h2_tile)), "small tile published in anomalies.csv");
    c.expect(any_row("anomalies/anomalies.csv", has(0, h1_tile)), "large tile missing from anomalies.csv");
    c.expect(!any_row("od/od.csv", has(0, h2_tile)), "small OD pair published");
    c.expect(any_row("od/od.csv", [&](const auto& r) { return r[0] == h1_tile && r[1] == w1_tile; }),
             "large OD pair missing");
    c.expect(!any_row("poi/visits.csv", has(0, "poi_small")), "small POI published in visits.csv");
    c.expect(any_row("poi/visits.csv", has(0, "poi_big")), "large POI missing from visits.csv");
    c.expect(!any_row("poi/visit_change.csv", has(0, "poi_small")), "small POI published in visit_change.csv");
    for (const auto* t : {"landuse/tile_profiles.csv", "landuse/landuse_labels.csv"}) {
        c.expect(!any_row(t, has(0, h2_tile)) && !any_row(t, has(0, w2_tile)), std::string("small tile in ") + t);
        c.expect(any_row(t, has(0, h1_tile)) && any_row(t, has(0, w1_tile)), std::string("large tile missing from ") + t);
    }
    return c.result(std::to_string(files) + " aggregate CSVs, " + std::to_string(rows_checked) +
                    " count cells all >= " + std::to_string(kK) + "; planted groups of 4 and 1 users absent");
}

struct Criterion {
    int id;
    const char* title;
    Result (*fn)();
};

const std::vector<Criterion>& criteria() {
    static const std::vector<Criterion> list = {
        {1, "oracle equivalence for statistics", oracle_equivalence},
        {2, "engine determinism of the displacement pipeline", engine_determinism},
        {3, "scaling bound for the stats pipeline", scaling_bound},
        {4, "larger-than-memory materialization bound", memory_bound},
        {5, "mean-shift correctness", mean_shift_correctness},
        {6, "home/work recovery", home_work_recovery},
        {7, "displacement rate exactness", displacement_exactness},
        {8, "land-use separation", landuse_separation},
        {9, "spatial correctness", spatial_correctness},
        {10, "privacy suppression", privacy_suppression},
    };
    return list;
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
    int failures = 0;
    for (const auto& c : criteria()) {
        if (!wanted.empty() && !wanted.count(c.id)) continue;
        Result r;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            r = c.fn();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (r.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.title << ": " << r.detail << " ("
                  << fmt(secs, 1) << " s)" << std::endl;
        failures += !r.pass;
    }
    return failures ? 1 : 0;
}
