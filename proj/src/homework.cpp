#include "drmob/homework.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "drmob/csv.hpp"
#include "drmob/errors.hpp"

namespace drmob {

Period label_period(EpochSeconds timestamp_utc, const LocalClock& clock, const DaySchedule& schedule) {
    const LocalTime t = to_local(timestamp_utc, clock);
    if (schedule.home_hours.test(static_cast<std::size_t>(t.hour))) return Period::home;
    if (schedule.work_hours.test(static_cast<std::size_t>(t.hour)) &&
        schedule.work_days.test(static_cast<std::size_t>(t.weekday)))
        return Period::work;
    return Period::other;
}

void MeanShiftParams::validate() const {
    auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
    if (!positive(bandwidth_m)) throw ConfigError("bandwidth_m must be > 0");
    if (!positive(convergence_tol_m)) throw ConfigError("convergence_tol_m must be > 0");
    if (!(bandwidth_m > convergence_tol_m)) throw ConfigError("bandwidth_m must exceed convergence_tol_m");
    if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    if (!positive(seed_bin())) throw ConfigError("seed_bin_m must be > 0");
    if (!(mode_merge() >= 0.0)) throw ConfigError("mode_merge_m must be >= 0");
}

// ---------------------------------------------------------------------------
// Mean shift

namespace {

struct CellKey {
    std::int64_t cx;
    std::int64_t cy;
    friend bool operator==(const CellKey&, const CellKey&) = default;
    friend auto operator<=>(const CellKey&, const CellKey&) = default;
};

struct CellHash {
    std::size_t operator()(const CellKey& k) const noexcept {
        return std::hash<std::int64_t>{}(k.cx * 0x9E3779B97F4A7C15LL ^ k.cy);
    }
};

/// Points bucketed by bandwidth-sized cells, so a radius query touches 3x3 cells.
class NeighbourGrid {
public:
    NeighbourGrid(const std::vector<Vec2>& pts, Vec2 origin, double cell) : pts_(pts), origin_(origin), cell_(cell) {
        for (std::size_t i = 0; i < pts.size(); ++i) cells_[key(pts[i])].push_back(i);
    }

    CellKey key(Vec2 p) const {
        return {static_cast<std::int64_t>(std::floor((p.x - origin_.x) / cell_)),
                static_cast<std::int64_t>(std::floor((p.y - origin_.y) / cell_))};
    }

    /// Sum and count of points within `radius` (inclusive) of c.
    std::pair<Vec2, std::size_t> within(Vec2 c, double radius) const {
        const double r2 = radius * radius;
        const CellKey k = key(c);
        Vec2 sum;
        std::size_t n = 0;
        for (std::int64_t dx = -1; dx <= 1; ++dx)
            for (std::int64_t dy = -1; dy <= 1; ++dy) {
                auto it = cells_.find({k.cx + dx, k.cy + dy});
                if (it == cells_.end()) continue;
                for (std::size_t i : it->second)
                    if ((pts_[i] - c).norm2() <= r2) {
                        sum = sum + pts_[i];
                        ++n;
                    }
            }
        return {sum, n};
    }

private:
    const std::vector<Vec2>& pts_;
    Vec2 origin_;
    double cell_;
    std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> cells_;
};

bool mode_before(const Mode<Vec2>& a, const Mode<Vec2>& b) {
    if (a.member_count != b.member_count) return a.member_count > b.member_count;
    return a.center < b.center;
}

}  // namespace

std::vector<Mode<Vec2>> mean_shift(std::span<const Vec2> input, const MeanShiftParams& params) {
    params.validate();
    if (input.empty()) throw PreconditionError("mean_shift: no points");

    // Canonical order makes every sum, and so every result, independent of input order.
    std::vector<std::size_t> order(input.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return input[a] < input[b]; });
    std::vector<Vec2> pts;
    pts.reserve(input.size());
    for (std::size_t i : order) pts.push_back(input[i]);

    Vec2 lo = pts.front();
    for (const auto& p : pts) lo.y = std::min(lo.y, p.y);

    const double bw = params.bandwidth_m;
    const NeighbourGrid grid(pts, lo, bw);

    const double bin = params.seed_bin();
    std::map<CellKey, std::pair<Vec2, std::size_t>> bins;
    for (const auto& p : pts) {
        auto& [sum, n] = bins[{static_cast<std::int64_t>(std::floor((p.x - lo.x) / bin)),
                               static_cast<std::int64_t>(std::floor((p.y - lo.y) / bin))}];
        sum = sum + p;
        ++n;
    }

    struct Candidate {
        Vec2 center;
        std::size_t support;
    };
    std::vector<Candidate> converged;
    converged.reserve(bins.size());
    const double tol2 = params.convergence_tol_m * params.convergence_tol_m;
    for (const auto& [cell, acc] : bins) {
        Vec2 c = acc.first * (1.0 / static_cast<double>(acc.second));
        for (int it = 0; it < params.max_iterations; ++it) {
            auto [sum, n] = grid.within(c, bw);
            if (n == 0) break;
            const Vec2 next = sum * (1.0 / static_cast<double>(n));
            const double shift2 = (next - c).norm2();
            c = next;
            if (shift2 < tol2) break;
        }
        converged.push_back({c, grid.within(c, bw).second});
    }
    std::sort(converged.begin(), converged.end(), [](const Candidate& a, const Candidate& b) {
        if (a.support != b.support) return a.support > b.support;
        return a.center < b.center;
    });

    const double merge2 = params.mode_merge() * params.mode_merge();
    std::vector<Vec2> kept;
    for (const auto& c : converged) {
        const bool near = std::any_of(kept.begin(), kept.end(),
                                      [&](const Vec2& k) { return (k - c.center).norm2() <= merge2; });
        if (!near) kept.push_back(c.center);
    }

    std::vector<Mode<Vec2>> modes(kept.size());
    for (std::size_t m = 0; m < kept.size(); ++m) modes[m].center = kept[m];
    for (std::size_t i = 0; i < input.size(); ++i) {
        std::size_t best = 0;
        double best_d = (input[i] - kept[0]).norm2();
        for (std::size_t m = 1; m < kept.size(); ++m) {
            const double d = (input[i] - kept[m]).norm2();
            if (d < best_d) {
                best_d = d;
                best = m;
            }
        }
        modes[best].member_indices.push_back(i);
    }
    std::erase_if(modes, [](const Mode<Vec2>& m) { return m.member_indices.empty(); });
    for (auto& m : modes) m.member_count = m.member_indices.size();
    std::sort(modes.begin(), modes.end(), mode_before);
    return modes;
}

std::vector<ModeCluster> mean_shift(std::span<const LonLat> points, const MeanShiftParams& params) {
    if (points.empty()) throw PreconditionError("mean_shift: no points");
    std::vector<LonLat> sorted(points.begin(), points.end());
    std::sort(sorted.begin(), sorted.end());
    LonLat centroid{0, 0};
    for (const auto& p : sorted) {
        centroid.lon += p.lon;
        centroid.lat += p.lat;
    }
    centroid.lon /= static_cast<double>(sorted.size());
    centroid.lat /= static_cast<double>(sorted.size());

    const LocalFrame frame(centroid);
    std::vector<Vec2> xy;
    xy.reserve(points.size());
    for (const auto& p : points) xy.push_back(frame.to_xy(p));
    const auto [min_x, max_x] = std::minmax_element(xy.begin(), xy.end(),
                                                    [](const Vec2& a, const Vec2& b) { return a.x < b.x; });
    const auto [min_y, max_y] = std::minmax_element(xy.begin(), xy.end(),
                                                    [](const Vec2& a, const Vec2& b) { return a.y < b.y; });
    if (max_x->x - min_x->x > kMaxClusterExtentM || max_y->y - min_y->y > kMaxClusterExtentM)
        throw PreconditionError("mean_shift: points span more than 200 km");

    std::vector<ModeCluster> out;
    for (auto& m : mean_shift(std::span<const Vec2>(xy), params))
        out.push_back({frame.to_lonlat(m.center), m.member_count, std::move(m.member_indices)});
    return out;
}

// ---------------------------------------------------------------------------
// Home / work

void HomeWorkConfig::validate() const {
    schedule.validate();
    params.validate();
    if (min_home_pings < 1 || min_work_pings < 1) throw ConfigError("min_home_pings and min_work_pings must be >= 1");
}

namespace {

double median(std::vector<double> v) {
    const std::size_t n = v.size();
    std::sort(v.begin(), v.end());
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::optional<Anchor> anchor_for(std::vector<LonLat> pts, std::size_t min_support, const MeanShiftParams& params,
                                 const Tessellation& tess) {
    if (pts.size() < min_support) return std::nullopt;
    std::vector<double> lons, lats;
    for (const auto& p : pts) {
        lons.push_back(p.lon);
        lats.push_back(p.lat);
    }
    const LocalFrame frame({median(std::move(lons)), median(std::move(lats))});
    // Margin keeps the surviving set inside the limit once re-projected around its centroid.
    const double half = 0.95 * kMaxClusterExtentM / 2;
    std::erase_if(pts, [&](const LonLat& p) {
        const Vec2 v = frame.to_xy(p);
        return std::abs(v.x) > half || std::abs(v.y) > half;
    });
    if (pts.size() < min_support) return std::nullopt;
    const auto modes = mean_shift(std::span<const LonLat>(pts), params);
    const auto& best = modes.front();
    if (best.member_count < min_support) return std::nullopt;
    return Anchor{best.center, assign_tile(best.center.lon, best.center.lat, tess), best.member_count};
}

}  // namespace

HomeWorkResult user_home_work(std::span<const Ping> pings, const HomeWorkConfig& config, const Tessellation& tess) {
    HomeWorkResult r;
    if (pings.empty()) return r;
    r.user_id = pings.front().user_id;
    std::vector<LonLat> home, work;
    for (const auto& p : pings) {
        if (p.user_id != r.user_id) throw PreconditionError("user_home_work: pings from more than one user");
        if (config.window && !config.window->contains(p.timestamp)) continue;
        switch (label_period(p.timestamp, config.clock, config.schedule)) {
            case Period::home: home.push_back({p.lon, p.lat}); break;
            case Period::work: work.push_back({p.lon, p.lat}); break;
            case Period::other: break;
        }
    }
    r.home = anchor_for(std::move(home), config.min_home_pings, config.params, tess);
    r.work = anchor_for(std::move(work), config.min_work_pings, config.params, tess);
    return r;
}

const HomeWorkResult* HomeTable::find(const std::string& user_id) const {
    auto it = std::lower_bound(rows.begin(), rows.end(), user_id,
                               [](const HomeWorkResult& r, const std::string& id) { return r.user_id < id; });
    return it != rows.end() && it->user_id == user_id ? &*it : nullptr;
}

HomeTable infer_home_work(const engine::Dataset<Ping>& pings, const HomeWorkConfig& config,
                          std::shared_ptr<const Tessellation> tess) {
    config.validate();
    auto input = pings;
    if (config.window) {
        const TimeWindow w = *config.window;
        input = engine::filter(input, [w](const Ping& p) { return w.contains(p.timestamp); }, "home_window");
    }
    const std::size_t targets =
        std::max<std::size_t>({1, input.partition_count(), input.session().runtime().worker_count()});
    auto by_user = engine::shuffle_by_key(input, "user_id", targets, "shuffle_users");
    auto results = engine::map_groups<HomeWorkResult>(
        by_user, "user_id",
        [config, tess](std::span<const Ping> group, std::vector<HomeWorkResult>& out) {
            out.push_back(user_home_work(group, config, *tess));
        },
        "home_work");
    HomeTable table;
    table.rows = std::move(engine::collect(results, "collect_home_work").get());
    std::sort(table.rows.begin(), table.rows.end(),
              [](const HomeWorkResult& a, const HomeWorkResult& b) { return a.user_id < b.user_id; });
    table.window = config.window;
    return table;
}

ODMatrix od_matrix(const std::vector<HomeWorkResult>& results) {
    ODMatrix od;
    for (const auto& r : results) {
        ++od.coverage.users;
        const bool has_home = r.home && r.home->tile_id;
        const bool has_work = r.work && r.work->tile_id;
        if (!has_home) ++od.coverage.missing_home;
        if (!has_work) ++od.coverage.missing_work;
        if (has_home && has_work) {
            ++od.entries[{*r.home->tile_id, *r.work->tile_id}];
            ++od.coverage.with_both;
        }
    }
    od.total_users = od.coverage.with_both;
    return od;
}

void write_home_work_csv(std::ostream& out, const std::vector<HomeWorkResult>& rows) {
    out << "user_id,home_lon,home_lat,home_tile,home_support,work_lon,work_lat,work_tile,work_support\n";
    auto fields = [](const std::optional<Anchor>& a, std::vector<std::string>& f) {
        if (!a) {
            f.insert(f.end(), 4, std::string());
            return;
        }
        f.push_back(csv::num(a->point.lon));
        f.push_back(csv::num(a->point.lat));
        f.push_back(a->tile_id.value_or(""));
        f.push_back(csv::num(std::uint64_t{a->support}));
    };
    for (const auto& r : rows) {
        std::vector<std::string> f{r.user_id};
        fields(r.home, f);
        fields(r.work, f);
        csv::row(out, f);
    }
}

void write_od_csv(std::ostream& out, const ODMatrix& od, std::size_t min_users) {
    out << "home_tile,work_tile,users\n";
    for (const auto& [key, n] : od.entries)
        if (n >= min_users) csv::row(out, {key.first, key.second, csv::num(std::uint64_t{n})});
}

}  // namespace drmob
