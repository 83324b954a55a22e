#include "drmob/displacement.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "drmob/csv.hpp"
#include "drmob/errors.hpp"

namespace drmob {

struct NightPing {
    std::string user_id;
    std::int32_t date = 0;
    double lon = 0.0;
    double lat = 0.0;
};

struct TileDay {
    std::string tile_id;
    std::int32_t date = 0;
    std::string user_id;
};

}  // namespace drmob

namespace drmob::engine {

template <>
struct RecordTraits<NightPing> {
    static const Schema<NightPing>& schema() {
        static const Schema<NightPing> s({
            {"user_id", FieldType::string, [](const NightPing& r, KeyEncoder& k) { k.add(r.user_id); }},
            {"date", FieldType::int64, [](const NightPing& r, KeyEncoder& k) { k.add(r.date); }},
        });
        return s;
    }
    static void encode(const NightPing& r, ByteWriter& w) {
        w.put_string(r.user_id);
        w.put(r.date);
        w.put(r.lon);
        w.put(r.lat);
    }
    static NightPing decode(ByteReader& rd) {
        NightPing r;
        r.user_id = rd.get_string();
        r.date = rd.get<std::int32_t>();
        r.lon = rd.get<double>();
        r.lat = rd.get<double>();
        return r;
    }
};

template <>
struct RecordTraits<TileDay> {
    static const Schema<TileDay>& schema() {
        static const Schema<TileDay> s({
            {"tile_id", FieldType::string, [](const TileDay& r, KeyEncoder& k) { k.add(r.tile_id); }},
            {"date", FieldType::int64, [](const TileDay& r, KeyEncoder& k) { k.add(r.date); }},
            {"user_id", FieldType::string, [](const TileDay& r, KeyEncoder& k) { k.add(r.user_id); }},
        });
        return s;
    }
    static void encode(const TileDay& r, ByteWriter& w) {
        w.put_string(r.tile_id);
        w.put(r.date);
        w.put_string(r.user_id);
    }
    static TileDay decode(ByteReader& rd) {
        TileDay r;
        r.tile_id = rd.get_string();
        r.date = rd.get<std::int32_t>();
        r.user_id = rd.get_string();
        return r;
    }
};

}  // namespace drmob::engine

namespace drmob {

void EventConfig::validate() const {
    if (!(baseline.end() <= event_time && event_time <= observation.start()))
        throw ConfigError("event windows must satisfy baseline.end <= event_time <= observation.start");
    if (epicenter && !is_valid_coordinate(epicenter->lon, epicenter->lat))
        throw ConfigError("epicenter is not a valid coordinate");
}

void DisplacementConfig::validate() const {
    if (night_hours.none()) throw ConfigError("night_hours must not be empty");
    if (!(threshold_m > 0.0) || !std::isfinite(threshold_m)) throw ConfigError("threshold_m must be > 0");
}

LocalDate night_of(LocalDate date, int hour) { return hour >= 12 ? date : date.prev(); }

namespace {

double median_of(std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

LonLat median_position(std::vector<double> lons, std::vector<double> lats) {
    return {median_of(lons), median_of(lats)};
}

struct UserSeries {
    std::string user_id;
    bool has_home = false;
    std::vector<DisplacementRecord> records;
};

}  // namespace

std::optional<LonLat> nightly_position(std::span<const Ping> pings, const LocalClock& clock,
                                       const HourSet& night_hours) {
    std::vector<double> lons, lats;
    for (const auto& p : pings) {
        if (!night_hours.test(static_cast<std::size_t>(to_local(p.timestamp, clock).hour))) continue;
        lons.push_back(p.lon);
        lats.push_back(p.lat);
    }
    if (lons.empty()) return std::nullopt;
    return median_position(std::move(lons), std::move(lats));
}

std::vector<LocalDate> window_dates(const TimeWindow& w, const LocalClock& clock) {
    std::vector<LocalDate> out;
    for (LocalDate d = w.first_date(clock); d <= w.last_date(clock); d = d.next()) out.push_back(d);
    return out;
}

std::pair<double, double> mean_and_std(std::span<const double> values) {
    if (values.empty()) return {0.0, 0.0};
    double sum = 0;
    for (double v : values) sum += v;
    const double mean = sum / static_cast<double>(values.size());
    if (values.size() < 2) return {mean, 0.0};
    double ss = 0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

DisplacementSeries displacement_series(const engine::Dataset<Ping>& pings, std::shared_ptr<const HomeTable> homes,
                                       const EventConfig& event, const DisplacementConfig& config,
                                       SeriesWindow which) {
    event.validate();
    config.validate();
    if (!homes->window || *homes->window != event.baseline)
        throw PreconditionError("home locations must be inferred over the event baseline window");

    const TimeWindow window = which == SeriesWindow::observation ? event.observation : event.baseline;
    const LocalDate first = window.first_date(config.clock);
    const LocalClock clock = config.clock;
    const HourSet night = config.night_hours;
    auto nights = engine::map_partitions(
        pings,
        [window, first, clock, night](const Ping& p) -> std::optional<NightPing> {
            if (!window.contains(p.timestamp)) return std::nullopt;
            const LocalTime t = to_local(p.timestamp, clock);
            if (!night.test(static_cast<std::size_t>(t.hour))) return std::nullopt;
            const LocalDate d = night_of(t.date, t.hour);
            if (d < first) return std::nullopt;
            return NightPing{p.user_id, d.days, p.lon, p.lat};
        },
        "night_pings");

    const std::size_t targets =
        std::max<std::size_t>({1, nights.partition_count(), nights.session().runtime().worker_count()});
    auto by_user = engine::shuffle_by_key(nights, "user_id", targets, "shuffle_nights");
    const double threshold = config.threshold_m;
    auto series = engine::map_groups<UserSeries>(
        by_user, "user_id",
        [homes, threshold](std::span<const NightPing> group, std::vector<UserSeries>& out) {
            UserSeries s{group.front().user_id, false, {}};
            const HomeWorkResult* hw = homes->find(s.user_id);
            if (!hw || !hw->home) {
                out.push_back(std::move(s));
                return;
            }
            s.has_home = true;
            const LonLat home = hw->home->point;
            std::map<std::int32_t, std::pair<std::vector<double>, std::vector<double>>> by_date;
            for (const auto& n : group) {
                auto& [lons, lats] = by_date[n.date];
                lons.push_back(n.lon);
                lats.push_back(n.lat);
            }
            for (auto& [date, coords] : by_date) {
                const LonLat pos = median_position(std::move(coords.first), std::move(coords.second));
                const double d = haversine_m(pos, home);
                s.records.push_back({s.user_id, LocalDate{date}, pos, d, d > threshold});
            }
            out.push_back(std::move(s));
        },
        "displacement");

    auto users = std::move(engine::collect(series, "collect_displacement").get());
    std::sort(users.begin(), users.end(),
              [](const UserSeries& a, const UserSeries& b) { return a.user_id < b.user_id; });
    DisplacementSeries out;
    out.users_with_nights = users.size();
    for (auto& u : users) {
        if (!u.has_home) ++out.users_without_home;
        std::move(u.records.begin(), u.records.end(), std::back_inserter(out.records));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Grouping

GroupingKind parse_grouping_kind(std::string_view s) {
    if (s == "none") return GroupingKind::none;
    if (s == "epicenter_rings") return GroupingKind::epicenter_rings;
    if (s == "tile_attribute_quantiles") return GroupingKind::tile_attribute_quantiles;
    throw ConfigError("grouping kind must be none, epicenter_rings or tile_attribute_quantiles, got '" +
                      std::string(s) + "'");
}

void GroupingSpec::validate() const {
    if (kind == GroupingKind::epicenter_rings) {
        if (ring_edges_km.empty()) throw ConfigError("ring_edges_km must not be empty");
        for (std::size_t i = 0; i < ring_edges_km.size(); ++i) {
            if (!(ring_edges_km[i] > 0.0) || !std::isfinite(ring_edges_km[i]))
                throw ConfigError("ring edges must be positive");
            if (i && !(ring_edges_km[i] > ring_edges_km[i - 1]))
                throw ConfigError("ring edges must be strictly ascending");
        }
    }
    if (kind == GroupingKind::tile_attribute_quantiles) {
        if (attribute.empty()) throw ConfigError("grouping attribute must be set");
        if (quantile_count < 1) throw ConfigError("quantile_count must be >= 1");
    }
}

namespace {

std::string km_label(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

}  // namespace

Grouping group_users(const HomeTable& homes, const Tessellation& tess, const GroupingSpec& spec,
                     const EventConfig& event) {
    spec.validate();
    Grouping g;
    switch (spec.kind) {
        case GroupingKind::none:
            g.labels = {"all"};
            for (const auto& r : homes.rows) {
                if (!r.home) ++g.users_without_home;
                else g.user_group[r.user_id] = 0;
            }
            break;

        case GroupingKind::epicenter_rings: {
            if (!event.epicenter) throw ConfigError("epicenter_rings grouping needs an epicenter");
            const auto& edges = spec.ring_edges_km;
            for (std::size_t i = 0; i < edges.size(); ++i)
                g.labels.push_back((i ? km_label(edges[i - 1]) : std::string("0")) + "-" + km_label(edges[i]) + "km");
            g.labels.push_back(km_label(edges.back()) + "km+");
            for (const auto& r : homes.rows) {
                if (!r.home) {
                    ++g.users_without_home;
                    continue;
                }
                const double km = haversine_m(r.home->point, *event.epicenter) / 1000.0;
                const auto it = std::lower_bound(edges.begin(), edges.end(), km);
                g.user_group[r.user_id] = static_cast<std::size_t>(it - edges.begin());
            }
            break;
        }

        case GroupingKind::tile_attribute_quantiles: {
            std::vector<std::pair<double, std::string>> values;
            for (const auto& r : homes.rows) {
                if (!r.home) {
                    ++g.users_without_home;
                    continue;
                }
                const Tile* t = r.home->tile_id ? tess.find(*r.home->tile_id) : nullptr;
                auto attr = t ? t->attributes.find(spec.attribute) : std::map<std::string, double>::const_iterator{};
                if (!t || attr == t->attributes.end()) {
                    ++g.users_missing_attribute;
                    continue;
                }
                values.emplace_back(attr->second, r.user_id);
            }
            const std::size_t q = spec.quantile_count;
            for (std::size_t j = 1; j <= q; ++j) g.labels.push_back("q" + std::to_string(j));
            if (values.empty()) break;
            std::vector<double> sorted;
            for (const auto& [v, u] : values) sorted.push_back(v);
            std::sort(sorted.begin(), sorted.end());
            const std::size_t n = sorted.size();
            std::vector<double> upper;  // inclusive upper edge of bins 0..q-2
            for (std::size_t j = 1; j < q; ++j) upper.push_back(sorted[(j * n + q - 1) / q - 1]);
            for (const auto& [v, u] : values)
                g.user_group[u] = static_cast<std::size_t>(std::lower_bound(upper.begin(), upper.end(), v) - upper.begin());
            break;
        }
    }
    return g;
}

std::vector<DailyRate> displacement_rates(const std::vector<DisplacementRecord>& records, const Grouping& groups,
                                          std::size_t k_anonymity) {
    std::map<std::pair<LocalDate, std::size_t>, std::pair<std::size_t, std::size_t>> counts;
    for (const auto& r : records) {
        auto it = groups.user_group.find(r.user_id);
        if (it == groups.user_group.end()) continue;
        auto& [obs, disp] = counts[{r.date, it->second}];
        ++obs;
        disp += r.displaced;
    }
    std::vector<DailyRate> out;
    for (const auto& [key, c] : counts) {
        if (c.first < k_anonymity) continue;
        out.push_back({key.first, key.second, groups.labels.at(key.second), c.first, c.second,
                       static_cast<double>(c.second) / static_cast<double>(c.first)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Anomalies

namespace {

struct Present {
    using Acc = std::pair<std::string, std::int32_t>;
    Acc init(const TileDay& r) const { return {r.tile_id, r.date}; }
    void fold(Acc&, const TileDay&) const {}
    void merge(Acc&, Acc&&) const {}
};

}  // namespace

std::vector<AnomalyRow> tile_population_anomalies(const engine::Dataset<Ping>& pings,
                                                  std::shared_ptr<const Tessellation> tess, const LocalClock& clock,
                                                  const EventConfig& event, std::size_t k_anonymity) {
    event.validate();
    const auto baseline_dates = window_dates(event.baseline, clock);
    if (baseline_dates.size() < 7) throw ConfigError("baseline window must cover at least 7 local dates");
    const auto obs_dates = window_dates(event.observation, clock);

    const TimeWindow base = event.baseline, obs = event.observation;
    auto tile_days = engine::map_partitions(
        pings,
        [tess, clock, base, obs](const Ping& p) -> std::optional<TileDay> {
            if (!base.contains(p.timestamp) && !obs.contains(p.timestamp)) return std::nullopt;
            auto i = tess->locate(p.lon, p.lat);
            if (!i) return std::nullopt;
            return TileDay{tess->tiles()[*i].tile_id, local_date(p.timestamp, clock).days, p.user_id};
        },
        "tile_days");
    auto presence = engine::reduce_by_key(tile_days, "tile_id,date,user_id", Present{}, "distinct_users").get();

    std::map<std::string, std::map<std::int32_t, std::size_t>> users;
    for (const auto& [key, acc] : presence) ++users[acc.first][acc.second];

    std::vector<AnomalyRow> out;
    for (const auto& [tile, per_date] : users) {
        auto count = [&](LocalDate d) {
            auto it = per_date.find(d.days);
            return it == per_date.end() ? std::size_t{0} : it->second;
        };
        std::vector<double> base_values;
        for (auto d : baseline_dates) base_values.push_back(static_cast<double>(count(d)));
        const auto [mean, sd] = mean_and_std(base_values);
        for (auto d : obs_dates) {
            const std::size_t n = count(d);
            if (n < k_anonymity) continue;
            AnomalyRow row{tile, d, n, mean, sd, std::nullopt, std::nullopt};
            const double diff = static_cast<double>(n) - mean;
            if (sd > 0) row.z_score = diff / sd;
            if (mean > 0) row.pct_change = diff / mean;
            out.push_back(std::move(row));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

void write_rates_csv(std::ostream& out, const std::vector<DailyRate>& rates) {
    out << "date,group,observed_users,displaced_users,rate\n";
    for (const auto& r : rates)
        csv::row(out, {format_date(r.date), r.group_label, csv::num(std::uint64_t{r.observed_users}),
                       csv::num(std::uint64_t{r.displaced_users}), csv::num(r.rate)});
}

void write_anomalies_csv(std::ostream& out, const std::vector<AnomalyRow>& rows) {
    out << "tile_id,date,observed_users,baseline_mean,baseline_std,z_score,pct_change\n";
    for (const auto& r : rows)
        csv::row(out, {r.tile_id, format_date(r.date), csv::num(std::uint64_t{r.observed_users}),
                       csv::num(r.baseline_mean), csv::num(r.baseline_std), csv::opt(r.z_score),
                       csv::opt(r.pct_change)});
}

void write_coverage_csv(std::ostream& out, const std::vector<std::pair<std::string, std::size_t>>& reasons) {
    out << "reason,count\n";
    for (const auto& [reason, n] : reasons) csv::row(out, {reason, csv::num(std::uint64_t{n})});
}

}  // namespace drmob
