#include "drmob/poi.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <unordered_set>

#include "drmob/csv.hpp"
#include "drmob/errors.hpp"
#include "drmob/ingest.hpp"
#include "drmob/spatial.hpp"

namespace drmob {

struct PoiVisit {
    std::string poi_id;
    std::int32_t date = 0;
    std::string user_id;
};

}  // namespace drmob

namespace drmob::engine {

template <>
struct RecordTraits<PoiVisit> {
    static const Schema<PoiVisit>& schema() {
        static const Schema<PoiVisit> s({
            {"poi_id", FieldType::string, [](const PoiVisit& r, KeyEncoder& k) { k.add(r.poi_id); }},
            {"date", FieldType::int64, [](const PoiVisit& r, KeyEncoder& k) { k.add(r.date); }},
            {"user_id", FieldType::string, [](const PoiVisit& r, KeyEncoder& k) { k.add(r.user_id); }},
        });
        return s;
    }
    static void encode(const PoiVisit& r, ByteWriter& w) {
        w.put_string(r.poi_id);
        w.put(r.date);
        w.put_string(r.user_id);
    }
    static PoiVisit decode(ByteReader& rd) {
        PoiVisit r;
        r.poi_id = rd.get_string();
        r.date = rd.get<std::int32_t>();
        r.user_id = rd.get_string();
        return r;
    }
};

}  // namespace drmob::engine

namespace drmob {

namespace {

constexpr double kMetersPerDegree = kEarthRadiusM * std::numbers::pi / 180.0;
// POIs whose box reaches this latitude or wraps the antimeridian are checked for every ping.
constexpr double kPolarLimitDeg = 89.0;

}  // namespace

std::size_t PoiSet::CellHash::operator()(const Cell& c) const noexcept {
    return std::hash<std::int64_t>{}(c.x * 0x9E3779B97F4A7C15LL ^ c.y);
}

PoiSet::Cell PoiSet::cell_of(double lon, double lat) const {
    return {static_cast<std::int64_t>(std::floor(lon / cell_deg_)),
            static_cast<std::int64_t>(std::floor(lat / cell_deg_))};
}

PoiSet::PoiSet(std::vector<PointOfInterest> pois) : pois_(std::move(pois)) {
    std::unordered_set<std::string> ids;
    double max_dlat = 0;
    for (const auto& p : pois_) {
        if (p.poi_id.empty()) throw DataError("POI with empty poi_id");
        if (!ids.insert(p.poi_id).second) throw DataError("duplicate poi_id '" + p.poi_id + "'");
        if (!is_valid_coordinate(p.location.lon, p.location.lat))
            throw DataError("POI '" + p.poi_id + "' has an invalid coordinate");
        if (!(p.radius_m > 0.0) || !std::isfinite(p.radius_m))
            throw DataError("POI '" + p.poi_id + "' radius must be > 0");
        max_dlat = std::max(max_dlat, p.radius_m / kMetersPerDegree);
    }
    cell_deg_ = std::max(1e-4, 2 * max_dlat);
    for (std::size_t i = 0; i < pois_.size(); ++i) {
        const auto& p = pois_[i];
        const double dlat = p.radius_m / kMetersPerDegree * (1 + 1e-9);
        const double reach = std::abs(p.location.lat) + dlat;
        const double dlon = reach < kPolarLimitDeg ? dlat / std::cos(reach * std::numbers::pi / 180.0) : 360.0;
        if (reach >= kPolarLimitDeg || p.location.lon - dlon < -180.0 || p.location.lon + dlon > 180.0) {
            cells_[{INT64_MIN, INT64_MIN}].push_back(i);
            continue;
        }
        const Cell lo = cell_of(p.location.lon - dlon, p.location.lat - dlat);
        const Cell hi = cell_of(p.location.lon + dlon, p.location.lat + dlat);
        for (auto x = lo.x; x <= hi.x; ++x)
            for (auto y = lo.y; y <= hi.y; ++y) cells_[{x, y}].push_back(i);
    }
}

void PoiSet::within(double lon, double lat, std::vector<std::size_t>& out) const {
    out.clear();
    for (const Cell& c : {cell_of(lon, lat), Cell{INT64_MIN, INT64_MIN}}) {
        auto it = cells_.find(c);
        if (it == cells_.end()) continue;
        for (std::size_t i : it->second)
            if (haversine_m(lon, lat, pois_[i].location.lon, pois_[i].location.lat) <= pois_[i].radius_m)
                out.push_back(i);
    }
    std::sort(out.begin(), out.end());
}

void PoiSet::within_brute_force(double lon, double lat, std::vector<std::size_t>& out) const {
    out.clear();
    for (std::size_t i = 0; i < pois_.size(); ++i)
        if (haversine_m(lon, lat, pois_[i].location.lon, pois_[i].location.lat) <= pois_[i].radius_m)
            out.push_back(i);
}

std::vector<PointOfInterest> load_pois(const std::filesystem::path& path, double default_radius_m) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open POI file " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError("POI file " + path.string() + " is empty");
    std::vector<std::string_view> f;
    split_csv_line(line, ',', f);
    if (f.size() < 3 || f[0] != "poi_id" || f[1] != "lon" || f[2] != "lat" || (f.size() > 3 && f[3] != "radius_m"))
        throw DataError("POI file " + path.string() + " must have header poi_id,lon,lat[,radius_m]");
    auto number = [&](std::string_view s, std::size_t line_no) {
        double v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size() || s.empty())
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad number '" + std::string(s) + "'");
        return v;
    };
    std::vector<PointOfInterest> out;
    for (std::size_t line_no = 2; std::getline(in, line); ++line_no) {
        if (line.empty() || line == "\r") continue;
        split_csv_line(line, ',', f);
        if (f.size() < 3) throw DataError(path.string() + ":" + std::to_string(line_no) + ": too few fields");
        PointOfInterest p{std::string(f[0]), {number(f[1], line_no), number(f[2], line_no)}, default_radius_m};
        if (f.size() > 3 && !f[3].empty()) p.radius_m = number(f[3], line_no);
        out.push_back(std::move(p));
    }
    PoiSet check(out);  // duplicate ids and bad rows are fatal at load
    return out;
}

namespace {

struct Present {
    using Acc = std::pair<std::string, std::int32_t>;
    Acc init(const PoiVisit& r) const { return {r.poi_id, r.date}; }
    void fold(Acc&, const PoiVisit&) const {}
    void merge(Acc&, Acc&&) const {}
};

}  // namespace

std::vector<VisitRow> daily_visits(const engine::Dataset<Ping>& pings, std::shared_ptr<const PoiSet> pois,
                                   const LocalClock& clock) {
    auto visits = engine::flat_map_partitions<PoiVisit>(
        pings,
        [pois, clock](const Ping& p, std::vector<PoiVisit>& out) {
            thread_local std::vector<std::size_t> hits;
            pois->within(p.lon, p.lat, hits);
            if (hits.empty()) return;
            const std::int32_t date = local_date(p.timestamp, clock).days;
            for (std::size_t i : hits) out.push_back({pois->pois()[i].poi_id, date, p.user_id});
        },
        "poi_hits");
    std::vector<VisitRow> out;
    for (const auto& [key, acc] : engine::reduce_by_key(visits, "poi_id,date,user_id", Present{}, "visitors").get()) {
        if (!out.empty() && out.back().poi_id == acc.first && out.back().date.days == acc.second)
            ++out.back().unique_visitors;
        else
            out.push_back({acc.first, LocalDate{acc.second}, 1});
    }
    return out;
}

std::vector<VisitChange> visit_rate_change(const std::vector<VisitRow>& visits,
                                           const std::vector<PointOfInterest>& pois, const EventConfig& event,
                                           const LocalClock& clock, std::size_t k_anonymity) {
    event.validate();
    const auto base_dates = window_dates(event.baseline, clock);
    if (base_dates.size() < 7) throw ConfigError("baseline window must cover at least 7 local dates");
    const auto obs_dates = window_dates(event.observation, clock);

    std::map<std::string, std::map<std::int32_t, std::size_t>> by_poi;
    for (const auto& p : pois) by_poi[p.poi_id];
    for (const auto& v : visits) by_poi[v.poi_id][v.date.days] = v.unique_visitors;

    std::vector<VisitChange> out;
    for (const auto& [poi, per_date] : by_poi) {
        auto count = [&](LocalDate d) {
            auto it = per_date.find(d.days);
            return it == per_date.end() ? std::size_t{0} : it->second;
        };
        std::vector<double> base;
        for (auto d : base_dates) base.push_back(static_cast<double>(count(d)));
        const auto [mean, sd] = mean_and_std(base);
        for (auto d : obs_dates) {
            const std::size_t n = count(d);
            if (n < k_anonymity) continue;
            VisitChange row{poi, d, n, mean, std::nullopt, std::nullopt};
            const double diff = static_cast<double>(n) - mean;
            if (mean > 0) row.pct_change = diff / mean;
            if (sd > 0) row.z_score = diff / sd;
            out.push_back(std::move(row));
        }
    }
    return out;
}

void write_visits_csv(std::ostream& out, const std::vector<VisitRow>& rows, std::size_t min_visitors) {
    out << "poi_id,date,unique_visitors\n";
    for (const auto& r : rows)
        if (r.unique_visitors >= min_visitors)
            csv::row(out, {r.poi_id, format_date(r.date), csv::num(std::uint64_t{r.unique_visitors})});
}

void write_visit_change_csv(std::ostream& out, const std::vector<VisitChange>& rows) {
    out << "poi_id,date,visitors,baseline_mean,pct_change,z_score\n";
    for (const auto& r : rows)
        csv::row(out, {r.poi_id, format_date(r.date), csv::num(std::uint64_t{r.visitors}), csv::num(r.baseline_mean),
                       csv::opt(r.pct_change), csv::opt(r.z_score)});
}

}  // namespace drmob
