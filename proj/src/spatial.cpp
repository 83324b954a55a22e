#include "drmob/spatial.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>

#include "drmob/errors.hpp"

namespace drmob {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

double cross(const LonLat& o, const LonLat& a, const LonLat& b) {
    return (a.lon - o.lon) * (b.lat - o.lat) - (a.lat - o.lat) * (b.lon - o.lon);
}

bool within_box(const LonLat& p, const LonLat& a, const LonLat& b) {
    return p.lon >= std::min(a.lon, b.lon) && p.lon <= std::max(a.lon, b.lon) &&
           p.lat >= std::min(a.lat, b.lat) && p.lat <= std::max(a.lat, b.lat);
}

bool on_segment(const LonLat& p, const LonLat& a, const LonLat& b) {
    return cross(a, b, p) == 0.0 && within_box(p, a, b);
}

int sign(double v) { return (v > 0) - (v < 0); }

bool segments_touch(const LonLat& a, const LonLat& b, const LonLat& c, const LonLat& d) {
    const int o1 = sign(cross(a, b, c));
    const int o2 = sign(cross(a, b, d));
    const int o3 = sign(cross(c, d, a));
    const int o4 = sign(cross(c, d, b));
    if (o1 != o2 && o3 != o4 && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0) return true;
    if (o1 == 0 && within_box(c, a, b)) return true;
    if (o2 == 0 && within_box(d, a, b)) return true;
    if (o3 == 0 && within_box(a, c, d)) return true;
    if (o4 == 0 && within_box(b, c, d)) return true;
    return o1 != o2 && o3 != o4 && o1 * o2 < 0 && o3 * o4 < 0;
}

BBox ring_bbox(const std::vector<Ring>& rings) {
    BBox b{180, 90, -180, -90};
    for (const auto& r : rings)
        for (const auto& p : r) {
            b.min_lon = std::min(b.min_lon, p.lon);
            b.min_lat = std::min(b.min_lat, p.lat);
            b.max_lon = std::max(b.max_lon, p.lon);
            b.max_lat = std::max(b.max_lat, p.lat);
        }
    return b;
}

void check_tile(const Tile& t) {
    if (t.rings.empty()) throw DataError("tile '" + t.tile_id + "' has no rings");
    for (const auto& ring : t.rings) {
        if (ring.size() < 4) throw DataError("tile '" + t.tile_id + "' has a ring with fewer than 4 vertices");
        if (ring.front() != ring.back()) throw DataError("tile '" + t.tile_id + "' has an unclosed ring");
        for (const auto& p : ring)
            if (!is_valid_coordinate(p.lon, p.lat))
                throw DataError("tile '" + t.tile_id + "' has an invalid coordinate");
        if (ring_self_intersects(ring))
            throw DataError("tile '" + t.tile_id + "' has a self-intersecting ring");
    }
}

}  // namespace

double haversine_m(double lon1, double lat1, double lon2, double lat2) {
    const double phi1 = lat1 * kDegToRad;
    const double phi2 = lat2 * kDegToRad;
    const double dphi = (lat2 - lat1) * kDegToRad;
    const double dlambda = (lon2 - lon1) * kDegToRad;
    const double s1 = std::sin(dphi / 2);
    const double s2 = std::sin(dlambda / 2);
    const double a = std::clamp(s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2, 0.0, 1.0);
    return 2.0 * kEarthRadiusM * std::atan2(std::sqrt(a), std::sqrt(1.0 - a));
}

LocalFrame::LocalFrame(LonLat origin)
    : origin_(origin),
      meters_per_deg_lat_(kEarthRadiusM * kDegToRad),
      meters_per_deg_lon_(kEarthRadiusM * kDegToRad * std::cos(origin.lat * kDegToRad)) {}

Vec2 LocalFrame::to_xy(const LonLat& p) const {
    return {(p.lon - origin_.lon) * meters_per_deg_lon_, (p.lat - origin_.lat) * meters_per_deg_lat_};
}

LonLat LocalFrame::to_lonlat(const Vec2& v) const {
    return {origin_.lon + v.x / meters_per_deg_lon_, origin_.lat + v.y / meters_per_deg_lat_};
}

bool ring_set_contains(const std::vector<Ring>& rings, double lon, double lat) {
    const LonLat p{lon, lat};
    bool inside = false;
    for (const auto& ring : rings) {
        for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
            const auto& a = ring[j];
            const auto& b = ring[i];
            if (on_segment(p, a, b)) return true;
            if ((a.lat > lat) != (b.lat > lat)) {
                const double x = a.lon + (lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
                if (lon < x) inside = !inside;
            }
        }
    }
    return inside;
}

bool ring_self_intersects(const Ring& input) {
    Ring ring;
    ring.reserve(input.size());
    for (const auto& p : input)
        if (ring.empty() || ring.back() != p) ring.push_back(p);
    if (ring.size() < 4) return true;  // collapsed to a line or point
    const std::size_t m = ring.size() - 1;  // edges (i, i+1)

    std::vector<std::size_t> order(m);
    for (std::size_t i = 0; i < m; ++i) order[i] = i;
    auto min_x = [&](std::size_t e) { return std::min(ring[e].lon, ring[e + 1].lon); };
    auto max_x = [&](std::size_t e) { return std::max(ring[e].lon, ring[e + 1].lon); };
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::pair(min_x(a), a) < std::pair(min_x(b), b);
    });

    std::vector<std::size_t> active;
    for (std::size_t e : order) {
        const double x = min_x(e);
        std::erase_if(active, [&](std::size_t a) { return max_x(a) < x; });
        for (std::size_t a : active) {
            const std::size_t lo = std::min(a, e), hi = std::max(a, e);
            if (hi - lo == 1 || (lo == 0 && hi == m - 1)) continue;
            if (segments_touch(ring[a], ring[a + 1], ring[e], ring[e + 1])) return true;
        }
        active.push_back(e);
    }
    return false;
}

// ---------------------------------------------------------------------------

Tessellation::Tessellation(std::vector<Tile> tiles) : tiles_(std::move(tiles)) {
    for (std::size_t i = 0; i < tiles_.size(); ++i) {
        auto& t = tiles_[i];
        if (t.tile_id.empty()) throw DataError("tile with empty tile_id");
        if (!by_id_.emplace(t.tile_id, i).second) throw DataError("duplicate tile_id '" + t.tile_id + "'");
        check_tile(t);
        t.bbox = ring_bbox(t.rings);
    }
    build_index();
}

const Tile* Tessellation::find(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &tiles_[it->second];
}

void Tessellation::build_index() {
    if (tiles_.empty()) {
        extent_ = BBox{};
        bins_.assign(1, {});
        return;
    }
    extent_ = BBox{180, 90, -180, -90};
    for (const auto& t : tiles_) {
        extent_.min_lon = std::min(extent_.min_lon, t.bbox.min_lon);
        extent_.min_lat = std::min(extent_.min_lat, t.bbox.min_lat);
        extent_.max_lon = std::max(extent_.max_lon, t.bbox.max_lon);
        extent_.max_lat = std::max(extent_.max_lat, t.bbox.max_lat);
    }
    const double w = std::max(extent_.max_lon - extent_.min_lon, 1e-12);
    const double h = std::max(extent_.max_lat - extent_.min_lat, 1e-12);
    const double target = 4.0 * static_cast<double>(tiles_.size());
    cols_ = static_cast<std::size_t>(std::clamp(std::round(std::sqrt(target * w / h)), 1.0, target));
    rows_ = static_cast<std::size_t>(std::max(1.0, std::ceil(target / static_cast<double>(cols_))));
    bins_.assign(cols_ * rows_, {});

    auto col = [&](double lon) {
        const double c = std::floor((lon - extent_.min_lon) / w * static_cast<double>(cols_));
        return static_cast<std::size_t>(std::clamp(c, 0.0, static_cast<double>(cols_ - 1)));
    };
    auto row = [&](double lat) {
        const double r = std::floor((lat - extent_.min_lat) / h * static_cast<double>(rows_));
        return static_cast<std::size_t>(std::clamp(r, 0.0, static_cast<double>(rows_ - 1)));
    };
    std::vector<std::size_t> by_name(tiles_.size());
    for (std::size_t i = 0; i < by_name.size(); ++i) by_name[i] = i;
    std::sort(by_name.begin(), by_name.end(),
              [&](std::size_t a, std::size_t b) { return tiles_[a].tile_id < tiles_[b].tile_id; });
    for (std::size_t i : by_name) {
        const auto& b = tiles_[i].bbox;
        for (std::size_t r = row(b.min_lat); r <= row(b.max_lat); ++r)
            for (std::size_t c = col(b.min_lon); c <= col(b.max_lon); ++c) bins_[r * cols_ + c].push_back(i);
    }
}

std::size_t Tessellation::bin_of(double lon, double lat) const {
    const double w = std::max(extent_.max_lon - extent_.min_lon, 1e-12);
    const double h = std::max(extent_.max_lat - extent_.min_lat, 1e-12);
    const double c = std::clamp(std::floor((lon - extent_.min_lon) / w * static_cast<double>(cols_)), 0.0,
                                static_cast<double>(cols_ - 1));
    const double r = std::clamp(std::floor((lat - extent_.min_lat) / h * static_cast<double>(rows_)), 0.0,
                                static_cast<double>(rows_ - 1));
    return static_cast<std::size_t>(r) * cols_ + static_cast<std::size_t>(c);
}

std::optional<std::size_t> Tessellation::locate(double lon, double lat) const {
    if (tiles_.empty() || !extent_.contains(lon, lat)) return std::nullopt;
    for (std::size_t i : bins_[bin_of(lon, lat)]) {
        const auto& t = tiles_[i];
        if (t.bbox.contains(lon, lat) && ring_set_contains(t.rings, lon, lat)) return i;
    }
    return std::nullopt;
}

std::optional<std::size_t> Tessellation::locate_brute_force(double lon, double lat) const {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < tiles_.size(); ++i)
        if (ring_set_contains(tiles_[i].rings, lon, lat) &&
            (!best || tiles_[i].tile_id < tiles_[*best].tile_id))
            best = i;
    return best;
}

std::optional<std::string> assign_tile(double lon, double lat, const Tessellation& tess) {
    auto i = tess.locate(lon, lat);
    if (!i) return std::nullopt;
    return tess.tiles()[*i].tile_id;
}

// ---------------------------------------------------------------------------

namespace {

Ring parse_ring(const nlohmann::json& coords, const std::string& id) {
    if (!coords.is_array()) throw DataError("tile '" + id + "': ring is not an array");
    Ring ring;
    for (const auto& pt : coords) {
        if (!pt.is_array() || pt.size() < 2 || !pt[0].is_number() || !pt[1].is_number())
            throw DataError("tile '" + id + "': malformed position");
        ring.push_back({pt[0].get<double>(), pt[1].get<double>()});
    }
    return ring;
}

std::vector<Ring> parse_polygon(const nlohmann::json& coords, const std::string& id) {
    if (!coords.is_array() || coords.empty()) throw DataError("tile '" + id + "': empty polygon");
    std::vector<Ring> rings;
    for (const auto& r : coords) rings.push_back(parse_ring(r, id));
    return rings;
}

std::string id_string(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
    if (v.is_number()) return v.dump();
    return {};
}

std::optional<double> numeric(const nlohmann::json& v) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        const auto& s = v.get_ref<const std::string&>();
        double d = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), d);
        if (ec == std::errc{} && p == s.data() + s.size() && !s.empty()) return d;
    }
    return std::nullopt;
}

}  // namespace

Tessellation load_tessellation(const nlohmann::json& doc) {
    if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" || !doc.contains("features"))
        throw DataError("tessellation must be a GeoJSON FeatureCollection");
    std::vector<Tile> tiles;
    for (const auto& f : doc["features"]) {
        const auto props = f.value("properties", nlohmann::json::object());
        std::string id;
        if (props.is_object() && props.contains("tile_id")) id = id_string(props["tile_id"]);
        if (id.empty() && props.is_object() && props.contains("id")) id = id_string(props["id"]);
        if (id.empty() && f.contains("id")) id = id_string(f["id"]);
        if (id.empty()) throw DataError("feature without tile_id or id");

        std::map<std::string, double> attrs;
        if (props.is_object())
            for (const auto& [k, v] : props.items())
                if (k != "tile_id")
                    if (auto d = numeric(v)) attrs[k] = *d;

        const auto& geom = f.at("geometry");
        const std::string type = geom.is_object() ? geom.value("type", "") : "";
        if (type == "Polygon") {
            tiles.push_back({id, parse_polygon(geom.at("coordinates"), id), attrs, {}});
        } else if (type == "MultiPolygon") {
            const auto& polys = geom.at("coordinates");
            for (std::size_t k = 0; k < polys.size(); ++k) {
                const auto part = id + "#" + std::to_string(k);
                tiles.push_back({part, parse_polygon(polys[k], part), attrs, {}});
            }
        } else {
            throw DataError("tile '" + id + "': unsupported geometry type '" + type + "'");
        }
    }
    return Tessellation(std::move(tiles));
}

Tessellation load_tessellation_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open tessellation " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("tessellation " + path.string() + ": " + e.what());
    }
    return load_tessellation(doc);
}

Tessellation make_grid(const BBox& bbox, double cell_size_m) {
    if (bbox.min_lon > bbox.max_lon)
        throw ConfigError("grid bbox spans the antimeridian (min_lon > max_lon); unsupported");
    bbox.validate();
    if (!(cell_size_m > 0.0) || !std::isfinite(cell_size_m)) throw ConfigError("grid cell_size_m must be > 0");

    const double center_lat = 0.5 * (bbox.min_lat + bbox.max_lat);
    const double dlat = cell_size_m / kGridMetersPerDegree;
    const double dlon = cell_size_m / (kGridMetersPerDegree * std::cos(center_lat * kDegToRad));
    auto count = [](double extent, double edge) {
        return static_cast<std::size_t>(std::max(1.0, std::ceil(extent / edge - 1e-9)));
    };
    const std::size_t rows = count(bbox.max_lat - bbox.min_lat, dlat);
    const std::size_t cols = count(bbox.max_lon - bbox.min_lon, dlon);
    if (rows * cols > 50'000'000) throw ConfigError("grid would have more than 5e7 cells");

    std::vector<Tile> tiles;
    tiles.reserve(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const double y0 = bbox.min_lat + static_cast<double>(r) * dlat;
        const double y1 = std::min(90.0, bbox.min_lat + static_cast<double>(r + 1) * dlat);
        for (std::size_t c = 0; c < cols; ++c) {
            const double x0 = bbox.min_lon + static_cast<double>(c) * dlon;
            const double x1 = std::min(180.0, bbox.min_lon + static_cast<double>(c + 1) * dlon);
            Tile t;
            t.tile_id = "r" + std::to_string(r) + "c" + std::to_string(c);
            t.rings = {{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}}};
            tiles.push_back(std::move(t));
        }
    }
    return Tessellation(std::move(tiles));
}

nlohmann::json to_geojson(const Tessellation& tess, const std::map<std::string, nlohmann::json>& extra,
                          const std::string& extra_name) {
    nlohmann::json features = nlohmann::json::array();
    for (const auto& t : tess.tiles()) {
        nlohmann::json rings = nlohmann::json::array();
        for (const auto& r : t.rings) {
            nlohmann::json ring = nlohmann::json::array();
            for (const auto& p : r) ring.push_back({p.lon, p.lat});
            rings.push_back(std::move(ring));
        }
        nlohmann::json props = {{"tile_id", t.tile_id}};
        for (const auto& [k, v] : t.attributes) props[k] = v;
        if (!extra_name.empty())
            if (auto it = extra.find(t.tile_id); it != extra.end()) props[extra_name] = it->second;
        features.push_back({{"type", "Feature"},
                            {"properties", std::move(props)},
                            {"geometry", {{"type", "Polygon"}, {"coordinates", std::move(rings)}}}});
    }
    return {{"type", "FeatureCollection"}, {"features", std::move(features)}};
}

}  // namespace drmob
