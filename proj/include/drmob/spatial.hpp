#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "drmob/core.hpp"

namespace drmob {

inline constexpr double kEarthRadiusM = 6'371'000.0;
/// Metres per degree of latitude used for grid construction.
inline constexpr double kGridMetersPerDegree = 111'320.0;

/// Great-circle distance on a sphere of radius kEarthRadiusM.
double haversine_m(double lon1, double lat1, double lon2, double lat2);
inline double haversine_m(const LonLat& a, const LonLat& b) {
    return haversine_m(a.lon, a.lat, b.lon, b.lat);
}

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend auto operator<=>(const Vec2&, const Vec2&) = default;
    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double norm2() const { return x * x + y * y; }
};

/// Equirectangular projection to metres east/north of an origin.
class LocalFrame {
public:
    explicit LocalFrame(LonLat origin);
    Vec2 to_xy(const LonLat& p) const;
    LonLat to_lonlat(const Vec2& v) const;
    const LonLat& origin() const noexcept { return origin_; }

private:
    LonLat origin_;
    double meters_per_deg_lat_;
    double meters_per_deg_lon_;
};

using Ring = std::vector<LonLat>;

struct Tile {
    std::string tile_id;
    /// Outer ring first, then holes; each ring closed. Containment is even-odd over all rings.
    std::vector<Ring> rings;
    std::map<std::string, double> attributes;
    BBox bbox;
};

/// Even-odd test in lon/lat space; points on an edge count as inside.
bool ring_set_contains(const std::vector<Ring>& rings, double lon, double lat);

/// True if two non-adjacent edges of the ring touch or cross.
bool ring_self_intersects(const Ring& ring);

/// Immutable set of tiles with a uniform grid-bucket index over tile bounding boxes.
class Tessellation {
public:
    /// Validates rings and ids; throws DataError naming the offending tile.
    explicit Tessellation(std::vector<Tile> tiles);

    const std::vector<Tile>& tiles() const noexcept { return tiles_; }
    std::size_t size() const noexcept { return tiles_.size(); }
    const Tile* find(const std::string& id) const;
    const BBox& extent() const noexcept { return extent_; }

    /// Index of the containing tile; on overlap the lexicographically smallest id wins.
    std::optional<std::size_t> locate(double lon, double lat) const;
    /// Same contract as locate, scanning every tile without the index.
    std::optional<std::size_t> locate_brute_force(double lon, double lat) const;

    std::size_t index_columns() const noexcept { return cols_; }
    std::size_t index_rows() const noexcept { return rows_; }

private:
    void build_index();
    std::size_t bin_of(double lon, double lat) const;

    std::vector<Tile> tiles_;
    std::unordered_map<std::string, std::size_t> by_id_;
    BBox extent_;
    std::size_t cols_ = 1;
    std::size_t rows_ = 1;
    std::vector<std::vector<std::size_t>> bins_;
};

std::optional<std::string> assign_tile(double lon, double lat, const Tessellation& tess);

/// GeoJSON FeatureCollection of Polygon/MultiPolygon features. MultiPolygon
/// parts get ids "<id>#k". Numeric properties (or numeric strings) become attributes.
Tessellation load_tessellation(const nlohmann::json& document);
Tessellation load_tessellation_file(const std::filesystem::path& path);

/// Axis-aligned cells of cell_size_m, edge lengths evaluated at the bbox
/// centre latitude. Ids are "r<row>c<col>", row 0 at min_lat.
Tessellation make_grid(const BBox& bbox, double cell_size_m);

/// FeatureCollection with tile_id plus attributes and any extra per-tile properties.
nlohmann::json to_geojson(const Tessellation& tess,
                          const std::map<std::string, nlohmann::json>& extra_properties = {},
                          const std::string& extra_name = "");

}  // namespace drmob
