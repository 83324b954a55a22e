#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "drmob/core.hpp"
#include "drmob/displacement.hpp"
#include "drmob/engine/dataset.hpp"
#include "drmob/records.hpp"

namespace drmob {

struct PointOfInterest {
    std::string poi_id;
    LonLat location;
    double radius_m = 100.0;
};

/// Immutable POI list with a grid index over each POI's enclosing lon/lat box.
class PoiSet {
public:
    /// Throws DataError on duplicate ids, bad coordinates or non-positive radius.
    explicit PoiSet(std::vector<PointOfInterest> pois);

    const std::vector<PointOfInterest>& pois() const noexcept { return pois_; }
    std::size_t size() const noexcept { return pois_.size(); }

    /// Indices of POIs within radius (haversine, inclusive), ascending.
    void within(double lon, double lat, std::vector<std::size_t>& out) const;
    /// Same contract, scanning every POI.
    void within_brute_force(double lon, double lat, std::vector<std::size_t>& out) const;

private:
    struct Cell {
        std::int64_t x, y;
        friend bool operator==(const Cell&, const Cell&) = default;
    };
    struct CellHash {
        std::size_t operator()(const Cell& c) const noexcept;
    };
    Cell cell_of(double lon, double lat) const;

    std::vector<PointOfInterest> pois_;
    double cell_deg_ = 0.01;
    std::unordered_map<Cell, std::vector<std::size_t>, CellHash> cells_;
};

/// CSV `poi_id,lon,lat[,radius_m]` with a header row; missing radius takes the default.
std::vector<PointOfInterest> load_pois(const std::filesystem::path& path, double default_radius_m);

struct VisitRow {
    std::string poi_id;
    LocalDate date;
    std::size_t unique_visitors = 0;

    friend bool operator==(const VisitRow&, const VisitRow&) = default;
};

/// Distinct users per (POI, local date) with at least one ping inside the POI
/// radius that date. Sorted by (poi_id, date); only rows with visitors.
std::vector<VisitRow> daily_visits(const engine::Dataset<Ping>& pings, std::shared_ptr<const PoiSet> pois,
                                   const LocalClock& clock);

struct VisitChange {
    std::string poi_id;
    LocalDate date;
    std::size_t visitors = 0;
    double baseline_mean = 0.0;
    std::optional<double> pct_change;
    std::optional<double> z_score;

    friend bool operator==(const VisitChange&, const VisitChange&) = default;
};

/// One row per POI and observation date, zero-filled, against a zero-filled
/// baseline. Rows with visitors < k_anonymity are dropped.
std::vector<VisitChange> visit_rate_change(const std::vector<VisitRow>& visits,
                                           const std::vector<PointOfInterest>& pois, const EventConfig& event,
                                           const LocalClock& clock, std::size_t k_anonymity = kDefaultKAnonymity);

/// Rows with fewer than min_visitors are omitted.
void write_visits_csv(std::ostream& out, const std::vector<VisitRow>& rows, std::size_t min_visitors = 0);
void write_visit_change_csv(std::ostream& out, const std::vector<VisitChange>& rows);

}  // namespace drmob
