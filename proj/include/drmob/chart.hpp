#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "drmob/core.hpp"
#include "drmob/displacement.hpp"

namespace drmob {

struct ChartSeries {
    std::string label;
    /// Drawn in the given order; callers pass them sorted by date.
    std::vector<std::pair<LocalDate, double>> points;
};

struct Chart {
    std::string title;
    std::string y_label;
    std::vector<ChartSeries> series;
};

/// Self-contained SVG line chart: date on x, one polyline and legend entry per
/// non-empty series. Same chart in, same bytes out. Throws PreconditionError
/// when there is nothing to draw.
std::string emit_chart(const Chart& chart);

/// One series per group of a rates table, y = rate.
Chart rate_chart(const std::vector<DailyRate>& rates, std::string title);

/// y = z-score per tile; rows without a z-score are skipped. At most
/// max_series tiles, those with the largest peak |z| (ties by tile_id).
Chart anomaly_chart(const std::vector<AnomalyRow>& rows, std::size_t max_series = 12);

}  // namespace drmob
