#include "drmob/chart.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>

#include "drmob/errors.hpp"

namespace drmob {

namespace {

constexpr double kWidth = 820, kHeight = 440;
constexpr double kLeft = 70, kRight = 190, kTop = 40, kBottom = 70;
constexpr std::array<const char*, 10> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    std::string s = buf;
    return s == "-0.00" ? "0.00" : s;
}

std::string px(double v) { return fmt("%.2f", v); }

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string text(double x, double y, const std::string& body, const char* extra = "") {
    return "<text x=\"" + px(x) + "\" y=\"" + px(y) + "\"" + extra + ">" + xml_escape(body) + "</text>\n";
}

}  // namespace

std::string emit_chart(const Chart& chart) {
    std::vector<const ChartSeries*> drawn;
    for (const auto& s : chart.series)
        if (!s.points.empty()) drawn.push_back(&s);
    if (drawn.empty()) throw PreconditionError("chart '" + chart.title + "' has no data");

    std::int32_t d0 = drawn[0]->points[0].first.days, d1 = d0;
    double y0 = 0, y1 = 0;
    for (const auto* s : drawn)
        for (const auto& [d, v] : s->points) {
            if (!std::isfinite(v)) throw PreconditionError("chart '" + chart.title + "' has a non-finite value");
            d0 = std::min(d0, d.days);
            d1 = std::max(d1, d.days);
            y0 = std::min(y0, v);
            y1 = std::max(y1, v);
        }
    if (y1 - y0 < 1e-12) y1 = y0 + 1;
    const double pad = (y1 - y0) * 0.05;
    y1 += pad;
    if (y0 < 0) y0 -= pad;

    const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
    auto sx = [&](std::int32_t d) {
        return d1 == d0 ? kLeft + plot_w / 2 : kLeft + plot_w * (d - d0) / static_cast<double>(d1 - d0);
    };
    auto sy = [&](double v) { return kTop + plot_h * (1 - (v - y0) / (y1 - y0)); };

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + px(kWidth) + "\" height=\"" + px(kHeight) +
           "\" viewBox=\"0 0 " + px(kWidth) + " " + px(kHeight) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += text(kWidth / 2 - kRight / 2, 22, chart.title, " text-anchor=\"middle\" font-size=\"14\"");

    // y grid and ticks
    for (int i = 0; i <= 5; ++i) {
        const double v = y0 + (y1 - y0) * i / 5.0;
        const double y = sy(v);
        out += "<line x1=\"" + px(kLeft) + "\" y1=\"" + px(y) + "\" x2=\"" + px(kLeft + plot_w) + "\" y2=\"" + px(y) +
               "\" stroke=\"#e0e0e0\"/>\n";
        out += text(kLeft - 6, y + 4, fmt("%.3g", v), " text-anchor=\"end\"");
    }
    // x ticks, at most about ten labels
    const std::int32_t span = d1 - d0;
    const std::int32_t step = std::max<std::int32_t>(1, (span + 9) / 10);
    for (std::int32_t d = d0; d <= d1; d += step) {
        const double x = sx(d);
        out += "<line x1=\"" + px(x) + "\" y1=\"" + px(kTop + plot_h) + "\" x2=\"" + px(x) + "\" y2=\"" +
               px(kTop + plot_h + 4) + "\" stroke=\"black\"/>\n";
        out += "<text transform=\"translate(" + px(x) + "," + px(kTop + plot_h + 14) +
               ") rotate(30)\">" + format_date(LocalDate{d}) + "</text>\n";
    }
    out += "<rect x=\"" + px(kLeft) + "\" y=\"" + px(kTop) + "\" width=\"" + px(plot_w) + "\" height=\"" +
           px(plot_h) + "\" fill=\"none\" stroke=\"black\"/>\n";
    out += text(kLeft + plot_w / 2, kHeight - 8, "date", " text-anchor=\"middle\"");
    out += "<text transform=\"translate(16," + px(kTop + plot_h / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
           xml_escape(chart.y_label) + "</text>\n";

    for (std::size_t i = 0; i < drawn.size(); ++i) {
        const char* colour = kPalette[i % kPalette.size()];
        std::string pts;
        for (const auto& [d, v] : drawn[i]->points) {
            if (!pts.empty()) pts += ' ';
            pts += px(sx(d.days)) + "," + px(sy(v));
        }
        out += "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"1.5\" points=\"" + pts +
               "\"/>\n";
        const double ly = kTop + 10 + 18 * static_cast<double>(i);
        const double lx = kWidth - kRight + 16;
        out += "<line x1=\"" + px(lx) + "\" y1=\"" + px(ly) + "\" x2=\"" + px(lx + 20) + "\" y2=\"" + px(ly) +
               "\" stroke=\"" + colour + "\" stroke-width=\"2\"/>\n";
        out += text(lx + 26, ly + 4, drawn[i]->label);
    }
    out += "</svg>\n";
    return out;
}

Chart rate_chart(const std::vector<DailyRate>& rates, std::string title) {
    std::map<std::size_t, ChartSeries> by_group;
    for (const auto& r : rates) {
        auto& s = by_group[r.group];
        s.label = r.group_label;
        s.points.emplace_back(r.date, r.rate);
    }
    Chart c{std::move(title), "displacement rate", {}};
    for (auto& [g, s] : by_group) {
        std::sort(s.points.begin(), s.points.end());
        c.series.push_back(std::move(s));
    }
    return c;
}

Chart anomaly_chart(const std::vector<AnomalyRow>& rows, std::size_t max_series) {
    std::map<std::string, ChartSeries> by_tile;
    std::map<std::string, double> peak;
    for (const auto& r : rows) {
        if (!r.z_score) continue;
        auto& s = by_tile[r.tile_id];
        s.label = r.tile_id;
        s.points.emplace_back(r.date, *r.z_score);
        peak[r.tile_id] = std::max(peak[r.tile_id], std::abs(*r.z_score));
    }
    std::vector<std::string> order;
    for (const auto& [id, s] : by_tile) order.push_back(id);
    std::stable_sort(order.begin(), order.end(),
                     [&](const std::string& a, const std::string& b) { return peak[a] > peak[b]; });
    if (order.size() > max_series) order.resize(max_series);
    std::sort(order.begin(), order.end());

    Chart c{"Population anomalies", "z-score", {}};
    for (const auto& id : order) {
        auto& s = by_tile[id];
        std::sort(s.points.begin(), s.points.end());
        c.series.push_back(std::move(s));
    }
    return c;
}

}  // namespace drmob
