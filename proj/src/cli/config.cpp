#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <toml.hpp>

#include "drmob/cli.hpp"
#include "drmob/errors.hpp"

namespace drmob::cli {

namespace fs = std::filesystem;

const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> names = {"stats",        "homework",  "od",  "landuse",
                                                   "displacement", "anomalies", "poi", "grid"};
    return names;
}

namespace {

std::pair<std::string, std::string> split_key(const std::string& key) {
    const auto dot = key.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == key.size() || key.find('.', dot + 1) != std::string::npos)
        throw ConfigError("setting '" + key + "' must have the form section.key");
    return {key.substr(0, dot), key.substr(dot + 1)};
}

/// Stores a flag value: anything TOML parses as a value, otherwise a plain
/// string. Dates and times stay strings so the local clock interprets them.
void set_flag_value(toml::table& section, const std::string& name, const std::string& text) {
    try {
        toml::table t = toml::parse("v = " + text);
        toml::node* v = t.get("v");
        if (v && !v->is_date() && !v->is_time() && !v->is_date_time()) {
            v->visit([&](auto& n) { section.insert_or_assign(name, std::move(n)); });
            return;
        }
    } catch (const toml::parse_error&) {
    }
    section.insert_or_assign(name, text);
}

/// Reads settings from the merged table, recording each key's effective value.
class Reader {
public:
    Reader(toml::table merged, std::set<std::string> from_flags, fs::path base_dir)
        : merged_(std::move(merged)), from_flags_(std::move(from_flags)), base_dir_(std::move(base_dir)) {}

    const toml::node* find(const std::string& key) {
        consumed_.insert(key);
        const auto [section, name] = split_key(key);
        const auto* sec = merged_.get_as<toml::table>(section);
        return sec ? sec->get(name) : nullptr;
    }

    std::optional<std::string> str(const std::string& key) {
        const auto* n = find(key);
        if (!n) return std::nullopt;
        if (!n->is_string()) throw ConfigError("'" + key + "' must be a string");
        auto v = *n->value<std::string>();
        record(key, v);
        return v;
    }
    std::optional<double> num(const std::string& key) {
        const auto* n = find(key);
        if (!n) return std::nullopt;
        if (!n->is_number()) throw ConfigError("'" + key + "' must be a number");
        const double v = *n->value<double>();
        if (!std::isfinite(v)) throw ConfigError("'" + key + "' must be finite");
        record(key, v);
        return v;
    }
    std::optional<std::int64_t> integer(const std::string& key, std::int64_t min = INT64_MIN) {
        const auto* n = find(key);
        if (!n) return std::nullopt;
        if (!n->is_integer()) throw ConfigError("'" + key + "' must be an integer");
        const auto v = *n->value<std::int64_t>();
        if (v < min) throw ConfigError("'" + key + "' must be >= " + std::to_string(min));
        record(key, v);
        return v;
    }
    std::optional<bool> boolean(const std::string& key) {
        const auto* n = find(key);
        if (!n) return std::nullopt;
        if (!n->is_boolean()) throw ConfigError("'" + key + "' must be true or false");
        record(key, *n->value<bool>());
        return *n->value<bool>();
    }
    std::optional<std::vector<double>> numbers(const std::string& key) {
        const auto* n = find(key);
        if (!n) return std::nullopt;
        const auto* arr = n->as_array();
        if (!arr) throw ConfigError("'" + key + "' must be an array of numbers");
        std::vector<double> out;
        toml::array rec;
        for (const auto& e : *arr) {
            if (!e.is_number()) throw ConfigError("'" + key + "' must be an array of numbers");
            out.push_back(*e.value<double>());
            rec.push_back(out.back());
        }
        record_node(key, std::move(rec));
        return out;
    }
    std::optional<std::vector<std::int64_t>> integers(const std::string& key) {
        const auto* n = find(key);
        if (!n) return std::nullopt;
        const auto* arr = n->as_array();
        if (!arr) throw ConfigError("'" + key + "' must be an array of integers");
        std::vector<std::int64_t> out;
        toml::array rec;
        for (const auto& e : *arr) {
            if (!e.is_integer()) throw ConfigError("'" + key + "' must be an array of integers");
            out.push_back(*e.value<std::int64_t>());
            rec.push_back(out.back());
        }
        record_node(key, std::move(rec));
        return out;
    }
    std::optional<fs::path> path(const std::string& key) {
        auto s = str(key);
        if (!s) return std::nullopt;
        return resolve(key, *s);
    }
    /// A string or an array of strings.
    std::optional<std::vector<fs::path>> paths(const std::string& key) {
        const auto* n = find(key);
        if (!n) return std::nullopt;
        std::vector<std::string> raw;
        if (n->is_string()) {
            raw.push_back(*n->value<std::string>());
        } else if (const auto* arr = n->as_array()) {
            for (const auto& e : *arr) {
                if (!e.is_string()) throw ConfigError("'" + key + "' must be a path or an array of paths");
                raw.push_back(*e.value<std::string>());
            }
        } else {
            throw ConfigError("'" + key + "' must be a path or an array of paths");
        }
        std::vector<fs::path> out;
        toml::array rec;
        for (const auto& r : raw) {
            out.push_back(resolve(key, r));
            rec.push_back(out.back().string());
        }
        record_node(key, std::move(rec));
        return out;
    }
    /// String in the local clock, integer epoch seconds, or a TOML date/datetime.
    std::optional<EpochSeconds> time_point(const std::string& key, const LocalClock& clock) {
        const auto* n = find(key);
        if (!n) return std::nullopt;
        std::string text;
        if (n->is_string()) {
            text = *n->value<std::string>();
        } else if (n->is_integer()) {
            text = std::to_string(*n->value<std::int64_t>());
        } else if (n->is_date() || n->is_date_time()) {
            std::ostringstream os;
            if (n->is_date()) os << *n->as_date();
            else os << *n->as_date_time();
            text = os.str();
        } else {
            throw ConfigError("'" + key + "' must be a date/time string or epoch seconds");
        }
        auto t = parse_offset_aware(text, clock);
        if (!t) throw ConfigError("'" + key + "': cannot parse time '" + text + "'");
        record(key, text);
        return t;
    }

    template <class T>
    void record(const std::string& key, T value) {
        record_node(key, std::move(value));
    }
    template <class Node>
    void record_node(const std::string& key, Node&& node) {
        const auto [section, name] = split_key(key);
        auto* sec = snapshot_.emplace<toml::table>(section).first->second.as_table();
        sec->insert_or_assign(name, std::forward<Node>(node));
    }

    void check_unknown() const {
        for (const auto& [section, node] : merged_) {
            const auto* sec = node.as_table();
            if (!sec) throw ConfigError("top-level key '" + std::string(section.str()) + "' must be a [section]");
            for (const auto& [name, value] : *sec) {
                const std::string key = std::string(section.str()) + "." + std::string(name.str());
                if (!consumed_.count(key)) throw ConfigError("unknown setting '" + key + "'");
            }
        }
    }

    std::string snapshot() const {
        std::ostringstream os;
        os << snapshot_;
        return os.str();
    }

private:
    fs::path resolve(const std::string& key, const std::string& raw) {
        if (raw.empty()) throw ConfigError("'" + key + "' must not be empty");
        fs::path p(raw);
        if (p.is_relative() && !from_flags_.count(key)) p = base_dir_ / p;
        return p.lexically_normal();
    }

    /// parse_time_point plus an explicit "+HH:MM"/"-HH:MM" suffix as produced by TOML datetimes.
    static std::optional<EpochSeconds> parse_offset_aware(std::string text, const LocalClock& clock) {
        if (text.size() > 6 && text.find('T') != std::string::npos) {
            const auto tail = text.substr(text.size() - 6);
            if ((tail[0] == '+' || tail[0] == '-') && tail[3] == ':') {
                const int sign = tail[0] == '+' ? 1 : -1;
                const int minutes = sign * (std::stoi(tail.substr(1, 2)) * 60 + std::stoi(tail.substr(4, 2)));
                text.resize(text.size() - 6);
                return parse_time_point(text, LocalClock(minutes));
            }
        }
        if (text.size() > 19 && text[19] == '.') text = text.substr(0, 19) + (text.back() == 'Z' ? "Z" : "");
        return parse_time_point(text, clock);
    }

    toml::table merged_;
    std::set<std::string> from_flags_;
    fs::path base_dir_;
    std::set<std::string> consumed_;
    toml::table snapshot_;
};

HourSet hour_set(const std::string& key, const std::vector<std::int64_t>& hours) {
    HourSet s;
    for (auto h : hours) {
        if (h < 0 || h > 23) throw ConfigError("'" + key + "' hours must be in 0..23");
        s.set(static_cast<std::size_t>(h));
    }
    return s;
}

std::unordered_set<std::string> read_user_list(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open users file " + path.string());
    std::unordered_set<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) out.insert(line);
    }
    return out;
}

void require_file(const fs::path& p, const std::string& what) {
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) throw ConfigError(what + " '" + p.string() + "' does not exist");
}

BBox bbox_from(const std::string& key, const std::vector<double>& v) {
    if (v.size() != 4) throw ConfigError("'" + key + "' must be [min_lon, min_lat, max_lon, max_lat]");
    BBox b{v[0], v[1], v[2], v[3]};
    if (b.min_lon > b.max_lon) throw ConfigError("'" + key + "' crosses the antimeridian, which is not supported");
    b.validate();
    return b;
}

toml::array hour_array(const HourSet& h) {
    toml::array a;
    for (std::size_t i = 0; i < h.size(); ++i)
        if (h.test(i)) a.push_back(static_cast<std::int64_t>(i));
    return a;
}

std::string grouping_name(GroupingKind k) {
    switch (k) {
        case GroupingKind::none: return "none";
        case GroupingKind::epicenter_rings: return "epicenter_rings";
        case GroupingKind::tile_attribute_quantiles: return "tile_attribute_quantiles";
    }
    return "none";
}

}  // namespace

RunConfig load_run_config(const std::string& subcommand, const std::optional<fs::path>& config_path,
                          const std::vector<Override>& overrides) {
    const auto& names = subcommands();
    if (std::find(names.begin(), names.end(), subcommand) == names.end())
        throw ConfigError("unknown subcommand '" + subcommand + "'");

    toml::table merged;
    fs::path base_dir = fs::current_path();
    if (config_path) {
        require_file(*config_path, "config file");
        try {
            merged = toml::parse_file(config_path->string());
        } catch (const toml::parse_error& e) {
            std::ostringstream os;
            os << config_path->string() << ":" << e.source().begin.line << ": " << e.description();
            throw ConfigError(os.str());
        }
        base_dir = fs::absolute(*config_path).parent_path();
    }
    std::set<std::string> from_flags;
    for (const auto& [key, text] : overrides) {
        const auto [section, name] = split_key(key);
        auto* sec = merged.emplace<toml::table>(section).first->second.as_table();
        if (!sec) throw ConfigError("'" + section + "' is not a section");
        set_flag_value(*sec, name, text);
        from_flags.insert(key);
    }

    Reader rd(std::move(merged), std::move(from_flags), base_dir);
    RunConfig c;
    c.subcommand = subcommand;
    c.config_path = config_path;

    // Clock first: every time point is read through it.
    c.clock = LocalClock(static_cast<int>(rd.integer("clock.utc_offset_minutes").value_or(0)));
    rd.record("clock.utc_offset_minutes", std::int64_t{c.clock.utc_offset_minutes()});

    c.inputs = rd.paths("input.paths").value_or(std::vector<fs::path>{});

    const bool header = rd.boolean("schema.has_header").value_or(true);
    c.schema = header ? PingSchemaConfig{} : PingSchemaConfig::positional();
    if (auto v = rd.str("schema.user_id")) c.schema.user_id = *v;
    if (auto v = rd.str("schema.timestamp")) c.schema.timestamp = *v;
    if (auto v = rd.str("schema.lat")) c.schema.lat = *v;
    if (auto v = rd.str("schema.lon")) c.schema.lon = *v;
    if (auto v = rd.str("schema.accuracy")) c.schema.accuracy = v->empty() ? std::nullopt : std::optional(*v);
    if (auto v = rd.str("schema.timestamp_unit")) {
        auto u = parse_timestamp_unit(*v);
        if (!u) throw ConfigError("schema.timestamp_unit must be seconds, milliseconds or auto");
        c.schema.timestamp_unit = *u;
    }
    if (auto v = rd.str("schema.delimiter")) {
        if (v->size() != 1) throw ConfigError("schema.delimiter must be a single character");
        c.schema.delimiter = (*v)[0];
    }
    c.schema.has_header = header;
    c.schema.validate();

    if (auto v = rd.numbers("filter.bbox")) c.filter.bbox = bbox_from("filter.bbox", *v);
    {
        auto start = rd.time_point("filter.start", c.clock);
        auto end = rd.time_point("filter.end", c.clock);
        if (start.has_value() != end.has_value()) throw ConfigError("filter.start and filter.end must be set together");
        if (start) c.filter.time_window = TimeWindow(*start, *end);
    }
    c.filter.max_accuracy_m = rd.num("filter.max_accuracy_m");
    c.users_file = rd.path("filter.users_file");
    if (c.users_file) {
        require_file(*c.users_file, "filter.users_file");
        c.filter.user_allowlist = read_user_list(*c.users_file);
    }
    c.filter.validate();

    if (auto v = rd.integer("users.min_active_days", 0)) c.user_filter.min_active_days = static_cast<std::uint32_t>(*v);
    if (auto v = rd.integer("users.min_total_pings", 0)) c.user_filter.min_total_pings = static_cast<std::uint64_t>(*v);
    c.user_filter.min_avg_pings_per_day = rd.num("users.min_avg_pings_per_day");
    if (auto v = rd.integer("users.min_span_days", 0)) c.user_filter.min_span_days = static_cast<std::uint32_t>(*v);
    c.user_filter.validate();

    c.tessellation_path = rd.path("tessellation.path");
    {
        auto bbox = rd.numbers("tessellation.grid_bbox");
        auto cell = rd.num("tessellation.grid_cell_m");
        if (bbox.has_value() != cell.has_value())
            throw ConfigError("tessellation.grid_bbox and tessellation.grid_cell_m must be set together");
        if (bbox) {
            if (!(*cell > 0)) throw ConfigError("tessellation.grid_cell_m must be > 0");
            c.grid = GridSpec{bbox_from("tessellation.grid_bbox", *bbox), *cell};
        }
        if (c.grid && c.tessellation_path)
            throw ConfigError("set either tessellation.path or a tessellation grid, not both");
    }

    DaySchedule schedule = DaySchedule::defaults();
    if (auto v = rd.integers("schedule.home_hours")) schedule.home_hours = hour_set("schedule.home_hours", *v);
    if (auto v = rd.integers("schedule.work_hours")) schedule.work_hours = hour_set("schedule.work_hours", *v);
    if (auto v = rd.integers("schedule.work_days")) {
        schedule.work_days.reset();
        for (auto d : *v) {
            if (d < 0 || d > 6) throw ConfigError("schedule.work_days must be in 0..6 (0 = Monday)");
            schedule.work_days.set(static_cast<std::size_t>(d));
        }
    }
    schedule.validate();

    auto& hw = c.homework;
    hw.clock = c.clock;
    hw.schedule = schedule;
    if (auto v = rd.num("homework.bandwidth_m")) hw.params.bandwidth_m = *v;
    if (auto v = rd.num("homework.convergence_tol_m")) hw.params.convergence_tol_m = *v;
    if (auto v = rd.integer("homework.max_iterations", 1)) hw.params.max_iterations = static_cast<int>(*v);
    hw.params.seed_bin_m = rd.num("homework.seed_bin_m");
    hw.params.mode_merge_m = rd.num("homework.mode_merge_m");
    if (auto v = rd.integer("homework.min_home_pings", 1)) hw.min_home_pings = static_cast<std::size_t>(*v);
    if (auto v = rd.integer("homework.min_work_pings", 1)) hw.min_work_pings = static_cast<std::size_t>(*v);
    {
        auto start = rd.time_point("homework.window_start", c.clock);
        auto end = rd.time_point("homework.window_end", c.clock);
        if (start.has_value() != end.has_value())
            throw ConfigError("homework.window_start and homework.window_end must be set together");
        if (start) hw.window = TimeWindow(*start, *end);
    }
    hw.validate();

    {
        auto time = rd.time_point("event.time", c.clock);
        auto epicenter = rd.numbers("event.epicenter");
        auto b0 = rd.time_point("event.baseline_start", c.clock);
        auto b1 = rd.time_point("event.baseline_end", c.clock);
        auto o0 = rd.time_point("event.observation_start", c.clock);
        auto o1 = rd.time_point("event.observation_end", c.clock);
        if (time || epicenter || b0 || b1 || o0 || o1) {
            if (!time || !b0 || !o1)
                throw ConfigError("event needs time, baseline_start and observation_end");
            EventConfig e;
            e.event_time = *time;
            e.baseline = TimeWindow(*b0, b1.value_or(*time));
            e.observation = TimeWindow(o0.value_or(*time), *o1);
            if (epicenter) {
                if (epicenter->size() != 2 || !is_valid_coordinate((*epicenter)[0], (*epicenter)[1]))
                    throw ConfigError("event.epicenter must be [lon, lat]");
                e.epicenter = LonLat{(*epicenter)[0], (*epicenter)[1]};
            }
            e.validate();
            c.event = e;
        }
    }

    c.displacement.clock = c.clock;
    c.displacement.night_hours = schedule.home_hours;
    if (auto v = rd.integers("displacement.night_hours"))
        c.displacement.night_hours = hour_set("displacement.night_hours", *v);
    if (auto v = rd.num("displacement.threshold_m")) c.displacement.threshold_m = *v;
    c.displacement.validate();

    if (auto v = rd.str("grouping.kind")) c.grouping.kind = parse_grouping_kind(*v);
    if (auto v = rd.numbers("grouping.ring_edges_km")) c.grouping.ring_edges_km = *v;
    else if (c.grouping.kind == GroupingKind::epicenter_rings) c.grouping.ring_edges_km = {10, 50};
    if (auto v = rd.str("grouping.attribute")) c.grouping.attribute = *v;
    if (auto v = rd.integer("grouping.quantiles", 1)) c.grouping.quantile_count = static_cast<std::size_t>(*v);
    c.grouping.validate();

    if (auto v = rd.integer("landuse.k", 1)) c.landuse_k = static_cast<std::size_t>(*v);
    if (auto v = rd.str("landuse.linkage")) c.linkage = parse_linkage(*v);
    if (auto v = rd.str("landuse.metric")) c.metric = parse_metric(*v);
    if (auto v = rd.str("landuse.count_mode")) c.count_mode = parse_count_mode(*v);
    if (c.linkage == Linkage::ward && c.metric == Metric::cosine)
        throw ConfigError("ward linkage requires the euclidean metric");

    c.poi_path = rd.path("poi.path");
    if (auto v = rd.num("poi.default_radius_m")) {
        if (!(*v > 0)) throw ConfigError("poi.default_radius_m must be > 0");
        c.poi_radius_m = *v;
    }

    if (auto v = rd.integer("privacy.k_anonymity", 1)) c.k_anonymity = static_cast<std::size_t>(*v);
    rd.record("privacy.k_anonymity", static_cast<std::int64_t>(c.k_anonymity));

    c.engine.worker_count = std::max(1u, std::thread::hardware_concurrency());
    if (auto v = rd.integer("engine.workers", 1)) c.engine.worker_count = static_cast<std::size_t>(*v);
    rd.record("engine.workers", static_cast<std::int64_t>(c.engine.worker_count));
    if (auto v = rd.integer("engine.max_partition_rows", 1)) c.engine.max_partition_rows = static_cast<std::size_t>(*v);
    if (auto v = rd.integer("engine.max_partition_mb", 1)) c.engine.max_partition_bytes = static_cast<std::uint64_t>(*v) << 20;
    if (auto v = rd.integer("engine.chunk_mb", 1)) c.engine.chunk_bytes = static_cast<std::uint64_t>(*v) << 20;
    if (auto v = rd.path("engine.work_dir")) {
        c.engine.work_dir = *v;
    } else if (const char* env = std::getenv("DRMOB_WORK_DIR"); env && *env) {
        c.engine.work_dir = env;
    } else if (const char* env2 = std::getenv("TOOL_WORK_DIR"); env2 && *env2) {
        c.engine.work_dir = env2;
    }
    if (!c.engine.work_dir.empty()) rd.record("engine.work_dir", c.engine.work_dir.string());
    c.engine.validate();

    c.output_dir = rd.path("output.dir").value_or(fs::path("drmob_out"));
    rd.record("output.dir", c.output_dir.string());
    c.charts = rd.boolean("output.charts").value_or(true);

    rd.check_unknown();

    // The snapshot holds effective values, so defaults are written out too.
    rd.record("schema.user_id", c.schema.user_id);
    rd.record("schema.timestamp", c.schema.timestamp);
    rd.record("schema.lat", c.schema.lat);
    rd.record("schema.lon", c.schema.lon);
    rd.record("schema.accuracy", c.schema.accuracy.value_or(""));
    rd.record("schema.has_header", c.schema.has_header);
    rd.record("schema.timestamp_unit", std::string(c.schema.timestamp_unit == TimestampUnit::seconds        ? "seconds"
                                                   : c.schema.timestamp_unit == TimestampUnit::milliseconds ? "milliseconds"
                                                                                                            : "auto"));
    rd.record("schema.delimiter", std::string(1, c.schema.delimiter));
    rd.record("schedule.home_hours", hour_array(schedule.home_hours));
    rd.record("schedule.work_hours", hour_array(schedule.work_hours));
    {
        toml::array days;
        for (std::size_t d = 0; d < 7; ++d)
            if (schedule.work_days.test(d)) days.push_back(static_cast<std::int64_t>(d));
        rd.record("schedule.work_days", std::move(days));
    }
    rd.record("homework.bandwidth_m", hw.params.bandwidth_m);
    rd.record("homework.convergence_tol_m", hw.params.convergence_tol_m);
    rd.record("homework.max_iterations", static_cast<std::int64_t>(hw.params.max_iterations));
    rd.record("homework.seed_bin_m", hw.params.seed_bin());
    rd.record("homework.mode_merge_m", hw.params.mode_merge());
    rd.record("homework.min_home_pings", static_cast<std::int64_t>(hw.min_home_pings));
    rd.record("homework.min_work_pings", static_cast<std::int64_t>(hw.min_work_pings));
    rd.record("displacement.threshold_m", c.displacement.threshold_m);
    rd.record("displacement.night_hours", hour_array(c.displacement.night_hours));
    rd.record("grouping.kind", grouping_name(c.grouping.kind));
    rd.record("landuse.k", static_cast<std::int64_t>(c.landuse_k));
    rd.record("landuse.linkage", std::string(c.linkage == Linkage::ward ? "ward" : "average"));
    rd.record("landuse.metric", std::string(c.metric == Metric::euclidean ? "euclidean" : "cosine"));
    rd.record("landuse.count_mode", std::string(c.count_mode == CountMode::pings ? "pings" : "distinct_users"));
    rd.record("poi.default_radius_m", c.poi_radius_m);
    rd.record("engine.max_partition_rows", static_cast<std::int64_t>(c.engine.max_partition_rows));
    rd.record("engine.max_partition_mb", static_cast<std::int64_t>(c.engine.max_partition_bytes >> 20));
    rd.record("engine.chunk_mb", static_cast<std::int64_t>(c.engine.chunk_bytes >> 20));
    rd.record("output.charts", c.charts);

    // What each subcommand needs.
    const std::string& s = subcommand;
    if (s != "grid") {
        if (c.inputs.empty()) throw ConfigError("input.paths is required for '" + s + "'");
        for (const auto& p : c.inputs) require_file(p, "input");
    }
    if (c.tessellation_path) require_file(*c.tessellation_path, "tessellation.path");
    const bool has_tiles = c.tessellation_path || c.grid;
    if ((s == "od" || s == "landuse" || s == "anomalies") && !has_tiles)
        throw ConfigError("'" + s + "' needs tessellation.path or tessellation.grid_bbox/grid_cell_m");
    if (s == "grid" && !c.grid) throw ConfigError("'grid' needs tessellation.grid_bbox and tessellation.grid_cell_m");
    if ((s == "displacement" || s == "anomalies") && !c.event) throw ConfigError("'" + s + "' needs an [event] section");
    if (s == "displacement" && c.grouping.kind == GroupingKind::epicenter_rings && !c.event->epicenter)
        throw ConfigError("epicenter_rings grouping needs event.epicenter");
    if (s == "displacement" && c.grouping.kind == GroupingKind::tile_attribute_quantiles && !has_tiles)
        throw ConfigError("tile_attribute_quantiles grouping needs a tessellation");
    if (s == "poi") {
        if (!c.poi_path) throw ConfigError("'poi' needs poi.path");
        require_file(*c.poi_path, "poi.path");
    }

    c.snapshot = rd.snapshot();
    return c;
}

}  // namespace drmob::cli
