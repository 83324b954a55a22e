#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>
#include <openssl/evp.h>
#include <toml.hpp>

#include "drmob/chart.hpp"
#include "drmob/cli.hpp"
#include "drmob/csv.hpp"
#include "drmob/errors.hpp"
#include "drmob/poi.hpp"
#include "drmob/spatial.hpp"

namespace drmob::cli {

namespace fs = std::filesystem;

namespace {

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new()) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 unavailable");
    }
    ~Sha256() { EVP_MD_CTX_free(ctx_); }
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }
    std::string hex() {
        unsigned char md[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        EVP_DigestFinal_ex(ctx_, md, &len);
        std::string out;
        char buf[3];
        for (unsigned i = 0; i < len; ++i) {
            std::snprintf(buf, sizeof buf, "%02x", md[i]);
            out += buf;
        }
        return out;
    }

private:
    EVP_MD_CTX* ctx_;
};

std::string hash_file(const fs::path& path, std::uintmax_t& bytes) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    Sha256 h;
    std::vector<char> buf(1 << 20);
    bytes = 0;
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        const auto n = static_cast<std::size_t>(in.gcount());
        h.update(buf.data(), n);
        bytes += n;
    }
    return h.hex();
}

std::string sha256_bytes(std::string_view s) {
    Sha256 h;
    h.update(s.data(), s.size());
    return h.hex();
}

struct InputDigest {
    std::string role;
    fs::path path;
    std::uintmax_t bytes = 0;
    std::string sha256;
};

struct OutputRecord {
    std::string file;
    std::size_t rows = 0;
    std::string sha256;
};

/// Everything a run reports about itself; written as manifest.toml.
struct Manifest {
    std::string started_utc;
    std::vector<InputDigest> inputs;
    std::optional<IngestReport::Totals> ingest;
    std::uint64_t filtered = 0;
    std::uint64_t analysed = 0;
    std::vector<std::pair<std::string, std::uint64_t>> extra_counts;
    std::vector<std::pair<std::string, double>> stages;
    std::vector<OutputRecord> outputs;
    std::string status = "ok";
    std::string error;

    void write(const RunConfig& cfg, const fs::path& path) const {
        toml::table doc;
        toml::table run{{"tool", kToolName}, {"version", kVersion}, {"subcommand", cfg.subcommand},
                        {"started_utc", started_utc}, {"status", status}};
        if (!error.empty()) run.insert("error", error);
        if (cfg.config_path) run.insert("config_file", cfg.config_path->string());
        doc.insert("run", std::move(run));
        doc.insert("config", toml::parse(cfg.snapshot));

        toml::table counts;
        const auto t = ingest.value_or(IngestReport::Totals{});
        counts.insert("rows_read", static_cast<std::int64_t>(t.read));
        counts.insert("rows_emitted", static_cast<std::int64_t>(t.emitted));
        counts.insert("rows_rejected", static_cast<std::int64_t>(t.rejected));
        for (std::size_t r = 0; r < kRejectReasonCount; ++r)
            counts.insert("rejected_" + std::string(to_string(static_cast<RejectReason>(r))),
                          static_cast<std::int64_t>(t.rejected_by_reason[r]));
        counts.insert("rows_filtered", static_cast<std::int64_t>(filtered));
        counts.insert("rows_analysed", static_cast<std::int64_t>(analysed));
        for (const auto& [k, v] : extra_counts) counts.insert(k, static_cast<std::int64_t>(v));
        doc.insert("counts", std::move(counts));

        toml::array stage_arr;
        for (const auto& [name, secs] : stages) stage_arr.push_back(toml::table{{"name", name}, {"seconds", secs}});
        doc.insert("stages", std::move(stage_arr));

        toml::array in_arr;
        for (const auto& i : inputs)
            in_arr.push_back(toml::table{{"role", i.role},
                                         {"path", i.path.string()},
                                         {"bytes", static_cast<std::int64_t>(i.bytes)},
                                         {"sha256", i.sha256}});
        doc.insert("inputs", std::move(in_arr));

        toml::array out_arr;
        for (const auto& o : outputs)
            out_arr.push_back(toml::table{
                {"file", o.file}, {"rows", static_cast<std::int64_t>(o.rows)}, {"sha256", o.sha256}});
        doc.insert("outputs", std::move(out_arr));

        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << doc << '\n';
        if (!out) throw DataError("cannot write " + path.string());
    }
};

std::string utc_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Per-run state shared by the subcommand pipelines.
class Job {
public:
    Job(const RunConfig& cfg, std::ostream& log) : cfg_(cfg), log_(log), session_(cfg.engine) {}

    Manifest& manifest() { return manifest_; }

    template <class F>
    auto stage(const std::string& name, F&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        auto finish = [&] {
            const std::chrono::duration<double> d = std::chrono::steady_clock::now() - t0;
            manifest_.stages.emplace_back(name, d.count());
        };
        if constexpr (std::is_void_v<std::invoke_result_t<F>>) {
            fn();
            finish();
        } else {
            auto r = fn();
            finish();
            return r;
        }
    }

    void digest(const std::string& role, const fs::path& p) {
        std::uintmax_t bytes = 0;
        std::string hex = hash_file(p, bytes);
        manifest_.inputs.push_back({role, p, bytes, std::move(hex)});
    }

    /// Writes one output file; rows are its lines minus the header for CSVs.
    void emit(const std::string& name, const std::string& body, bool tabular) {
        const fs::path p = cfg_.output_dir / name;
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        out << body;
        if (!out) throw DataError("cannot write " + p.string());
        std::size_t rows = static_cast<std::size_t>(std::count(body.begin(), body.end(), '\n'));
        if (tabular && rows) --rows;
        if (!tabular) rows = 0;
        manifest_.outputs.push_back({name, rows, sha256_bytes(body)});
    }
    void emit_csv(const std::string& name, const std::function<void(std::ostream&)>& writer) {
        std::ostringstream os;
        writer(os);
        emit(name, os.str(), true);
    }
    void emit_chart_file(const std::string& name, const Chart& chart) {
        if (!cfg_.charts) return;
        try {
            emit(name, emit_chart(chart), false);
        } catch (const PreconditionError& e) {
            log_ << "warning: skipping " << name << ": " << e.what() << '\n';
        }
    }
    void count(const std::string& name, std::uint64_t v) { manifest_.extra_counts.emplace_back(name, v); }

    std::shared_ptr<const Tessellation> tessellation() {
        if (tess_) return tess_;
        tess_ = stage("load_tessellation", [&] {
            if (cfg_.tessellation_path) {
                digest("tessellation", *cfg_.tessellation_path);
                return std::make_shared<const Tessellation>(load_tessellation_file(*cfg_.tessellation_path));
            }
            if (cfg_.grid) return std::make_shared<const Tessellation>(make_grid(cfg_.grid->bbox, cfg_.grid->cell_m));
            return std::make_shared<const Tessellation>(std::vector<Tile>{});
        });
        count("tiles", tess_->size());
        return tess_;
    }

    /// Reads, validates and filters the ping inputs. Lazy: rows flow when a
    /// later stage executes.
    engine::Dataset<Ping> pings() {
        if (pings_) return *pings_;
        for (const auto& p : cfg_.inputs) digest("pings", p);
        if (cfg_.users_file) digest("users", *cfg_.users_file);
        auto in = read_pings(session_, cfg_.inputs, cfg_.schema);
        report_ = in.report;
        raw_ = in.dataset;
        auto ds = cfg_.filter.empty() ? in.dataset : filter_pings(in.dataset, cfg_.filter);
        if (!cfg_.user_filter.empty()) {
            auto stats = stage("user_filter", [&] { return user_stats(ds, cfg_.clock); });
            ds = filter_users(ds, stats, cfg_.user_filter);
        }
        filtering_ = !cfg_.filter.empty() || !cfg_.user_filter.empty();
        pings_ = ds;
        return ds;
    }

    /// Reconciles ingest counts once the analysis has consumed the input.
    void finish_counts() {
        if (!report_) return;
        if (!report_->complete()) engine::partition_sizes(*raw_, "count_input").get();
        const auto totals = report_->totals();
        manifest_.ingest = totals;
        manifest_.analysed = totals.emitted;
        if (filtering_) {
            const auto sizes = stage("count_filtered", [&] { return engine::partition_sizes(*pings_, "count").get(); });
            manifest_.analysed = std::accumulate(sizes.begin(), sizes.end(), std::uint64_t{0});
        }
        manifest_.filtered = totals.emitted - manifest_.analysed;
        const fs::path rejects = cfg_.output_dir / "rejects.csv";
        report_->write_rejects(rejects);
        const auto logged = std::min<std::uint64_t>(totals.rejected, IngestReport::kMaxLoggedRejects);
        manifest_.outputs.push_back({"rejects.csv", static_cast<std::size_t>(logged), sha256_file(rejects)});
    }

    HomeTable homes(const std::optional<TimeWindow>& window) {
        HomeWorkConfig hw = cfg_.homework;
        hw.window = window;
        auto tess = tessellation();
        auto ds = pings();
        return stage("home_work", [&] { return infer_home_work(ds, hw, tess); });
    }

    const RunConfig& cfg() const { return cfg_; }
    std::ostream& log() { return log_; }

private:
    const RunConfig& cfg_;
    std::ostream& log_;
    engine::Session session_;
    Manifest manifest_;
    std::shared_ptr<const Tessellation> tess_;
    std::optional<engine::Dataset<Ping>> pings_;
    std::optional<engine::Dataset<Ping>> raw_;
    std::shared_ptr<IngestReport> report_;
    bool filtering_ = false;
};

void write_counts_csv(std::ostream& out, const std::vector<std::pair<std::string, std::size_t>>& rows,
                      std::size_t k) {
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (const auto& r : rows)
        if (r.second >= k) kept.push_back(r);
    write_coverage_csv(out, kept);
}

void run_stats(Job& job) {
    const auto& cfg = job.cfg();
    auto ds = job.pings();
    auto stats = job.stage("user_stats", [&] { return user_stats(ds, cfg.clock); });
    job.emit_csv("user_stats.csv", [&](std::ostream& o) { write_user_stats_csv(o, stats); });
}

void run_homework(Job& job) {
    const auto table = job.homes(job.cfg().homework.window);
    job.emit_csv("home_work.csv", [&](std::ostream& o) { write_home_work_csv(o, table.rows); });
}

void run_od(Job& job) {
    const auto& cfg = job.cfg();
    const auto table = job.homes(cfg.homework.window);
    const auto od = od_matrix(table.rows);
    job.emit_csv("od.csv", [&](std::ostream& o) { write_od_csv(o, od, cfg.k_anonymity); });
    job.emit_csv("od_coverage.csv", [&](std::ostream& o) {
        write_counts_csv(o,
                         {{"users", od.coverage.users},
                          {"with_home_and_work", od.coverage.with_both},
                          {"missing_home", od.coverage.missing_home},
                          {"missing_work", od.coverage.missing_work}},
                         cfg.k_anonymity);
    });
}

void run_landuse(Job& job) {
    const auto& cfg = job.cfg();
    auto tess = job.tessellation();
    auto ds = job.pings();
    auto profiles =
        job.stage("tile_profiles", [&] { return tile_activity_profiles(ds, tess, cfg.clock, cfg.count_mode); });
    const auto users = job.stage("tile_users", [&] { return tile_user_counts(ds, tess); });
    std::vector<ActivityProfile> kept;
    for (auto& p : profiles) {
        auto it = users.find(p.tile_id);
        if (it != users.end() && it->second >= cfg.k_anonymity) kept.push_back(std::move(p));
    }
    job.count("tiles_with_activity", profiles.size());
    job.count("tiles_suppressed", profiles.size() - kept.size());
    std::vector<std::string> excluded;
    const auto normalized = normalize_profiles(kept, &excluded);
    if (normalized.size() < cfg.landuse_k)
        throw DataError("only " + std::to_string(normalized.size()) + " tiles have at least k_anonymity users; "
                        "cannot form " + std::to_string(cfg.landuse_k) + " clusters");
    const auto clustering =
        job.stage("cluster", [&] { return hierarchical_cluster(normalized, cfg.landuse_k, cfg.linkage, cfg.metric); });
    const auto signatures = cluster_signatures(normalized, clustering);

    job.emit_csv("tile_profiles.csv", [&](std::ostream& o) { write_profiles_csv(o, kept); });
    job.emit_csv("landuse_labels.csv", [&](std::ostream& o) { write_labels_csv(o, clustering); });
    job.emit_csv("landuse_merge_tree.csv", [&](std::ostream& o) { write_merge_tree_csv(o, clustering); });
    job.emit_csv("landuse_signatures.csv", [&](std::ostream& o) {
        o << "cluster,hour_of_week,share\n";
        for (std::size_t c = 0; c < signatures.size(); ++c)
            for (std::size_t h = 0; h < kHoursPerWeek; ++h)
                csv::row(o, {csv::num(std::uint64_t{c}), csv::num(std::uint64_t{h}), csv::num(signatures[c][h])});
    });
    std::map<std::string, nlohmann::json> labels;
    for (const auto& [tile, label] : clustering.label_map()) labels[tile] = label;
    job.emit("landuse.geojson", to_geojson(*tess, labels, "cluster").dump() + "\n", false);
}

void run_displacement(Job& job) {
    const auto& cfg = job.cfg();
    const EventConfig& event = *cfg.event;
    auto homes = std::make_shared<const HomeTable>(job.homes(event.baseline));
    auto tess = job.tessellation();
    auto ds = job.pings();
    const auto series = job.stage("displacement_series", [&] {
        return displacement_series(ds, homes, event, cfg.displacement, SeriesWindow::observation);
    });
    const auto before = job.stage("baseline_series", [&] {
        return displacement_series(ds, homes, event, cfg.displacement, SeriesWindow::baseline);
    });
    const auto grouping = group_users(*homes, *tess, cfg.grouping, event);
    const auto rates = displacement_rates(series.records, grouping, cfg.k_anonymity);
    const auto base_rates = displacement_rates(before.records, grouping, cfg.k_anonymity);

    std::size_t with_home = 0;
    for (const auto& r : homes->rows) with_home += r.home.has_value();
    job.emit_csv("rates.csv", [&](std::ostream& o) { write_rates_csv(o, rates); });
    job.emit_csv("baseline_rates.csv", [&](std::ostream& o) { write_rates_csv(o, base_rates); });
    job.emit_csv("coverage.csv", [&](std::ostream& o) {
        write_counts_csv(o,
                         {{"baseline_users", homes->rows.size()},
                          {"users_with_home", with_home},
                          {"users_without_home", homes->rows.size() - with_home},
                          {"observed_users", series.users_with_nights},
                          {"observed_users_without_home", series.users_without_home},
                          {"users_missing_attribute", grouping.users_missing_attribute}},
                         cfg.k_anonymity);
    });
    job.emit_chart_file("rates.svg", rate_chart(rates, "Displacement rate after the event"));
    job.emit_chart_file("baseline_rates.svg", rate_chart(base_rates, "Displacement rate before the event"));
}

void run_anomalies(Job& job) {
    const auto& cfg = job.cfg();
    auto tess = job.tessellation();
    auto ds = job.pings();
    const auto rows = job.stage(
        "anomalies", [&] { return tile_population_anomalies(ds, tess, cfg.clock, *cfg.event, cfg.k_anonymity); });
    job.emit_csv("anomalies.csv", [&](std::ostream& o) { write_anomalies_csv(o, rows); });
    job.emit_chart_file("anomalies.svg", anomaly_chart(rows));
}

void run_poi(Job& job) {
    const auto& cfg = job.cfg();
    job.digest("pois", *cfg.poi_path);
    const auto list = load_pois(*cfg.poi_path, cfg.poi_radius_m);
    auto pois = std::make_shared<const PoiSet>(list);
    job.count("pois", list.size());
    auto ds = job.pings();
    const auto visits = job.stage("daily_visits", [&] { return daily_visits(ds, pois, cfg.clock); });
    job.emit_csv("visits.csv", [&](std::ostream& o) { write_visits_csv(o, visits, cfg.k_anonymity); });
    if (cfg.event) {
        const auto change = visit_rate_change(visits, list, *cfg.event, cfg.clock, cfg.k_anonymity);
        job.emit_csv("visit_change.csv", [&](std::ostream& o) { write_visit_change_csv(o, change); });
    }
}

void run_grid(Job& job) {
    auto tess = job.tessellation();
    job.emit("tessellation.geojson", to_geojson(*tess).dump() + "\n", false);
}

const std::map<std::string, std::pair<std::string, void (*)(Job&)>>& commands() {
    static const std::map<std::string, std::pair<std::string, void (*)(Job&)>> table = {
        {"stats", {"per-user activity statistics", run_stats}},
        {"homework", {"home and work anchors per user", run_homework}},
        {"od", {"home-to-work origin-destination matrix", run_od}},
        {"landuse", {"hour-of-week tile profiles and land-use clusters", run_landuse}},
        {"displacement", {"post-event displacement rates by group", run_displacement}},
        {"anomalies", {"tile population anomalies around an event", run_anomalies}},
        {"poi", {"daily POI visitors and event-relative change", run_poi}},
        {"grid", {"write a regular grid tessellation as GeoJSON", run_grid}},
    };
    return table;
}

struct ParsedArgs {
    std::string subcommand;
    std::string config;
    std::size_t workers = 0;
    std::string out;
    std::vector<std::string> extras;
};

std::unique_ptr<CLI::App> make_app(ParsedArgs& a) {
    auto app = std::make_unique<CLI::App>("Mobility analytics for disaster risk management.", kToolName);
    app->require_subcommand(1, 1);
    app->footer(
        "Any setting can be overridden on the command line as --section.key VALUE or\n"
        "--section.key=VALUE, e.g. --engine.workers 8 --event.epicenter \"[-98.2, 19.0]\".\n"
        "Flags win over the config file. Exit status: 0 ok, 2 usage or config error, 1 runtime error.");
    for (const auto& name : subcommands()) {
        auto* sub = app->add_subcommand(name, commands().at(name).first);
        sub->allow_extras();
        sub->add_option("--config", a.config, "TOML config file");
        sub->add_option("--workers", a.workers, "worker threads (engine.workers)")->check(CLI::PositiveNumber);
        sub->add_option("--out", a.out, "output directory (output.dir)");
        sub->callback([&a, name] { a.subcommand = name; });
    }
    return app;
}

/// Quoted TOML basic string, so the value is never read as a number or date.
std::string toml_string(const std::string& s) {
    std::ostringstream os;
    os << toml::value<std::string>(s);
    return os.str();
}

std::vector<Override> parse_overrides(const std::vector<std::string>& extras) {
    std::vector<Override> out;
    for (std::size_t i = 0; i < extras.size(); ++i) {
        const std::string& tok = extras[i];
        if (tok.rfind("--", 0) != 0 || tok.size() == 2)
            throw ConfigError("unexpected argument '" + tok + "'");
        const auto eq = tok.find('=');
        if (eq != std::string::npos) {
            out.emplace_back(tok.substr(2, eq - 2), tok.substr(eq + 1));
        } else {
            if (i + 1 >= extras.size()) throw ConfigError("missing value for '" + tok + "'");
            out.emplace_back(tok.substr(2), extras[++i]);
        }
        if (out.back().first.find('.') == std::string::npos)
            throw ConfigError("unknown option '--" + out.back().first + "'");
    }
    return out;
}

}  // namespace

std::string sha256_file(const fs::path& path) {
    std::uintmax_t bytes = 0;
    return hash_file(path, bytes);
}

std::string usage() {
    ParsedArgs a;
    return make_app(a)->help();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    ParsedArgs a;
    auto app = make_app(a);
    if (!args.empty() && args[0].rfind('-', 0) != 0 && !commands().count(args[0])) {
        err << "error: unknown subcommand '" << args[0] << "'\n\n" << app->help();
        return 2;
    }
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app->parse(reversed);
    } catch (const CLI::CallForHelp&) {
        const auto subs = app->get_subcommands();
        out << (subs.empty() ? app->help() : subs.front()->help());
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app->help();
        return 2;
    }
    a.extras = app->get_subcommand(a.subcommand)->remaining();

    RunConfig cfg;
    try {
        auto overrides = parse_overrides(a.extras);
        if (a.workers) overrides.emplace_back("engine.workers", std::to_string(a.workers));
        if (!a.out.empty()) overrides.emplace_back("output.dir", toml_string(a.out));
        std::optional<fs::path> config_path;
        if (!a.config.empty()) config_path = a.config;
        cfg = load_run_config(a.subcommand, config_path, overrides);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        fs::create_directories(cfg.output_dir);
    } catch (const std::exception& e) {
        err << "error: cannot create output directory: " << e.what() << '\n';
        return 1;
    }

    Job job(cfg, err);
    job.manifest().started_utc = utc_now();
    if (cfg.config_path) job.digest("config", *cfg.config_path);
    int code = 0;
    try {
        commands().at(cfg.subcommand).second(job);
        job.finish_counts();
    } catch (const ConfigError& e) {
        job.manifest().status = "failed";
        job.manifest().error = e.what();
        err << "config error: " << e.what() << '\n';
        code = 2;
    } catch (const std::exception& e) {
        job.manifest().status = "failed";
        job.manifest().error = e.what();
        err << "error: " << e.what() << '\n';
        code = 1;
    }
    try {
        job.manifest().write(cfg, cfg.output_dir / "manifest.toml");
    } catch (const std::exception& e) {
        err << "error: cannot write manifest: " << e.what() << '\n';
        return 1;
    }
    if (code == 0) out << "wrote " << job.manifest().outputs.size() << " outputs to " << cfg.output_dir.string() << '\n';
    return code;
}

}  // namespace drmob::cli
