#include "drmob/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include <zlib.h>

#include "drmob/errors.hpp"

namespace drmob {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename T>
bool parse_full(std::string_view s, T& out) {
    if (s.empty()) return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

struct Columns {
    std::size_t user = 0;
    std::size_t timestamp = 0;
    std::size_t lat = 0;
    std::size_t lon = 0;
    std::optional<std::size_t> accuracy;
};

Columns resolve_columns(const PingSchemaConfig& schema, const std::vector<std::string_view>& header,
                        const std::filesystem::path& path) {
    auto find = [&](const std::string& name) -> std::optional<std::size_t> {
        if (schema.has_header) {
            for (std::size_t i = 0; i < header.size(); ++i)
                if (trim(header[i]) == name) return i;
            return std::nullopt;
        }
        std::size_t idx = 0;
        if (!parse_full(std::string_view(name), idx)) return std::nullopt;
        return idx;
    };
    auto required = [&](const std::string& name) {
        auto i = find(name);
        if (!i) throw DataError(path.string() + ": mapped column '" + name + "' not found");
        return *i;
    };
    Columns c;
    c.user = required(schema.user_id);
    c.timestamp = required(schema.timestamp);
    c.lat = required(schema.lat);
    c.lon = required(schema.lon);
    if (schema.accuracy) c.accuracy = find(*schema.accuracy);
    return c;
}

std::filesystem::path inflate_gzip(const std::filesystem::path& src, const std::filesystem::path& dir,
                                   std::size_t index) {
    gzFile in = gzopen(src.c_str(), "rb");
    if (!in) throw DataError("cannot open " + src.string());
    auto dst = dir / ("input" + std::to_string(index) + ".csv");
    std::ofstream out(dst, std::ios::binary | std::ios::trunc);
    std::vector<char> buf(1 << 20);
    for (;;) {
        const int n = gzread(in, buf.data(), static_cast<unsigned>(buf.size()));
        if (n < 0) {
            gzclose(in);
            throw DataError("corrupt gzip stream in " + src.string());
        }
        if (n == 0) break;
        out.write(buf.data(), n);
    }
    gzclose(in);
    if (!out) throw DataError("cannot write " + dst.string());
    return dst;
}

/// Lines whose first byte falls in [begin, end) of one file.
class ChunkSource final : public engine::PartitionSource<Ping> {
public:
    struct Shared {
        std::filesystem::path physical;
        std::size_t file_index = 0;
        std::uint64_t data_begin = 0;
        std::uint64_t file_size = 0;
        Columns columns;
        PingSchemaConfig schema;
        std::shared_ptr<IngestReport> report;
    };

    ChunkSource(std::shared_ptr<const Shared> shared, std::uint64_t begin, std::uint64_t end)
        : shared_(std::move(shared)), begin_(begin), end_(end) {}

    std::uint64_t bytes_estimate() const override { return end_ - begin_; }

    std::vector<Ping> load(engine::Runtime& rt) const override {
        const auto& sh = *shared_;
        const std::size_t max_rows = rt.config().max_partition_rows;
        std::ifstream in(sh.physical, std::ios::binary);
        if (!in) throw DataError("cannot open " + sh.physical.string());

        bool at_line_start = begin_ == sh.data_begin;
        if (!at_line_start) {
            in.seekg(static_cast<std::streamoff>(begin_ - 1));
            char prev = 0;
            in.get(prev);
            at_line_start = prev == '\n';
        }
        std::string buf(end_ - begin_, '\0');
        in.seekg(static_cast<std::streamoff>(begin_));
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (static_cast<std::uint64_t>(in.gcount()) != buf.size())
            throw DataError("short read from " + sh.physical.string());
        if (end_ < sh.file_size && !buf.empty() && buf.back() != '\n') {
            std::string tail;
            std::getline(in, tail);
            buf += tail;
        }

        std::size_t pos = 0;
        if (!at_line_start) {
            auto nl = buf.find('\n');
            pos = nl == std::string::npos ? buf.size() : nl + 1;
        }
        const std::size_t limit = static_cast<std::size_t>(end_ - begin_);

        IngestReport::Chunk chunk;
        chunk.begin = begin_;
        chunk.end = end_;
        std::vector<Ping> out;
        std::vector<std::string_view> fields;

        while (pos < limit && pos < buf.size()) {
            auto nl = buf.find('\n', pos);
            if (nl == std::string::npos) nl = buf.size();
            std::string_view line(buf.data() + pos, nl - pos);
            const std::uint64_t line_no = chunk.lines++;
            pos = nl + 1;
            if (trim(line).empty()) continue;
            ++chunk.rows;

            split_csv_line(line, sh.schema.delimiter, fields);
            auto at = [&](std::size_t i) { return i < fields.size() ? fields[i] : std::string_view{}; };
            RawRow raw{at(sh.columns.user), at(sh.columns.timestamp), at(sh.columns.lat),
                       at(sh.columns.lon), std::nullopt};
            if (sh.columns.accuracy && *sh.columns.accuracy < fields.size())
                raw.accuracy = fields[*sh.columns.accuracy];

            auto v = validate_ping(raw, sh.schema.timestamp_unit);
            if (auto* p = std::get_if<Ping>(&v)) {
                if (out.size() == max_rows) throw engine::PartitionTooLarge("input chunk too large");
                out.push_back(std::move(*p));
                ++chunk.emitted;
            } else {
                const auto reason = std::get<RejectReason>(v);
                ++chunk.rejected_by_reason[static_cast<std::size_t>(reason)];
                if (chunk.rejects.size() < IngestReport::kMaxLoggedRejects)
                    chunk.rejects.push_back({line_no, reason});
            }
        }
        sh.report->record(sh.file_index, std::move(chunk));
        return out;
    }

    std::vector<engine::SourcePtr<Ping>> split() const override {
        if (end_ - begin_ < 2) return {};
        const std::uint64_t mid = begin_ + (end_ - begin_) / 2;
        return {std::make_shared<ChunkSource>(shared_, begin_, mid),
                std::make_shared<ChunkSource>(shared_, mid, end_)};
    }

private:
    std::shared_ptr<const Shared> shared_;
    std::uint64_t begin_;
    std::uint64_t end_;
};

}  // namespace

std::optional<TimestampUnit> parse_timestamp_unit(std::string_view s) {
    if (s == "seconds" || s == "s") return TimestampUnit::seconds;
    if (s == "milliseconds" || s == "ms") return TimestampUnit::milliseconds;
    if (s == "auto") return TimestampUnit::automatic;
    return std::nullopt;
}

PingSchemaConfig PingSchemaConfig::positional() {
    PingSchemaConfig c;
    c.user_id = "0";
    c.timestamp = "1";
    c.lat = "2";
    c.lon = "3";
    c.accuracy = "4";
    c.has_header = false;
    return c;
}

void PingSchemaConfig::validate() const {
    if (user_id.empty() || timestamp.empty() || lat.empty() || lon.empty())
        throw ConfigError("schema: user_id, timestamp, lat and lon columns must all be mapped");
    if (delimiter == '"' || delimiter == '\n' || delimiter == '\r')
        throw ConfigError("schema: invalid delimiter");
}

void FilterSpec::validate() const {
    if (bbox) bbox->validate();
    if (max_accuracy_m && !(*max_accuracy_m >= 0.0))
        throw ConfigError("filter: max_accuracy_m must be >= 0");
}

bool FilterSpec::accepts(const Ping& p) const {
    if (bbox && !bbox->contains(p.lon, p.lat)) return false;
    if (time_window && !time_window->contains(p.timestamp)) return false;
    if (max_accuracy_m && p.accuracy_m && *p.accuracy_m > *max_accuracy_m) return false;
    if (user_allowlist && !user_allowlist->contains(p.user_id)) return false;
    return true;
}

std::string_view to_string(RejectReason r) {
    switch (r) {
        case RejectReason::bad_coordinate: return "bad_coordinate";
        case RejectReason::bad_timestamp: return "bad_timestamp";
        case RejectReason::empty_user: return "empty_user";
        case RejectReason::bad_accuracy: return "bad_accuracy";
    }
    return "?";
}

void split_csv_line(std::string_view line, char delimiter, std::vector<std::string_view>& out) {
    out.clear();
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::size_t pos = 0;
    for (;;) {
        if (pos < line.size() && line[pos] == '"') {
            std::size_t close = pos + 1;
            while (close < line.size()) {
                if (line[close] == '"') {
                    if (close + 1 < line.size() && line[close + 1] == '"') {
                        close += 2;
                        continue;
                    }
                    break;
                }
                ++close;
            }
            out.push_back(line.substr(pos + 1, std::min(close, line.size()) - pos - 1));
            auto next = line.find(delimiter, close);
            if (next == std::string_view::npos) return;
            pos = next + 1;
            continue;
        }
        auto next = line.find(delimiter, pos);
        if (next == std::string_view::npos) {
            out.push_back(line.substr(pos));
            return;
        }
        out.push_back(line.substr(pos, next - pos));
        pos = next + 1;
    }
}

Validated validate_ping(const RawRow& row, TimestampUnit unit) {
    Ping p;
    const auto user = trim(row.user_id);
    if (user.empty()) return RejectReason::empty_user;

    const auto ts_text = trim(row.timestamp);
    std::int64_t ts = 0;
    if (!parse_full(ts_text, ts)) {
        double d = 0;
        if (!parse_full(ts_text, d) || !std::isfinite(d) || std::abs(d) > 9e18)
            return RejectReason::bad_timestamp;
        ts = static_cast<std::int64_t>(std::floor(d));
    }
    const bool millis = unit == TimestampUnit::milliseconds ||
                        (unit == TimestampUnit::automatic && ts > kMillisecondThreshold);
    if (millis) ts = ts >= 0 ? ts / 1000 : -((-ts + 999) / 1000);
    if (ts < 0 || ts >= kMaxSupportedTimestamp) return RejectReason::bad_timestamp;

    double lat = 0, lon = 0;
    if (!parse_full(trim(row.lat), lat) || !parse_full(trim(row.lon), lon) || !std::isfinite(lat) ||
        !std::isfinite(lon) || !is_valid_coordinate(lon, lat))
        return RejectReason::bad_coordinate;

    if (row.accuracy) {
        const auto acc_text = trim(*row.accuracy);
        if (!acc_text.empty()) {
            double acc = 0;
            if (!parse_full(acc_text, acc) || !(acc >= 0.0) || !std::isfinite(acc))
                return RejectReason::bad_accuracy;
            p.accuracy_m = acc;
        }
    }
    p.user_id = std::string(user);
    p.timestamp = ts;
    p.lat = lat;
    p.lon = lon;
    return p;
}

// ---------------------------------------------------------------------------

std::size_t IngestReport::add_file(File f) {
    std::lock_guard lock(mutex_);
    files_.push_back(std::move(f));
    chunks_.emplace_back();
    return files_.size() - 1;
}

bool IngestReport::file_complete(std::size_t file) const {
    const auto& f = files_[file];
    std::uint64_t covered = 0;
    for (const auto& [begin, c] : chunks_[file]) covered += c.end - c.begin;
    return covered == f.data_end - f.data_begin;
}

IngestReport::Totals IngestReport::file_totals_locked(std::size_t file) const {
    Totals t;
    for (const auto& [begin, c] : chunks_[file]) {
        t.read += c.rows;
        t.emitted += c.emitted;
        for (std::size_t r = 0; r < kRejectReasonCount; ++r) {
            t.rejected += c.rejected_by_reason[r];
            t.rejected_by_reason[r] += c.rejected_by_reason[r];
        }
    }
    return t;
}

void IngestReport::record(std::size_t file, Chunk chunk) {
    std::lock_guard lock(mutex_);
    chunks_.at(file)[chunk.begin] = std::move(chunk);
    if (!file_complete(file)) return;
    const Totals t = file_totals_locked(file);
    if (t.read > 0 && 2 * t.rejected > t.read)
        throw DataError(files_[file].path.string() + ": " + std::to_string(t.rejected) + " of " +
                        std::to_string(t.read) + " rows invalid (>50%), likely a schema mismatch");
}

IngestReport::Totals IngestReport::totals() const {
    std::lock_guard lock(mutex_);
    Totals all;
    for (std::size_t f = 0; f < files_.size(); ++f) {
        const Totals t = file_totals_locked(f);
        all.read += t.read;
        all.emitted += t.emitted;
        all.rejected += t.rejected;
        for (std::size_t r = 0; r < kRejectReasonCount; ++r)
            all.rejected_by_reason[r] += t.rejected_by_reason[r];
    }
    return all;
}

IngestReport::Totals IngestReport::file_totals(std::size_t file) const {
    std::lock_guard lock(mutex_);
    return file_totals_locked(file);
}

bool IngestReport::complete() const {
    std::lock_guard lock(mutex_);
    for (std::size_t f = 0; f < files_.size(); ++f)
        if (!file_complete(f)) return false;
    return true;
}

void IngestReport::write_rejects(const std::filesystem::path& out_path) const {
    std::lock_guard lock(mutex_);
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + out_path.string());
    out << "file,line,reason\n";
    std::size_t written = 0;
    for (std::size_t f = 0; f < files_.size(); ++f) {
        std::uint64_t line_base = files_[f].header_lines;
        for (const auto& [begin, c] : chunks_[f]) {
            for (const auto& r : c.rejects) {
                if (written == kMaxLoggedRejects) return;
                out << files_[f].path.string() << ',' << (line_base + r.line + 1) << ','
                    << to_string(r.reason) << '\n';
                ++written;
            }
            line_base += c.lines;
        }
    }
}

// ---------------------------------------------------------------------------

PingInput read_pings(const engine::Session& session, const std::vector<std::filesystem::path>& paths,
                     const PingSchemaConfig& schema) {
    schema.validate();
    auto report = std::make_shared<IngestReport>();
    std::vector<engine::SourcePtr<Ping>> parts;
    const auto& cfg = session.config();

    for (std::size_t i = 0; i < paths.size(); ++i) {
        const auto& path = paths[i];
        if (!std::filesystem::is_regular_file(path))
            throw DataError("input file not found: " + path.string());
        std::filesystem::path physical = path;
        if (path.extension() == ".gz") physical = inflate_gzip(path, session.runtime().spill_dir(), i);

        std::ifstream in(physical, std::ios::binary);
        if (!in) throw DataError("cannot open " + path.string());
        const auto file_size = std::filesystem::file_size(physical);

        std::uint64_t data_begin = 0;
        std::vector<std::string_view> header;
        std::string header_line;
        if (schema.has_header) {
            std::getline(in, header_line);
            data_begin = std::min<std::uint64_t>(header_line.size() + 1, file_size);
            split_csv_line(header_line, schema.delimiter, header);
        }
        auto shared = std::make_shared<ChunkSource::Shared>();
        shared->physical = physical;
        shared->data_begin = data_begin;
        shared->file_size = file_size;
        shared->columns = resolve_columns(schema, header, path);
        shared->schema = schema;
        shared->report = report;
        shared->file_index =
            report->add_file({path, data_begin, file_size, schema.has_header ? 1u : 0u});

        // Size chunks so the expected row count stays below max_partition_rows.
        std::string sample(std::min<std::uint64_t>(file_size - data_begin, 1 << 16), '\0');
        in.seekg(static_cast<std::streamoff>(data_begin));
        in.read(sample.data(), static_cast<std::streamsize>(sample.size()));
        const auto lines = std::max<std::size_t>(1, std::count(sample.begin(), sample.end(), '\n'));
        const double bytes_per_row = static_cast<double>(sample.size()) / static_cast<double>(lines);
        const auto by_rows = static_cast<std::uint64_t>(
            std::max(1.0, bytes_per_row * 0.8 * static_cast<double>(cfg.max_partition_rows)));
        const std::uint64_t chunk =
            std::max<std::uint64_t>(1, std::min({cfg.chunk_bytes, cfg.max_partition_bytes, by_rows}));

        std::shared_ptr<const ChunkSource::Shared> frozen = shared;
        for (std::uint64_t b = data_begin; b < file_size; b += chunk)
            parts.push_back(std::make_shared<ChunkSource>(frozen, b, std::min(file_size, b + chunk)));
    }
    const auto id = session.plan().add_stage(engine::StageKind::source, "read_pings", {});
    return {engine::Dataset<Ping>(session, id, std::move(parts)), std::move(report)};
}

engine::Dataset<Ping> filter_pings(const engine::Dataset<Ping>& ds, const FilterSpec& spec) {
    spec.validate();
    if (spec.empty()) return ds;
    return engine::filter(ds, [spec](const Ping& p) { return spec.accepts(p); }, "filter_pings");
}

}  // namespace drmob
