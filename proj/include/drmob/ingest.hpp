#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

#include "drmob/core.hpp"
#include "drmob/engine/dataset.hpp"
#include "drmob/records.hpp"

namespace drmob {

enum class TimestampUnit { seconds, milliseconds, automatic };

std::optional<TimestampUnit> parse_timestamp_unit(std::string_view s);

/// Column mapping for ping CSV files. With a header, mapped values are column
/// names; without one they are zero-based column indices ("0", "1", ...).
struct PingSchemaConfig {
    std::string user_id = "user_id";
    std::string timestamp = "timestamp";
    std::string lat = "lat";
    std::string lon = "lon";
    std::optional<std::string> accuracy = std::string("accuracy");
    TimestampUnit timestamp_unit = TimestampUnit::automatic;
    char delimiter = ',';
    bool has_header = true;

    /// Columns 0..4 in default order, no header.
    static PingSchemaConfig positional();
    void validate() const;
};

struct FilterSpec {
    std::optional<BBox> bbox;
    std::optional<TimeWindow> time_window;
    std::optional<double> max_accuracy_m;
    std::optional<std::unordered_set<std::string>> user_allowlist;

    /// Throws ConfigError on a malformed bbox or negative accuracy limit.
    void validate() const;
    bool empty() const noexcept {
        return !bbox && !time_window && !max_accuracy_m && !user_allowlist;
    }
    /// True iff the ping satisfies every present criterion. Pings without an
    /// accuracy value always pass the accuracy criterion.
    bool accepts(const Ping& p) const;
};

enum class RejectReason : std::uint8_t { bad_coordinate, bad_timestamp, empty_user, bad_accuracy };
inline constexpr std::size_t kRejectReasonCount = 4;
std::string_view to_string(RejectReason r);

/// Unparsed fields of one input row.
struct RawRow {
    std::string_view user_id;
    std::string_view timestamp;
    std::string_view lat;
    std::string_view lon;
    std::optional<std::string_view> accuracy;
};

using Validated = std::variant<Ping, RejectReason>;

/// Checks are applied in order: empty_user, bad_timestamp, bad_coordinate, bad_accuracy.
Validated validate_ping(const RawRow& row, TimestampUnit unit = TimestampUnit::automatic);

/// Splits one CSV line. Fields may be wrapped in double quotes; embedded
/// newlines are not supported.
void split_csv_line(std::string_view line, char delimiter, std::vector<std::string_view>& out);

/// Row accounting for one read_pings call, filled as chunks are materialized.
/// Re-reading a chunk overwrites its slot, so counts never double.
class IngestReport {
public:
    static constexpr std::size_t kMaxLoggedRejects = 1'000'000;

    struct Reject {
        std::uint64_t line = 0;  // line within the chunk, 0-based
        RejectReason reason{};
    };
    struct Chunk {
        std::uint64_t begin = 0;
        std::uint64_t end = 0;
        std::uint64_t lines = 0;
        std::uint64_t rows = 0;
        std::uint64_t emitted = 0;
        std::array<std::uint64_t, kRejectReasonCount> rejected_by_reason{};
        std::vector<Reject> rejects;
    };
    struct File {
        std::filesystem::path path;
        std::uint64_t data_begin = 0;
        std::uint64_t data_end = 0;
        std::uint64_t header_lines = 0;
    };
    struct Totals {
        std::uint64_t read = 0;
        std::uint64_t emitted = 0;
        std::uint64_t rejected = 0;
        std::array<std::uint64_t, kRejectReasonCount> rejected_by_reason{};
    };

    std::size_t add_file(File f);
    /// Stores the chunk and, once every byte of the file is accounted for,
    /// throws DataError if more than half of the file's rows were rejected.
    void record(std::size_t file, Chunk chunk);

    const std::vector<File>& files() const noexcept { return files_; }
    Totals totals() const;
    Totals file_totals(std::size_t file) const;
    bool complete() const;
    /// Writes `file,line,reason` rows (1-based physical line numbers), at most
    /// kMaxLoggedRejects of them.
    void write_rejects(const std::filesystem::path& out) const;

private:
    bool file_complete(std::size_t file) const;
    Totals file_totals_locked(std::size_t file) const;

    mutable std::mutex mutex_;
    std::vector<File> files_;
    std::vector<std::map<std::uint64_t, Chunk>> chunks_;
};

struct PingInput {
    engine::Dataset<Ping> dataset;
    std::shared_ptr<IngestReport> report;
};

/// One partition per file chunk; gzip files (".gz") are first inflated into
/// the session's spill directory. Throws DataError on a missing file or a
/// mapped column absent from the header.
PingInput read_pings(const engine::Session& session, const std::vector<std::filesystem::path>& paths,
                     const PingSchemaConfig& schema);

/// Throws ConfigError if spec is malformed.
engine::Dataset<Ping> filter_pings(const engine::Dataset<Ping>& ds, const FilterSpec& spec);

}  // namespace drmob
