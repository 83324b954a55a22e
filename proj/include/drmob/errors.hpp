#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace drmob {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or parameters. The CLI maps this to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A violated operation precondition (e.g. empty input to mean shift).
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Unknown field referenced in a record schema.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Input data that cannot be processed (missing file, bad tessellation, ...).
class DataError : public Error {
public:
    using Error::Error;
};

/// Execution plan is malformed (cycle, dangling input).
class PlanError : public Error {
public:
    using Error::Error;
};

/// A user function failed while a partition was being processed.
class PartitionError : public Error {
public:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    PartitionError(std::size_t partition_id, std::size_t row_index, const std::string& what)
        : Error(describe(partition_id, row_index, what)),
          partition_id_(partition_id),
          row_index_(row_index) {}

    std::size_t partition_id() const noexcept { return partition_id_; }
    /// npos when the failure is not attributable to a single row.
    std::size_t row_index() const noexcept { return row_index_; }

private:
    static std::string describe(std::size_t p, std::size_t r, const std::string& what) {
        std::string s = "partition " + std::to_string(p);
        if (r != npos) s += ", row " + std::to_string(r);
        return s + ": " + what;
    }

    std::size_t partition_id_;
    std::size_t row_index_;
};

}  // namespace drmob
