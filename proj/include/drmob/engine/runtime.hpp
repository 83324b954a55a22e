#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>

namespace drmob::engine {

struct EngineConfig {
    std::size_t worker_count = 1;
    std::size_t max_partition_rows = 1'000'000;
    std::uint64_t max_partition_bytes = 256ull << 20;
    /// Target size of one input-file chunk.
    std::uint64_t chunk_bytes = 128ull << 20;
    /// Root for spill files; empty means the system temp directory.
    std::filesystem::path work_dir;

    void validate() const;
};

/// Counts rows held by materialized partitions. Every partition handed to a
/// worker carries a lease; the peak is what the memory bound is asserted on.
class MaterializationTracker {
public:
    class Lease {
    public:
        Lease() = default;
        Lease(const Lease&) = delete;
        Lease& operator=(const Lease&) = delete;
        Lease(Lease&& o) noexcept : owner_(o.owner_), rows_(o.rows_) { o.owner_ = nullptr; }
        Lease& operator=(Lease&& o) noexcept {
            if (this != &o) {
                release();
                owner_ = o.owner_;
                rows_ = o.rows_;
                o.owner_ = nullptr;
            }
            return *this;
        }
        ~Lease() { release(); }

        /// The partition now holds `rows` rows (e.g. after a map changed its size).
        void resize(std::size_t rows);
        void release();
        std::size_t rows() const noexcept { return rows_; }

    private:
        friend class MaterializationTracker;
        Lease(MaterializationTracker* owner, std::size_t rows) : owner_(owner), rows_(rows) {}
        MaterializationTracker* owner_ = nullptr;
        std::size_t rows_ = 0;
    };

    Lease acquire(std::size_t rows);

    std::int64_t live_rows() const noexcept { return live_rows_.load(); }
    std::int64_t peak_rows() const noexcept { return peak_rows_.load(); }
    std::int64_t live_partitions() const noexcept { return live_parts_.load(); }
    std::int64_t peak_partitions() const noexcept { return peak_parts_.load(); }
    void reset_peaks();

private:
    void add_rows(std::int64_t delta);

    std::atomic<std::int64_t> live_rows_{0};
    std::atomic<std::int64_t> peak_rows_{0};
    std::atomic<std::int64_t> live_parts_{0};
    std::atomic<std::int64_t> peak_parts_{0};
};

/// Worker pool settings, materialization accounting and spill space for one session.
class Runtime {
public:
    explicit Runtime(EngineConfig config);
    ~Runtime();
    Runtime(const Runtime&) = delete;
    Runtime& operator=(const Runtime&) = delete;

    const EngineConfig& config() const noexcept { return config_; }
    void set_worker_count(std::size_t n);
    std::size_t worker_count() const noexcept { return config_.worker_count; }

    MaterializationTracker& tracker() noexcept { return tracker_; }

    /// Runs fn(i) for i in [0, n) on up to worker_count threads. After a failure
    /// no new indices are started; the failure with the lowest index is rethrown.
    void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

    /// Directory for this session's spill files, created on first use.
    const std::filesystem::path& spill_dir();

private:
    EngineConfig config_;
    MaterializationTracker tracker_;
    std::mutex spill_mutex_;
    std::filesystem::path spill_dir_;
};

}  // namespace drmob::engine
