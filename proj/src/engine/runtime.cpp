#include "drmob/engine/runtime.hpp"

#include <algorithm>
#include <thread>
#include <vector>

#include <unistd.h>

#include "drmob/errors.hpp"

namespace drmob::engine {

void EngineConfig::validate() const {
    if (worker_count < 1) throw ConfigError("engine: worker_count must be >= 1");
    if (max_partition_rows < 1) throw ConfigError("engine: max_partition_rows must be >= 1");
    if (max_partition_bytes < 1024) throw ConfigError("engine: max_partition_bytes must be >= 1024");
    if (chunk_bytes < 1024) throw ConfigError("engine: chunk_bytes must be >= 1024");
}

void MaterializationTracker::Lease::resize(std::size_t rows) {
    if (!owner_) return;
    owner_->add_rows(static_cast<std::int64_t>(rows) - static_cast<std::int64_t>(rows_));
    rows_ = rows;
}

void MaterializationTracker::Lease::release() {
    if (!owner_) return;
    owner_->add_rows(-static_cast<std::int64_t>(rows_));
    owner_->live_parts_.fetch_sub(1);
    owner_ = nullptr;
    rows_ = 0;
}

MaterializationTracker::Lease MaterializationTracker::acquire(std::size_t rows) {
    const auto parts = live_parts_.fetch_add(1) + 1;
    auto peak = peak_parts_.load();
    while (parts > peak && !peak_parts_.compare_exchange_weak(peak, parts)) {
    }
    add_rows(static_cast<std::int64_t>(rows));
    return Lease(this, rows);
}

void MaterializationTracker::add_rows(std::int64_t delta) {
    const auto now = live_rows_.fetch_add(delta) + delta;
    auto peak = peak_rows_.load();
    while (now > peak && !peak_rows_.compare_exchange_weak(peak, now)) {
    }
}

void MaterializationTracker::reset_peaks() {
    peak_rows_.store(live_rows_.load());
    peak_parts_.store(live_parts_.load());
}

Runtime::Runtime(EngineConfig config) : config_(std::move(config)) { config_.validate(); }

Runtime::~Runtime() {
    if (!spill_dir_.empty()) {
        std::error_code ec;
        std::filesystem::remove_all(spill_dir_, ec);
    }
}

void Runtime::set_worker_count(std::size_t n) {
    if (n < 1) throw ConfigError("engine: worker_count must be >= 1");
    config_.worker_count = n;
}

void Runtime::parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    const std::size_t threads = std::min(config_.worker_count, n);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::vector<std::exception_ptr> errors(n);

    auto work = [&] {
        for (;;) {
            if (failed.load()) return;
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
                failed.store(true);
            }
        }
    };

    if (threads == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

const std::filesystem::path& Runtime::spill_dir() {
    std::lock_guard lock(spill_mutex_);
    if (spill_dir_.empty()) {
        static std::atomic<unsigned> counter{0};
        auto root = config_.work_dir.empty() ? std::filesystem::temp_directory_path()
                                             : config_.work_dir;
        auto dir = root / ("drmob-spill-" + std::to_string(::getpid()) + "-" +
                           std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(dir);
        spill_dir_ = std::move(dir);
    }
    return spill_dir_;
}

}  // namespace drmob::engine
