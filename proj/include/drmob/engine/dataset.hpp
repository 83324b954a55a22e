#pragma once

// Lazily evaluated partitioned datasets.
//
// A Dataset is a list of partition sources plus the plan stage that produced
// it. Row-level maps are fused into the sources and cost nothing until a
// barrier (shuffle, reduce, collect) pulls partitions through them. Barriers
// run inside execute(), one partition per worker at a time, so no more than
// worker_count partitions are ever materialized together.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <unordered_map>
#include <utility>
#include <vector>

#include "drmob/engine/codec.hpp"
#include "drmob/engine/plan.hpp"
#include "drmob/engine/runtime.hpp"
#include "drmob/engine/schema.hpp"
#include "drmob/errors.hpp"

namespace drmob::engine {

/// Shared handle on a plan and the runtime that executes it.
class Session {
public:
    explicit Session(EngineConfig config = {})
        : plan_(std::make_shared<ExecutionPlan>()),
          runtime_(std::make_shared<Runtime>(std::move(config))) {}

    ExecutionPlan& plan() const noexcept { return *plan_; }
    Runtime& runtime() const noexcept { return *runtime_; }
    const EngineConfig& config() const noexcept { return runtime_->config(); }

    void execute() const { drmob::engine::execute(*plan_, *runtime_); }
    void execute(std::size_t worker_count) const {
        drmob::engine::execute(*plan_, *runtime_, worker_count);
    }

private:
    std::shared_ptr<ExecutionPlan> plan_;
    std::shared_ptr<Runtime> runtime_;
};

/// Signals that a partition would exceed max_partition_rows or max_partition_bytes.
class PartitionTooLarge : public Error {
public:
    using Error::Error;
};

/// A user transform failed on a given row of the partition being loaded.
class RowFailure : public Error {
public:
    RowFailure(std::size_t row, const std::string& what) : Error(what), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

template <typename Row>
class PartitionSource {
public:
    virtual ~PartitionSource() = default;
    /// Size hint checked against max_partition_bytes before loading.
    virtual std::uint64_t bytes_estimate() const = 0;
    /// Throws PartitionTooLarge instead of returning more than max_partition_rows rows.
    virtual std::vector<Row> load(Runtime& rt) const = 0;
    /// Two halves that together hold the same rows, or empty when unsplittable.
    virtual std::vector<std::shared_ptr<const PartitionSource>> split() const { return {}; }
};

template <typename Row>
using SourcePtr = std::shared_ptr<const PartitionSource<Row>>;

/// A materialized partition owned by exactly one worker.
template <typename Row>
struct Partition {
    std::size_t id = 0;
    std::vector<Row> records;
    std::uint64_t bytes_estimate = 0;
    MaterializationTracker::Lease lease;
};

/// Loads partition `id` and hands it to `consume`, splitting once on overflow.
/// The consumer may be called twice if the partition had to be split.
template <typename Row, typename Consumer>
void materialize(const SourcePtr<Row>& source, std::size_t id, Runtime& rt, Consumer&& consume) {
    const auto& cfg = rt.config();
    auto attempt = [&](const SourcePtr<Row>& s) -> std::optional<std::vector<Row>> {
        if (s->bytes_estimate() > cfg.max_partition_bytes) return std::nullopt;
        try {
            auto rows = s->load(rt);
            if (rows.size() > cfg.max_partition_rows) return std::nullopt;
            return rows;
        } catch (const PartitionTooLarge&) {
            return std::nullopt;
        }
    };
    auto deliver = [&](const SourcePtr<Row>& s, std::vector<Row>&& rows) {
        Partition<Row> p;
        p.id = id;
        p.bytes_estimate = s->bytes_estimate();
        p.lease = rt.tracker().acquire(rows.size());
        p.records = std::move(rows);
        consume(std::move(p));
    };

    try {
        if (auto rows = attempt(source)) {
            deliver(source, std::move(*rows));
            return;
        }
        auto halves = source->split();
        if (halves.empty())
            throw PartitionError(id, PartitionError::npos,
                                 "partition exceeds max_partition_rows/bytes and cannot be split");
        for (const auto& half : halves) {
            auto rows = attempt(half);
            if (!rows)
                throw PartitionError(id, PartitionError::npos,
                                     "partition still exceeds max_partition_rows/bytes after split retry");
            deliver(half, std::move(*rows));
        }
    } catch (const RowFailure& e) {
        throw PartitionError(id, e.row(), e.what());
    } catch (const PartitionError&) {
        throw;
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw PartitionError(id, PartitionError::npos, e.what());
    }
}

// ---------------------------------------------------------------------------
// Sources

template <typename Row>
class VectorSource final : public PartitionSource<Row> {
public:
    VectorSource(std::shared_ptr<const std::vector<Row>> rows, std::size_t begin, std::size_t end)
        : rows_(std::move(rows)), begin_(begin), end_(end) {}

    std::uint64_t bytes_estimate() const override { return (end_ - begin_) * sizeof(Row); }

    std::vector<Row> load(Runtime& rt) const override {
        if (end_ - begin_ > rt.config().max_partition_rows)
            throw PartitionTooLarge("in-memory partition too large");
        return {rows_->begin() + static_cast<std::ptrdiff_t>(begin_),
                rows_->begin() + static_cast<std::ptrdiff_t>(end_)};
    }

    std::vector<SourcePtr<Row>> split() const override {
        if (end_ - begin_ < 2) return {};
        const std::size_t mid = begin_ + (end_ - begin_) / 2;
        return {std::make_shared<VectorSource>(rows_, begin_, mid),
                std::make_shared<VectorSource>(rows_, mid, end_)};
    }

private:
    std::shared_ptr<const std::vector<Row>> rows_;
    std::size_t begin_;
    std::size_t end_;
};

/// Applies a whole-partition transform on top of a parent source.
template <typename In, typename Out>
class TransformSource final : public PartitionSource<Out> {
public:
    using Transform = std::function<std::vector<Out>(std::vector<In>&&)>;

    TransformSource(SourcePtr<In> parent, std::shared_ptr<const Transform> fn)
        : parent_(std::move(parent)), fn_(std::move(fn)) {}

    std::uint64_t bytes_estimate() const override { return parent_->bytes_estimate(); }

    std::vector<Out> load(Runtime& rt) const override {
        auto out = (*fn_)(parent_->load(rt));
        if (out.size() > rt.config().max_partition_rows)
            throw PartitionTooLarge("transform output exceeds max_partition_rows");
        return out;
    }

    std::vector<SourcePtr<Out>> split() const override {
        std::vector<SourcePtr<Out>> out;
        for (auto& half : parent_->split())
            out.push_back(std::make_shared<TransformSource>(std::move(half), fn_));
        return out;
    }

private:
    SourcePtr<In> parent_;
    std::shared_ptr<const Transform> fn_;
};

// ---------------------------------------------------------------------------
// Dataset

template <typename Row>
class Dataset {
public:
    Dataset(Session session, StageId stage, std::vector<SourcePtr<Row>> partitions,
            std::optional<std::string> partitioner_key = std::nullopt)
        : session_(std::move(session)),
          stage_(stage),
          partitions_(std::move(partitions)),
          partitioner_key_(std::move(partitioner_key)) {}

    const Session& session() const noexcept { return session_; }
    StageId stage() const noexcept { return stage_; }
    std::size_t partition_count() const noexcept { return partitions_.size(); }
    const std::vector<SourcePtr<Row>>& partitions() const noexcept { return partitions_; }
    /// Set when rows with equal values of this key are guaranteed co-located.
    const std::optional<std::string>& partitioner_key() const noexcept { return partitioner_key_; }

private:
    Session session_;
    StageId stage_;
    std::vector<SourcePtr<Row>> partitions_;
    std::optional<std::string> partitioner_key_;
};

/// Result of a barrier, filled when the plan executes. get() executes pending
/// stages if needed.
template <typename T>
class Deferred {
public:
    Deferred(Session session, std::shared_ptr<std::optional<T>> slot)
        : session_(std::move(session)), slot_(std::move(slot)) {}

    bool ready() const noexcept { return slot_->has_value(); }
    T& get() const {
        if (!slot_->has_value()) session_.execute();
        return **slot_;
    }

private:
    Session session_;
    std::shared_ptr<std::optional<T>> slot_;
};

template <typename Row>
using KeyedTable = std::vector<std::pair<std::string, Row>>;

/// Splits `rows` into `partition_count` contiguous in-memory partitions.
template <typename Row>
Dataset<Row> from_vector(const Session& session, std::vector<Row> rows, std::size_t partition_count,
                         std::string name = "from_vector") {
    auto shared = std::make_shared<const std::vector<Row>>(std::move(rows));
    std::vector<SourcePtr<Row>> parts;
    const std::size_t n = shared->size();
    for (std::size_t p = 0; p < partition_count; ++p) {
        const std::size_t b = n * p / partition_count;
        const std::size_t e = n * (p + 1) / partition_count;
        parts.push_back(std::make_shared<VectorSource<Row>>(shared, b, e));
    }
    const StageId id = session.plan().add_stage(StageKind::source, std::move(name), {});
    return Dataset<Row>(session, id, std::move(parts));
}

/// One in-memory partition per inner vector.
template <typename Row>
Dataset<Row> from_partitions(const Session& session, std::vector<std::vector<Row>> partitions,
                             std::string name = "from_partitions") {
    std::vector<SourcePtr<Row>> parts;
    for (auto& p : partitions) {
        const std::size_t n = p.size();
        parts.push_back(std::make_shared<VectorSource<Row>>(
            std::make_shared<const std::vector<Row>>(std::move(p)), 0, n));
    }
    const StageId id = session.plan().add_stage(StageKind::source, std::move(name), {});
    return Dataset<Row>(session, id, std::move(parts));
}

/// Applies a whole-partition transform. Partition count is unchanged.
template <typename Out, typename In>
Dataset<Out> transform_partitions(const Dataset<In>& ds,
                                  std::function<std::vector<Out>(std::vector<In>&&)> fn,
                                  std::string name = "transform",
                                  std::optional<std::string> keep_key = std::nullopt) {
    auto shared = std::make_shared<const typename TransformSource<In, Out>::Transform>(std::move(fn));
    std::vector<SourcePtr<Out>> parts;
    parts.reserve(ds.partition_count());
    for (const auto& p : ds.partitions())
        parts.push_back(std::make_shared<TransformSource<In, Out>>(p, shared));
    const StageId id = ds.session().plan().add_stage(StageKind::map, std::move(name), {ds.stage()});
    return Dataset<Out>(ds.session(), id, std::move(parts), std::move(keep_key));
}

namespace detail {

template <typename T>
struct is_optional : std::false_type {};
template <typename T>
struct is_optional<std::optional<T>> : std::true_type {
    using value_type = T;
};

template <typename R>
struct map_output {
    using type = R;
};
template <typename T>
struct map_output<std::optional<T>> {
    using type = T;
};

}  // namespace detail

/// Row transform: fn(const In&) returning Out, or std::optional<Out> to drop rows.
/// Failures are reported with partition id and row index.
template <typename In, typename Fn>
auto map_partitions(const Dataset<In>& ds, Fn fn, std::string name = "map") {
    using R = std::invoke_result_t<Fn&, const In&>;
    using Out = typename detail::map_output<R>::type;
    return transform_partitions<Out, In>(
        ds,
        [fn = std::move(fn)](std::vector<In>&& rows) {
            std::vector<Out> out;
            out.reserve(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                try {
                    if constexpr (detail::is_optional<R>::value) {
                        if (auto v = fn(rows[i])) out.push_back(std::move(*v));
                    } else {
                        out.push_back(fn(rows[i]));
                    }
                } catch (const std::exception& e) {
                    throw RowFailure(i, e.what());
                }
            }
            return out;
        },
        std::move(name));
}

/// Row transform emitting zero or more rows: fn(const In&, std::vector<Out>&).
template <typename Out, typename In, typename Fn>
Dataset<Out> flat_map_partitions(const Dataset<In>& ds, Fn fn, std::string name = "flat_map") {
    return transform_partitions<Out, In>(
        ds,
        [fn = std::move(fn)](std::vector<In>&& rows) {
            std::vector<Out> out;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                try {
                    fn(rows[i], out);
                } catch (const std::exception& e) {
                    throw RowFailure(i, e.what());
                }
            }
            return out;
        },
        std::move(name));
}

/// Keeps rows satisfying pred; order and co-location are preserved.
template <typename Row, typename Pred>
Dataset<Row> filter(const Dataset<Row>& ds, Pred pred, std::string name = "filter") {
    return transform_partitions<Row, Row>(
        ds,
        [pred = std::move(pred)](std::vector<Row>&& rows) {
            std::vector<Row> out;
            out.reserve(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                try {
                    if (pred(rows[i])) out.push_back(std::move(rows[i]));
                } catch (const std::exception& e) {
                    throw RowFailure(i, e.what());
                }
            }
            return out;
        },
        std::move(name), ds.partitioner_key());
}

/// Calls fn(std::span<const In> group, std::vector<Out>& out) once per distinct
/// key, in key order within each partition. The dataset must be partitioned by `key`.
template <typename Out, Record In, typename Fn>
Dataset<Out> map_groups(const Dataset<In>& ds, const std::string& key, Fn fn,
                        std::string name = "map_groups") {
    if (ds.partitioner_key() != key)
        throw SchemaError("map_groups on '" + key + "' requires a dataset shuffled by that key");
    auto key_fn = RecordTraits<In>::schema().key(key);
    return transform_partitions<Out, In>(
        ds,
        [key_fn, fn = std::move(fn)](std::vector<In>&& rows) {
            std::vector<std::pair<std::string, std::size_t>> order(rows.size());
            KeyEncoder enc;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                key_fn(rows[i], enc);
                order[i] = {enc.bytes(), i};
            }
            std::sort(order.begin(), order.end());
            std::vector<In> sorted;
            sorted.reserve(rows.size());
            for (auto& [k, i] : order) sorted.push_back(std::move(rows[i]));
            std::vector<Out> out;
            std::size_t begin = 0;
            while (begin < sorted.size()) {
                std::size_t end = begin + 1;
                while (end < sorted.size() && order[end].first == order[begin].first) ++end;
                try {
                    fn(std::span<const In>(sorted.data() + begin, end - begin), out);
                } catch (const std::exception& e) {
                    throw RowFailure(order[begin].second, e.what());
                }
                begin = end;
            }
            return out;
        },
        std::move(name));
}

// ---------------------------------------------------------------------------
// Shuffle

namespace detail {

struct SpillSegment {
    std::size_t source = 0;
    std::size_t piece = 0;
    std::uint64_t offset = 0;
    std::uint64_t length = 0;
    std::uint64_t rows = 0;
};

/// Spill files of one shuffle stage: one file per target partition.
struct ShuffleState {
    std::vector<std::filesystem::path> files;
    std::vector<std::vector<SpillSegment>> segments;
    std::vector<std::uint64_t> file_sizes;
    std::unique_ptr<std::mutex[]> locks;

    explicit ShuffleState(std::size_t targets)
        : files(targets), segments(targets), file_sizes(targets, 0),
          locks(std::make_unique<std::mutex[]>(targets)) {}

    ~ShuffleState() {
        std::error_code ec;
        for (const auto& f : files)
            if (!f.empty()) std::filesystem::remove(f, ec);
    }

    void append(std::size_t target, std::size_t source, std::size_t piece, const std::string& bytes,
                std::uint64_t rows) {
        std::lock_guard lock(locks[target]);
        std::ofstream out(files[target], std::ios::binary | std::ios::app);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError("cannot write spill file " + files[target].string());
        segments[target].push_back({source, piece, file_sizes[target], bytes.size(), rows});
        file_sizes[target] += bytes.size();
    }
};

inline constexpr std::uint64_t kSplitSalt = 0x9e3779b97f4a7c15ull;

}  // namespace detail

template <Record Row>
class SpillSource final : public PartitionSource<Row> {
public:
    SpillSource(std::shared_ptr<const detail::ShuffleState> state, std::size_t target,
                KeyFunction<Row> key, int half = -1)
        : state_(std::move(state)), target_(target), key_(std::move(key)), half_(half) {}

    std::uint64_t bytes_estimate() const override {
        const std::uint64_t total = state_->file_sizes[target_];
        return half_ < 0 ? total : total / 2;
    }

    std::vector<Row> load(Runtime& rt) const override {
        std::vector<Row> rows;
        const auto& segs = state_->segments[target_];
        if (segs.empty()) return rows;
        std::uint64_t total_rows = 0;
        for (const auto& s : segs) total_rows += s.rows;
        if (half_ < 0 && total_rows > rt.config().max_partition_rows)
            throw PartitionTooLarge("shuffle partition too large");

        std::ifstream in(state_->files[target_], std::ios::binary);
        if (!in) throw DataError("cannot open spill file " + state_->files[target_].string());
        std::string buf;
        KeyEncoder enc;
        for (const auto& s : segs) {
            buf.resize(s.length);
            in.seekg(static_cast<std::streamoff>(s.offset));
            in.read(buf.data(), static_cast<std::streamsize>(s.length));
            if (!in) throw DataError("spill file truncated: " + state_->files[target_].string());
            ByteReader reader(buf);
            while (!reader.done()) {
                Row row = RecordTraits<Row>::decode(reader);
                if (half_ >= 0) {
                    key_(row, enc);
                    if (static_cast<int>(stable_hash(enc.bytes(), detail::kSplitSalt) % 2) != half_)
                        continue;
                }
                if (rows.size() == rt.config().max_partition_rows)
                    throw PartitionTooLarge("shuffle partition too large");
                rows.push_back(std::move(row));
            }
        }
        return rows;
    }

    /// Re-hashes the key with a second salt; co-location by key is preserved.
    std::vector<SourcePtr<Row>> split() const override {
        if (half_ >= 0) return {};
        return {std::make_shared<SpillSource>(state_, target_, key_, 0),
                std::make_shared<SpillSource>(state_, target_, key_, 1)};
    }

private:
    std::shared_ptr<const detail::ShuffleState> state_;
    std::size_t target_;
    KeyFunction<Row> key_;
    int half_;
};

/// Hash-partitions rows on the canonical encoding of `key`. All rows sharing a
/// key land in the same output partition; the row multiset is preserved.
template <Record Row>
Dataset<Row> shuffle_by_key(const Dataset<Row>& ds, const std::string& key,
                            std::size_t target_partitions, std::string name = "shuffle") {
    if (target_partitions < 1) throw ConfigError("shuffle: target_partitions must be >= 1");
    auto key_fn = RecordTraits<Row>::schema().key(key);
    auto state = std::make_shared<detail::ShuffleState>(target_partitions);
    auto inputs = ds.partitions();
    const Session& session = ds.session();
    const StageId id = session.plan().add_stage(
        StageKind::shuffle, name, {ds.stage()},
        [state, inputs, key_fn, target_partitions](Runtime& rt) {
            const auto& dir = rt.spill_dir();
            static std::atomic<unsigned> shuffle_counter{0};
            const unsigned tag = shuffle_counter.fetch_add(1);
            for (std::size_t t = 0; t < target_partitions; ++t) {
                state->files[t] = dir / ("shuffle" + std::to_string(tag) + "-part" + std::to_string(t) + ".spill");
                std::ofstream(state->files[t], std::ios::binary | std::ios::trunc);
            }
            rt.parallel_for(inputs.size(), [&](std::size_t i) {
                std::size_t piece = 0;
                materialize<Row>(inputs[i], i, rt, [&](Partition<Row>&& p) {
                    std::vector<std::string> buffers(target_partitions);
                    std::vector<std::uint64_t> counts(target_partitions, 0);
                    KeyEncoder enc;
                    for (const Row& row : p.records) {
                        key_fn(row, enc);
                        const std::size_t t = stable_hash(enc.bytes()) % target_partitions;
                        ByteWriter w(buffers[t]);
                        RecordTraits<Row>::encode(row, w);
                        ++counts[t];
                    }
                    for (std::size_t t = 0; t < target_partitions; ++t)
                        if (counts[t]) state->append(t, i, piece, buffers[t], counts[t]);
                    ++piece;
                });
            });
            for (auto& segs : state->segments)
                std::sort(segs.begin(), segs.end(), [](const auto& a, const auto& b) {
                    return std::tie(a.source, a.piece) < std::tie(b.source, b.piece);
                });
        });
    std::vector<SourcePtr<Row>> parts;
    for (std::size_t t = 0; t < target_partitions; ++t)
        parts.push_back(std::make_shared<SpillSource<Row>>(state, t, key_fn));
    return Dataset<Row>(session, id, std::move(parts), key);
}

// ---------------------------------------------------------------------------
// Reduce and sinks

/// An aggregator for reduce_by_key. The fold must be associative and
/// commutative; this is a contract, not checked.
template <typename A, typename Row>
concept Aggregator = requires(const A& a, const Row& row, typename A::Acc& acc, typename A::Acc&& other) {
    { a.init(row) } -> std::same_as<typename A::Acc>;
    a.fold(acc, row);
    a.merge(acc, std::move(other));
};

/// Two-phase keyed reduction: per-partition partial folds, then a fold of
/// partials in partition order. Output is sorted by canonical key bytes.
template <Record Row, Aggregator<Row> Agg>
Deferred<KeyedTable<typename Agg::Acc>> reduce_by_key(const Dataset<Row>& ds, const std::string& key,
                                                      Agg agg, std::string name = "reduce") {
    using Acc = typename Agg::Acc;
    auto key_fn = RecordTraits<Row>::schema().key(key);
    auto slot = std::make_shared<std::optional<KeyedTable<Acc>>>();
    auto inputs = ds.partitions();
    ds.session().plan().add_stage(
        StageKind::reduce, std::move(name), {ds.stage()},
        [slot, inputs, key_fn, agg = std::move(agg)](Runtime& rt) {
            std::vector<std::unordered_map<std::string, Acc>> partials(inputs.size());
            rt.parallel_for(inputs.size(), [&](std::size_t i) {
                auto& local = partials[i];
                materialize<Row>(inputs[i], i, rt, [&](Partition<Row>&& p) {
                    KeyEncoder enc;
                    for (const Row& row : p.records) {
                        key_fn(row, enc);
                        auto it = local.find(enc.bytes());
                        if (it == local.end())
                            local.emplace(enc.bytes(), agg.init(row));
                        else
                            agg.fold(it->second, row);
                    }
                });
            });
            std::map<std::string, Acc> merged;
            for (auto& local : partials) {
                for (auto& [k, acc] : local) {
                    auto it = merged.find(k);
                    if (it == merged.end())
                        merged.emplace(k, std::move(acc));
                    else
                        agg.merge(it->second, std::move(acc));
                }
                local.clear();
            }
            KeyedTable<Acc> out;
            out.reserve(merged.size());
            for (auto& [k, acc] : merged) out.emplace_back(k, std::move(acc));
            *slot = std::move(out);
        });
    return Deferred<KeyedTable<Acc>>(ds.session(), slot);
}

/// Concatenates all partitions in partition order. Only for small results.
template <typename Row>
Deferred<std::vector<Row>> collect(const Dataset<Row>& ds, std::string name = "collect") {
    auto slot = std::make_shared<std::optional<std::vector<Row>>>();
    auto inputs = ds.partitions();
    ds.session().plan().add_stage(StageKind::collect, std::move(name), {ds.stage()},
                                  [slot, inputs](Runtime& rt) {
                                      std::vector<std::vector<Row>> parts(inputs.size());
                                      rt.parallel_for(inputs.size(), [&](std::size_t i) {
                                          materialize<Row>(inputs[i], i, rt, [&](Partition<Row>&& p) {
                                              auto& dst = parts[i];
                                              std::move(p.records.begin(), p.records.end(),
                                                        std::back_inserter(dst));
                                          });
                                      });
                                      std::vector<Row> out;
                                      for (auto& p : parts)
                                          std::move(p.begin(), p.end(), std::back_inserter(out));
                                      *slot = std::move(out);
                                  });
    return Deferred<std::vector<Row>>(ds.session(), slot);
}

/// Per-partition row counts, in partition order.
template <typename Row>
Deferred<std::vector<std::size_t>> partition_sizes(const Dataset<Row>& ds, std::string name = "count") {
    auto slot = std::make_shared<std::optional<std::vector<std::size_t>>>();
    auto inputs = ds.partitions();
    ds.session().plan().add_stage(StageKind::collect, std::move(name), {ds.stage()},
                                  [slot, inputs](Runtime& rt) {
                                      std::vector<std::size_t> sizes(inputs.size(), 0);
                                      rt.parallel_for(inputs.size(), [&](std::size_t i) {
                                          materialize<Row>(inputs[i], i, rt, [&](Partition<Row>&& p) {
                                              sizes[i] += p.records.size();
                                          });
                                      });
                                      *slot = std::move(sizes);
                                  });
    return Deferred<std::vector<std::size_t>>(ds.session(), slot);
}


}  // namespace drmob::engine
