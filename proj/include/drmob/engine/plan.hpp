#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "drmob/engine/runtime.hpp"

namespace drmob::engine {

enum class StageKind { source, map, shuffle, reduce, collect };

std::string_view to_string(StageKind k);

using StageId = std::size_t;

struct StageTiming {
    std::string name;
    StageKind kind;
    double seconds = 0.0;
};

/// DAG of stages. Map stages are fused into their consumers and have no body;
/// shuffle, reduce and collect stages are barriers executed in topological order.
class ExecutionPlan {
public:
    StageId add_stage(StageKind kind, std::string name, std::vector<StageId> inputs,
                      std::function<void(Runtime&)> body = {});
    /// Adds an edge input -> stage. Throws PlanError if the edge would close a cycle.
    void add_input(StageId stage, StageId input);

    /// Throws PlanError on dangling inputs or cycles.
    void validate() const;
    /// Kahn's algorithm, lowest id first among ready stages.
    std::vector<StageId> topological_order() const;

    std::size_t size() const noexcept { return stages_.size(); }
    const std::vector<StageId>& inputs(StageId id) const { return stages_.at(id).inputs; }
    StageKind kind(StageId id) const { return stages_.at(id).kind; }
    const std::string& name(StageId id) const { return stages_.at(id).name; }
    bool done(StageId id) const { return stages_.at(id).done; }

    /// Wall-clock of every barrier stage that has run, in execution order.
    const std::vector<StageTiming>& timings() const noexcept { return timings_; }

private:
    friend void execute(ExecutionPlan&, Runtime&);

    struct Stage {
        StageKind kind;
        std::string name;
        std::vector<StageId> inputs;
        std::function<void(Runtime&)> body;
        bool done = false;
    };

    bool reaches(StageId from, StageId to) const;

    std::vector<Stage> stages_;
    std::vector<StageTiming> timings_;
};

/// Runs every pending stage. At most runtime.worker_count() partitions are
/// materialized at any time; outputs do not depend on the worker count.
void execute(ExecutionPlan& plan, Runtime& runtime);
void execute(ExecutionPlan& plan, Runtime& runtime, std::size_t worker_count);

}  // namespace drmob::engine
