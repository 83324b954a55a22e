#include "drmob/engine/plan.hpp"

#include <chrono>
#include <queue>

#include "drmob/errors.hpp"

namespace drmob::engine {

std::string_view to_string(StageKind k) {
    switch (k) {
        case StageKind::source: return "source";
        case StageKind::map: return "map";
        case StageKind::shuffle: return "shuffle";
        case StageKind::reduce: return "reduce";
        case StageKind::collect: return "collect";
    }
    return "?";
}

StageId ExecutionPlan::add_stage(StageKind kind, std::string name, std::vector<StageId> inputs,
                                 std::function<void(Runtime&)> body) {
    const StageId id = stages_.size();
    for (StageId in : inputs)
        if (in >= id) throw PlanError("stage '" + name + "' references unknown input " + std::to_string(in));
    stages_.push_back(Stage{kind, std::move(name), std::move(inputs), std::move(body)});
    return id;
}

bool ExecutionPlan::reaches(StageId from, StageId to) const {
    std::vector<bool> seen(stages_.size());
    std::vector<StageId> stack{from};
    while (!stack.empty()) {
        StageId s = stack.back();
        stack.pop_back();
        if (s == to) return true;
        if (seen[s]) continue;
        seen[s] = true;
        for (StageId in : stages_[s].inputs) stack.push_back(in);
    }
    return false;
}

void ExecutionPlan::add_input(StageId stage, StageId input) {
    if (stage >= stages_.size() || input >= stages_.size())
        throw PlanError("edge references unknown stage");
    // stage depends on input; a cycle exists if input already depends on stage.
    if (reaches(input, stage))
        throw PlanError("edge " + std::to_string(input) + " -> " + std::to_string(stage) +
                        " would create a cycle");
    stages_[stage].inputs.push_back(input);
}

void ExecutionPlan::validate() const {
    for (StageId id = 0; id < stages_.size(); ++id)
        for (StageId in : stages_[id].inputs)
            if (in >= stages_.size())
                throw PlanError("stage " + std::to_string(id) + " has dangling input");
    if (topological_order().size() != stages_.size()) throw PlanError("execution plan has a cycle");
}

std::vector<StageId> ExecutionPlan::topological_order() const {
    const std::size_t n = stages_.size();
    std::vector<std::size_t> pending(n, 0);
    std::vector<std::vector<StageId>> consumers(n);
    for (StageId id = 0; id < n; ++id)
        for (StageId in : stages_[id].inputs) {
            if (in >= n) continue;
            ++pending[id];
            consumers[in].push_back(id);
        }
    std::priority_queue<StageId, std::vector<StageId>, std::greater<>> ready;
    for (StageId id = 0; id < n; ++id)
        if (pending[id] == 0) ready.push(id);
    std::vector<StageId> order;
    order.reserve(n);
    while (!ready.empty()) {
        StageId s = ready.top();
        ready.pop();
        order.push_back(s);
        for (StageId c : consumers[s])
            if (--pending[c] == 0) ready.push(c);
    }
    return order;
}

void execute(ExecutionPlan& plan, Runtime& runtime) {
    plan.validate();
    for (StageId id : plan.topological_order()) {
        auto& stage = plan.stages_[id];
        if (stage.done) continue;
        if (stage.body) {
            const auto t0 = std::chrono::steady_clock::now();
            stage.body(runtime);
            const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
            plan.timings_.push_back({stage.name, stage.kind, dt.count()});
        }
        stage.done = true;
    }
}

void execute(ExecutionPlan& plan, Runtime& runtime, std::size_t worker_count) {
    runtime.set_worker_count(worker_count);
    execute(plan, runtime);
}

}  // namespace drmob::engine
