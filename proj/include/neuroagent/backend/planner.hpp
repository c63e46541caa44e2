#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>

#include "neuroagent/agent/backend.hpp"
#include "neuroagent/backend/workflow.hpp"

namespace neuroagent::backend {

// Offline heuristic agent. Reads the question through the benchmark grammar,
// works out which units of work remain from the transcript, and either runs
// the next tool call, delegates or hands off to the owning specialist, or
// answers. The pathology model always follows the question's keywords.
class RuleBasedPlanner : public agent::Backend {
public:
    agent::Decision decide(const agent::DecisionContext& ctx) override;
    std::string name() const override { return "planner"; }

private:
    agent::Decision choose(const agent::DecisionContext& ctx);
    agent::Decision callee(const agent::DecisionContext& ctx, const Knowledge& k);
    std::optional<Unit> unit_at_handoff(const agent::DecisionContext& ctx, const Intent& intent);

    KnowledgeCache cache_;
    // (transcript, length at handoff) -> first pending unit at that point
    std::map<std::pair<const void*, std::size_t>, std::optional<Unit>> handoff_units_;
};

}  // namespace neuroagent::backend
