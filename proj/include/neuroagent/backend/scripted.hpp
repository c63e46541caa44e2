#pragma once

#include <map>
#include <string>
#include <vector>

#include "neuroagent/agent/backend.hpp"
#include "neuroagent/backend/plan.hpp"
#include "neuroagent/backend/workflow.hpp"

namespace neuroagent::backend {

// Sets tokens_in from the rendered context and tokens_out from the decision.
void stamp_tokens(agent::Decision& d, const agent::DecisionContext& ctx);

// Replays an expected plan. An agent's position in the plan is the number of
// actions it has already taken, so delegated and handed-off runs stay aligned.
// Answer and response texts are composed from what the transcript holds.
class ScriptedBackend : public agent::Backend {
public:
    explicit ScriptedBackend(Plan plan);

    agent::Decision decide(const agent::DecisionContext& ctx) override;
    std::string name() const override { return "scripted"; }

private:
    agent::Decision compose(const agent::DecisionContext& ctx);

    Plan plan_;
    std::map<std::string, std::vector<const PlanStep*>> by_agent_;
    KnowledgeCache cache_;
};

}  // namespace neuroagent::backend
