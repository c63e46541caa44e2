#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "neuroagent/agent/trace.hpp"

namespace neuroagent::backend {

using nlohmann::json;

// One expected action. `args` are literal (tool arguments or the request
// document); only `key_args` take part in fidelity matching, so run-specific
// handle ids never decide a match.
struct PlanStep {
    agent::EventKind kind = agent::EventKind::ToolCall;
    std::string agent;  // agent expected to act
    std::string name;   // tool, handoff/request target, or responding agent
    json args = json::object();
    std::vector<std::string> key_args;

    json to_json() const;
    // Throws std::invalid_argument naming the offending field.
    static PlanStep from_json(const json& j);
    bool operator==(const PlanStep&) const = default;
};

// A finite step list ending in FinalAnswer.
using Plan = std::vector<PlanStep>;

json plan_to_json(const Plan& plan);
Plan plan_from_json(const json& j);

// Key arguments matched for each tool; other tools match by name only.
const std::vector<std::string>& tool_key_args(const std::string& tool);

}  // namespace neuroagent::backend
