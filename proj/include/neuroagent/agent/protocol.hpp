#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace neuroagent::agent {

using nlohmann::json;

// {"task", "inputs": {"handles": [...], "params": {...}}, "expected_outputs": [...]}
struct InterAgentRequest {
    std::string task;
    std::vector<std::string> handles;
    json params = json::object();
    std::vector<std::string> expected_outputs;

    json to_json() const;
    // Throws std::invalid_argument naming the offending field.
    static InterAgentRequest from_json(const json& j);
};

// {"status": "done"|"failed", "outputs": {...}, "summary": "..."}
struct InterAgentResponse {
    bool done = true;
    json outputs = json::object();
    std::string summary;

    json to_json() const;
    static InterAgentResponse from_json(const json& j);
    static InterAgentResponse failed(std::string summary);
};

// Null when valid, otherwise a description of the violation. A done response
// must carry every expected output key; summaries are a single line.
std::optional<std::string> validate_request(const json& j);
std::optional<std::string> validate_response(const json& j, const std::vector<std::string>& expected_outputs);

}  // namespace neuroagent::agent
