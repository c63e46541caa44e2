#include "neuroagent/agent/protocol.hpp"

#include <stdexcept>

namespace neuroagent::agent {

json InterAgentRequest::to_json() const {
    return {{"task", task},
            {"inputs", {{"handles", handles}, {"params", params}}},
            {"expected_outputs", expected_outputs}};
}

InterAgentRequest InterAgentRequest::from_json(const json& j) {
    if (auto err = validate_request(j)) throw std::invalid_argument(*err);
    InterAgentRequest r;
    r.task = j["task"].get<std::string>();
    r.handles = j["inputs"]["handles"].get<std::vector<std::string>>();
    r.params = j["inputs"]["params"];
    r.expected_outputs = j["expected_outputs"].get<std::vector<std::string>>();
    return r;
}

json InterAgentResponse::to_json() const {
    return {{"status", done ? "done" : "failed"}, {"outputs", outputs}, {"summary", summary}};
}

InterAgentResponse InterAgentResponse::from_json(const json& j) {
    if (auto err = validate_response(j, {})) throw std::invalid_argument(*err);
    InterAgentResponse r;
    r.done = j["status"] == "done";
    r.outputs = j["outputs"];
    r.summary = j["summary"].get<std::string>();
    return r;
}

InterAgentResponse InterAgentResponse::failed(std::string summary) {
    InterAgentResponse r;
    r.done = false;
    r.summary = std::move(summary);
    return r;
}

namespace {

bool string_array(const json& j) {
    if (!j.is_array()) return false;
    for (const auto& e : j)
        if (!e.is_string()) return false;
    return true;
}

}  // namespace

std::optional<std::string> validate_request(const json& j) {
    if (!j.is_object()) return "request must be an object";
    if (!j.contains("task") || !j["task"].is_string() || j["task"].get<std::string>().empty())
        return "request.task must be a non-empty string";
    if (!j.contains("inputs") || !j["inputs"].is_object()) return "request.inputs must be an object";
    const json& in = j["inputs"];
    if (!in.contains("handles") || !string_array(in["handles"])) return "request.inputs.handles must be a list of ids";
    if (!in.contains("params") || !in["params"].is_object()) return "request.inputs.params must be an object";
    if (!j.contains("expected_outputs") || !string_array(j["expected_outputs"]))
        return "request.expected_outputs must be a list of field names";
    for (const auto& [k, v] : j.items())
        if (k != "task" && k != "inputs" && k != "expected_outputs") return "unexpected request field '" + k + "'";
    return std::nullopt;
}

std::optional<std::string> validate_response(const json& j, const std::vector<std::string>& expected_outputs) {
    if (!j.is_object()) return "response must be an object";
    if (!j.contains("status") || !j["status"].is_string() || (j["status"] != "done" && j["status"] != "failed"))
        return "response.status must be done or failed";
    if (!j.contains("outputs") || !j["outputs"].is_object()) return "response.outputs must be an object";
    if (!j.contains("summary") || !j["summary"].is_string()) return "response.summary must be a string";
    if (j["summary"].get<std::string>().find('\n') != std::string::npos) return "response.summary must be one line";
    for (const auto& [k, v] : j.items())
        if (k != "status" && k != "outputs" && k != "summary") return "unexpected response field '" + k + "'";
    if (j["status"] == "done")
        for (const auto& f : expected_outputs)
            if (!j["outputs"].contains(f)) return "response.outputs missing expected field '" + f + "'";
    return std::nullopt;
}

}  // namespace neuroagent::agent
