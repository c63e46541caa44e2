#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace neuroagent::agent {

using nlohmann::json;

enum class EventKind { ToolCall, ToolError, Handoff, SubagentRequest, SubagentResponse, FinalAnswer };
std::string to_string(EventKind k);
// Throws std::invalid_argument.
EventKind parse_event_kind(const std::string& s);

// name: tool name, handoff/request target, or responding agent.
// args: canonical tool arguments, request or response document.
// text: answer text, response summary, or error message.
struct TraceEvent {
    int seq = 0;
    std::string agent;
    EventKind kind = EventKind::ToolCall;
    std::string name;
    json args = json::object();
    std::string text;
    std::string error_kind;
    std::int64_t tokens_in = 0;
    std::int64_t tokens_out = 0;
    bool synthetic = false;  // kernel-generated budget_exceeded answer

    // ToolCall, Handoff, SubagentRequest, SubagentResponse and non-synthetic FinalAnswer.
    bool is_action() const;
    json to_json() const;
    static TraceEvent from_json(const json& j);
    bool operator==(const TraceEvent&) const = default;
};

struct Trace {
    std::vector<TraceEvent> events;

    std::size_t action_count() const;
    std::size_t error_count() const;
    std::int64_t tokens_in() const;
    std::int64_t tokens_out() const;
    // Final answer text, empty if none.
    std::string final_answer() const;

    // One JSON record per line, trailing newline.
    std::string to_jsonl() const;
    static Trace from_jsonl(const std::string& text);
};

// Sorted keys, integral floats rendered as integers, strings verbatim.
json canonicalize(const json& j);
std::string canonical_dump(const json& j);

}  // namespace neuroagent::agent
