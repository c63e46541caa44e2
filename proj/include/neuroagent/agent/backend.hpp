#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "neuroagent/agent/specs.hpp"

namespace neuroagent::agent {

using nlohmann::json;

struct Message {
    std::string role;  // user, assistant, tool
    std::string content;
    bool operator==(const Message&) const = default;
};
json to_json(const std::vector<Message>& messages);

struct ToolInvocation {
    std::string name;
    json args = json::object();
};

// One backend decision. Exactly the fields of `kind` are meaningful.
struct Decision {
    enum class Kind { ToolCalls, Handoff, Subagent, Final };
    Kind kind = Kind::Final;
    std::vector<ToolInvocation> calls;  // ToolCalls
    std::string target;                 // Handoff, Subagent
    json request;                       // Subagent: raw request document
    std::string text;                   // Final
    std::int64_t tokens_in = 0;
    std::int64_t tokens_out = 0;
    // Usage reported by a remote endpoint, when available.
    std::optional<std::int64_t> reported_tokens_in, reported_tokens_out;

    static Decision tool_calls(std::vector<ToolInvocation> calls);
    static Decision handoff(std::string target);
    static Decision subagent(std::string target, json request);
    static Decision final_answer(std::string text);

    // Serialisation used for the transcript and output-token estimate.
    json to_json() const;
};

struct DecisionContext {
    const AgentSpec& agent;
    Topology topology;
    bool delegated;  // running inside a SubagentRequest
    const std::vector<Message>& messages;
    const RenderedSchema& schema;
    std::vector<std::string> delegates;        // agents callable as tools
    std::vector<std::string> handoff_targets;  // agents reachable by handoff
    int agent_actions = 0;        // actions this agent has already taken in the episode
    std::size_t active_since = 0;  // transcript length when this agent last took control
};

// Rendered model input: schema, available delegation targets, transcript.
std::string render_context(const DecisionContext& ctx);
std::int64_t context_tokens(const DecisionContext& ctx);

struct BackendError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Decision maker for one episode. Implementations may hold episode-local state.
class Backend {
public:
    virtual ~Backend() = default;
    // Populates tokens_in / tokens_out. Throws BackendError on transport failure.
    virtual Decision decide(const DecisionContext& ctx) = 0;
    virtual std::string name() const = 0;
};

}  // namespace neuroagent::agent
