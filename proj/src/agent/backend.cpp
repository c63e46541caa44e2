#include "neuroagent/agent/backend.hpp"

#include "neuroagent/agent/tokens.hpp"

namespace neuroagent::agent {

json to_json(const std::vector<Message>& messages) {
    json out = json::array();
    for (const auto& m : messages) out.push_back({{"role", m.role}, {"content", m.content}});
    return out;
}

Decision Decision::tool_calls(std::vector<ToolInvocation> calls) {
    Decision d;
    d.kind = Kind::ToolCalls;
    d.calls = std::move(calls);
    return d;
}

Decision Decision::handoff(std::string target) {
    Decision d;
    d.kind = Kind::Handoff;
    d.target = std::move(target);
    return d;
}

Decision Decision::subagent(std::string target, json request) {
    Decision d;
    d.kind = Kind::Subagent;
    d.target = std::move(target);
    d.request = std::move(request);
    return d;
}

Decision Decision::final_answer(std::string text) {
    Decision d;
    d.kind = Kind::Final;
    d.text = std::move(text);
    return d;
}

json Decision::to_json() const {
    switch (kind) {
        case Kind::ToolCalls: {
            json calls_j = json::array();
            for (const auto& c : calls) calls_j.push_back({{"name", c.name}, {"args", c.args}});
            return {{"tool_calls", calls_j}};
        }
        case Kind::Handoff: return {{"handoff", target}};
        case Kind::Subagent: return {{"delegate", target}, {"request", request}};
        case Kind::Final: return {{"final", text}};
    }
    return json::object();
}

namespace {

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) out += (out.empty() ? "" : ", ") + s;
    return out;
}

}  // namespace

std::string render_context(const DecisionContext& ctx) {
    std::string out = ctx.schema.text;
    if (!ctx.delegates.empty()) out += "\n\nAgents callable as tools: " + join(ctx.delegates);
    if (!ctx.handoff_targets.empty()) out += "\n\nHandoff targets: " + join(ctx.handoff_targets);
    out += "\n\n";
    for (const auto& m : ctx.messages) out += m.role + ": " + m.content + "\n";
    return out;
}

std::int64_t context_tokens(const DecisionContext& ctx) {
    // Same byte count as render_context without building the string.
    std::size_t n = ctx.schema.text.size();
    if (!ctx.delegates.empty()) n += std::string("\n\nAgents callable as tools: ").size() + join(ctx.delegates).size();
    if (!ctx.handoff_targets.empty()) n += std::string("\n\nHandoff targets: ").size() + join(ctx.handoff_targets).size();
    n += 2;
    for (const auto& m : ctx.messages) n += m.role.size() + 2 + m.content.size() + 1;
    return estimate_tokens_for_bytes(n);
}

}  // namespace neuroagent::agent
