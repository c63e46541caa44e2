#include "neuroagent/backend/scripted.hpp"

#include "neuroagent/agent/tokens.hpp"

namespace neuroagent::backend {

using agent::Decision;
using agent::DecisionContext;
using agent::EventKind;

void stamp_tokens(Decision& d, const DecisionContext& ctx) {
    d.tokens_in = agent::context_tokens(ctx);
    d.tokens_out = agent::estimate_tokens(d.to_json().dump());
}

ScriptedBackend::ScriptedBackend(Plan plan) : plan_(std::move(plan)) {
    for (const auto& s : plan_) by_agent_[s.agent].push_back(&s);
}

Decision ScriptedBackend::compose(const DecisionContext& ctx) {
    const Knowledge& k = cache_.view(ctx.messages);
    if (ctx.delegated) return Decision::final_answer(compose_response(k).dump());
    return Decision::final_answer(compose_answer(parse_question(k.question), k));
}

Decision ScriptedBackend::decide(const DecisionContext& ctx) {
    Decision d;
    const auto it = by_agent_.find(ctx.agent.name);
    const auto index = static_cast<std::size_t>(ctx.agent_actions);
    if (it == by_agent_.end() || index >= it->second.size()) {
        d = compose(ctx);
    } else {
        const PlanStep& s = *it->second[index];
        switch (s.kind) {
            case EventKind::ToolCall: d = Decision::tool_calls({{s.name, s.args}}); break;
            case EventKind::Handoff: d = Decision::handoff(s.name); break;
            case EventKind::SubagentRequest: {
                json request = s.args;
                if (request.value("task", "") == "analyze" && request.contains("inputs"))
                    request["inputs"]["params"]["results"] = results_document(cache_.view(ctx.messages));
                d = Decision::subagent(s.name, std::move(request));
                break;
            }
            case EventKind::SubagentResponse:
            case EventKind::FinalAnswer:
            case EventKind::ToolError: d = compose(ctx); break;
        }
    }
    stamp_tokens(d, ctx);
    return d;
}

}  // namespace neuroagent::backend
