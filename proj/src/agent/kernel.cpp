#include "neuroagent/agent/kernel.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "neuroagent/agent/protocol.hpp"
#include "neuroagent/agent/tokens.hpp"

namespace neuroagent::agent {

std::string initial_prompt(const std::string& question, const json& images) {
    return question + "\n\n" + kCaseImagesMarker + "\n" + images.dump();
}

namespace {

using toolbox::ToolResult;

bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

// Decision token counts, attached to the first event the decision produces.
struct TokenSlot {
    std::int64_t in = 0;
    std::int64_t out = 0;
    bool used = false;
};

class Episode {
public:
    Episode(const toolbox::CaseContext& ctx, Topology topology, Backend& backend, const ToolRegistry& registry,
            const EpisodeOptions& options)
        : topology_(topology),
          backend_(backend),
          registry_(registry),
          budget_(options.budget),
          tb_(ctx, store_, options.toolbox) {}

    EpisodeResult run(const std::string& question) {
        json images = json::array();
        for (const auto& tp : tb_.context().bundle.timepoints) {
            for (const auto& m : toolbox::modality_names()) {
                auto it = tp.files.find(m);
                if (it == tp.files.end()) continue;
                ToolResult r = tb_.load_image(it->second);
                if (!r.ok()) {
                    images.push_back({{"path", it->second}, {"error", r.payload.value("message", "")}});
                    continue;
                }
                images.push_back({{"handle", r.handles[0].id},
                                  {"timepoint", tp.id},
                                  {"modality", m},
                                  {"space", r.payload["space"]},
                                  {"skull_stripped", r.payload["skull_stripped"]}});
            }
        }
        std::vector<Message> messages{{"user", initial_prompt(question, images)}};
        const AgentSpec& entry = entry_agent(topology_);
        AgentRun run = run_agent(entry, messages, false);
        EpisodeResult result;
        if (run.budget) {
            TraceEvent e;
            e.agent = entry.name;
            e.kind = EventKind::FinalAnswer;
            e.text = kBudgetExceeded;
            e.synthetic = true;
            emit(std::move(e), nullptr);
            result.budget_exceeded = true;
            result.final_text = kBudgetExceeded;
        } else {
            result.final_text = run.text;
        }
        result.trace = std::move(trace_);
        result.transcript = std::move(messages);
        return result;
    }

private:
    struct AgentRun {
        bool budget = false;
        std::string text;
        TokenSlot tokens;  // of the final decision, for delegated runs
    };

    bool budget_left() const { return actions_ < budget_; }

    void emit(TraceEvent e, TokenSlot* slot) {
        e.seq = ++seq_;
        if (slot && !slot->used) {
            e.tokens_in = slot->in;
            e.tokens_out = slot->out;
            slot->used = true;
        }
        if (e.is_action()) {
            ++actions_;
            ++agent_actions_[e.agent];
        }
        trace_.events.push_back(std::move(e));
    }

    void emit_error(const std::string& agent, const std::string& name, const std::string& kind,
                    const std::string& message, TokenSlot* slot) {
        TraceEvent e;
        e.agent = agent;
        e.kind = EventKind::ToolError;
        e.name = name;
        e.error_kind = kind;
        e.text = message;
        emit(std::move(e), slot);
    }

    const RenderedSchema& schema(const AgentSpec& a) {
        auto it = schemas_.find(a.name);
        if (it == schemas_.end()) it = schemas_.emplace(a.name, render_tool_schemas(a, registry_)).first;
        return it->second;
    }

    bool may_delegate(const AgentSpec& a, bool delegated) const {
        if (delegated) return false;
        if (topology_ == Topology::AgentsAsTools) return a.name == entry_agent(topology_).name;
        return topology_ == Topology::Orchestrator;
    }

    bool may_handoff(bool delegated) const { return topology_ == Topology::Handoffs && !delegated; }

    ToolResult execute(const AgentSpec& agent, const ToolInvocation& inv) {
        if (!contains(agent.tools, inv.name) || !registry_.contains(inv.name))
            return ToolResult::failure("unknown_tool", "agent " + agent.name + " has no tool '" + inv.name + "'");
        try {
            return registry_.dispatch(tb_, inv.name, inv.args);
        } catch (const std::exception& e) {
            return ToolResult::failure("internal_error", e.what());
        }
    }

    AgentRun run_agent(const AgentSpec& start, std::vector<Message>& messages, bool delegated) {
        const AgentSpec* agent = &start;
        std::size_t active_since = messages.size();
        while (true) {
            if (!budget_left()) return {true, {}, {}};
            DecisionContext dc{*agent,
                               topology_,
                               delegated,
                               messages,
                               schema(*agent),
                               may_delegate(*agent, delegated) ? agent->peers : std::vector<std::string>{},
                               may_handoff(delegated) ? agent->peers : std::vector<std::string>{},
                               agent_actions_[agent->name],
                               active_since};
            Decision d = backend_.decide(dc);
            TokenSlot slot{d.tokens_in, d.tokens_out, false};
            if (d.kind == Decision::Kind::ToolCalls && d.calls.empty()) d = Decision::final_answer("");

            switch (d.kind) {
                case Decision::Kind::ToolCalls: {
                    messages.push_back({"assistant", d.to_json().dump()});
                    for (const auto& inv : d.calls) {
                        if (!budget_left()) return {true, {}, {}};
                        const json args = canonicalize(inv.args);
                        TraceEvent call;
                        call.agent = agent->name;
                        call.kind = EventKind::ToolCall;
                        call.name = inv.name;
                        call.args = args;
                        emit(std::move(call), &slot);
                        ToolResult r = execute(*agent, inv);
                        if (!r.ok())
                            emit_error(agent->name, inv.name, *r.error_kind, r.payload.value("message", ""), &slot);
                        messages.push_back(
                            {"tool", json{{"tool", inv.name}, {"args", args}, {"result", r.to_json()}}.dump()});
                    }
                    break;
                }
                case Decision::Kind::Handoff: {
                    TraceEvent h;
                    h.agent = agent->name;
                    h.kind = EventKind::Handoff;
                    h.name = d.target;
                    emit(std::move(h), &slot);
                    std::string error;
                    if (!may_handoff(delegated)) {
                        error = "handoffs are not available in the " + to_string(topology_) + " topology";
                    } else if (d.target != agent->name && !contains(agent->peers, d.target)) {
                        error = "agent " + agent->name + " cannot hand off to '" + d.target + "'";
                    }
                    if (!error.empty()) {
                        emit_error(agent->name, d.target, "handoff_target", error, &slot);
                        messages.push_back({"assistant", d.to_json().dump()});
                        messages.push_back(
                            {"tool", json{{"handoff", d.target}, {"error", "handoff_target"}, {"message", error}}.dump()});
                    } else {
                        agent = &agent_spec(d.target);  // transcript carries over verbatim
                        active_since = messages.size();
                    }
                    break;
                }
                case Decision::Kind::Subagent: {
                    messages.push_back({"assistant", d.to_json().dump()});
                    TraceEvent req;
                    req.agent = agent->name;
                    req.kind = EventKind::SubagentRequest;
                    req.name = d.target;
                    req.args = canonicalize(d.request);
                    emit(std::move(req), &slot);
                    std::string error;
                    if (!may_delegate(*agent, delegated)) {
                        error = "agent " + agent->name + " cannot delegate in the " + to_string(topology_) +
                                " topology";
                    } else if (!contains(agent->peers, d.target)) {
                        error = "agent " + agent->name + " cannot delegate to '" + d.target + "'";
                    }
                    if (!error.empty()) {
                        emit_error(agent->name, d.target, "delegation_rejected", error, &slot);
                        messages.push_back(
                            {"tool", json{{"agent", d.target}, {"error", "delegation_rejected"}, {"message", error}}.dump()});
                        break;
                    }
                    const AgentSpec& callee = agent_spec(d.target);
                    json response;
                    TokenSlot response_tokens;
                    std::optional<std::string> invalid = validate_request(d.request);
                    if (!invalid)
                        for (const auto& h : d.request["inputs"]["handles"])
                            if (!store_.find(h.get<std::string>())) invalid = "unknown handle " + h.get<std::string>();
                    if (invalid) {
                        response = InterAgentResponse::failed("validation: " + *invalid).to_json();
                    } else {
                        std::vector<Message> sub{{"user", json{{"request", d.request}}.dump()}};
                        AgentRun r = run_agent(callee, sub, true);
                        if (r.budget) return r;
                        response_tokens = r.tokens;
                        json parsed = json::parse(r.text, nullptr, false);
                        const auto expected = d.request["expected_outputs"].get<std::vector<std::string>>();
                        if (parsed.is_discarded()) {
                            response = InterAgentResponse::failed("validation: free-text response rejected").to_json();
                        } else if (auto bad = validate_response(parsed, expected)) {
                            response = InterAgentResponse::failed("validation: " + *bad).to_json();
                        } else {
                            response = parsed;
                        }
                    }
                    if (!budget_left()) return {true, {}, {}};
                    TraceEvent resp;
                    resp.agent = callee.name;
                    resp.kind = EventKind::SubagentResponse;
                    resp.name = callee.name;
                    resp.args = canonicalize(response);
                    resp.text = response.value("summary", "");
                    emit(std::move(resp), &response_tokens);
                    messages.push_back({"tool", json{{"agent", callee.name}, {"response", response}}.dump()});
                    break;
                }
                case Decision::Kind::Final: {
                    if (delegated) return {false, d.text, slot};
                    TraceEvent f;
                    f.agent = agent->name;
                    f.kind = EventKind::FinalAnswer;
                    f.text = d.text;
                    emit(std::move(f), &slot);
                    messages.push_back({"assistant", d.to_json().dump()});
                    return {false, d.text, {}};
                }
            }
        }
    }

    Topology topology_;
    Backend& backend_;
    const ToolRegistry& registry_;
    int budget_;
    toolbox::HandleStore store_;
    toolbox::Toolbox tb_;
    Trace trace_;
    int actions_ = 0;
    int seq_ = 0;
    std::map<std::string, RenderedSchema> schemas_;
    std::map<std::string, int> agent_actions_;
};

}  // namespace

EpisodeResult run_episode(const std::string& question, const toolbox::CaseContext& ctx, Topology topology,
                          Backend& backend, const ToolRegistry& registry, const EpisodeOptions& options) {
    if (options.budget < 1) throw std::invalid_argument("budget must be >= 1");
    Episode ep(ctx, topology, backend, registry, options);
    return ep.run(question);
}

}  // namespace neuroagent::agent
