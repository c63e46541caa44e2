#include "neuroagent/backend/planner.hpp"

#include "neuroagent/backend/scripted.hpp"

namespace neuroagent::backend {

using agent::Decision;
using agent::DecisionContext;
using agent::Topology;

namespace {

// A unit still has work the transcript's owner could do next.
bool pending(const Unit& u, const Intent& in, const Knowledge& k) {
    return !unit_complete(u, &in, k) && next_step(u, &in, k, true).has_value();
}

}  // namespace

Decision RuleBasedPlanner::decide(const DecisionContext& ctx) {
    Decision d = choose(ctx);
    stamp_tokens(d, ctx);
    return d;
}

Decision RuleBasedPlanner::callee(const DecisionContext& ctx, const Knowledge& k) {
    (void)ctx;
    if (k.request) {
        if (const auto u = unit_from_request(*k.request)) {
            const std::optional<Intent> intent =
                u->kind == UnitKind::Analysis ? parse_question(k.question) : std::nullopt;
            if (auto step = next_step(*u, intent ? &*intent : nullptr, k, true))
                return Decision::tool_calls({*step});
        }
    }
    return Decision::final_answer(compose_response(k).dump());
}

std::optional<Unit> RuleBasedPlanner::unit_at_handoff(const DecisionContext& ctx, const Intent& intent) {
    const auto key = std::make_pair(static_cast<const void*>(&ctx.messages), ctx.active_since);
    auto it = handoff_units_.find(key);
    if (it != handoff_units_.end()) return it->second;
    const Knowledge before = ingest(ctx.messages, ctx.active_since);
    std::optional<Unit> first;
    for (const auto& u : plan_units(intent, before.case_raw))
        if (pending(u, intent, before)) {
            first = u;
            break;
        }
    handoff_units_[key] = first;
    return first;
}

Decision RuleBasedPlanner::choose(const DecisionContext& ctx) {
    const Knowledge& k = cache_.view(ctx.messages);
    if (ctx.delegated) return callee(ctx, k);
    const std::optional<Intent> intent = parse_question(k.question);
    if (!intent) return Decision::final_answer(compose_answer(intent, k));
    const std::vector<Unit> units = plan_units(*intent, k.case_raw);
    const std::string& me = ctx.agent.name;
    auto final = [&] { return Decision::final_answer(compose_answer(intent, k)); };

    switch (ctx.topology) {
        case Topology::Single:
            for (const auto& u : units) {
                if (unit_complete(u, &*intent, k)) continue;
                if (auto step = next_step(u, &*intent, k, false)) return Decision::tool_calls({*step});
            }
            return final();

        case Topology::AgentsAsTools:
            for (const auto& u : units) {
                if (unit_complete(u, &*intent, k)) continue;
                if (u.owner() == me) {
                    if (auto step = next_step(u, &*intent, k, true)) return Decision::tool_calls({*step});
                    continue;
                }
                if (k.failed_units.count(u.key())) continue;
                return Decision::subagent(u.owner(), build_request(u, &*intent, k));
            }
            return final();

        case Topology::Handoffs: {
            if (me != "analysis") {
                const std::optional<Unit> u0 = unit_at_handoff(ctx, *intent);
                if (u0 && u0->owner() == me && !unit_complete(*u0, &*intent, k))
                    if (auto step = next_step(*u0, &*intent, k, true)) return Decision::tool_calls({*step});
                return Decision::handoff("analysis");
            }
            for (const auto& u : units) {
                if (!pending(u, *intent, k)) continue;
                if (u.owner() == me) return Decision::tool_calls({*next_step(u, &*intent, k, true)});
                return Decision::handoff(u.owner());
            }
            return final();
        }

        case Topology::Orchestrator: {
            bool any_prep = false;
            for (const auto& u : units) any_prep = any_prep || u.kind == UnitKind::Prep;
            if (!any_prep && k.preprocessing_responses == 0)
                return Decision::subagent("preprocessing", nothing_to_do_request());
            for (const auto& u : units) {
                if (unit_complete(u, &*intent, k) || k.failed_units.count(u.key())) continue;
                return Decision::subagent(u.owner(), build_request(u, &*intent, k));
            }
            return final();
        }
    }
    return final();
}

}  // namespace neuroagent::backend
