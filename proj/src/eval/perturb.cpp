#include "neuroagent/eval/perturb.hpp"

#include <algorithm>
#include <set>

#include "neuroagent/toolbox/atlas.hpp"

namespace neuroagent::eval {

using agent::EventKind;
using backend::Plan;
using backend::PlanStep;

std::size_t scored_steps(const Plan& plan) {
    std::size_t n = 0;
    for (const auto& s : plan) n += s.kind != EventKind::FinalAnswer;
    return n;
}

Plan with_extra_call(const Plan& plan) {
    Plan out = plan;
    for (auto it = out.rbegin(); it != out.rend(); ++it) {
        if (it->kind != EventKind::FinalAnswer) continue;
        PlanStep extra;
        extra.kind = EventKind::ToolCall;
        extra.agent = it->agent;
        extra.name = "tool_list_labels";
        extra.args = {{"scope", "lobes"}};
        extra.key_args = backend::tool_key_args(extra.name);
        out.insert(it.base() - 1, extra);
        break;
    }
    return out;
}

std::optional<Plan> without_step(const Plan& plan) {
    // Tools that put objects in the handle store; dropping one would shift later ids.
    static const std::set<std::string> creating{"tool_load_image",       "tool_skull_strip",
                                                "tool_register",         "tool_resample",
                                                "tool_segment_pathology", "tool_segment_anatomy"};
    for (std::size_t i = plan.size(); i-- > 0;) {
        if (plan[i].kind == EventKind::ToolCall && !creating.count(plan[i].name)) {
            Plan out = plan;
            out.erase(out.begin() + static_cast<long>(i));
            return out;
        }
    }
    return std::nullopt;
}

namespace {
bool is_segmentation(const backend::PlanStep& s) {
    return s.kind == EventKind::ToolCall && s.name == "tool_segment_pathology" && s.args.contains("model");
}
}  // namespace

std::size_t segmentation_steps(const Plan& plan) {
    return static_cast<std::size_t>(std::count_if(plan.begin(), plan.end(), is_segmentation));
}

std::optional<Plan> with_wrong_model(const Plan& plan, std::size_t occurrence) {
    std::size_t seen = 0;
    for (std::size_t i = 0; i < plan.size(); ++i) {
        const auto& s = plan[i];
        if (!is_segmentation(s) || seen++ != occurrence) continue;
        const std::string model = s.args["model"].get<std::string>();
        for (const auto& other : toolbox::model_names()) {
            if (other == model || toolbox::model_atlas(other) != toolbox::model_atlas(model)) continue;
            Plan out = plan;
            out[i].args["model"] = other;
            return out;
        }
        return std::nullopt;
    }
    return std::nullopt;
}

}  // namespace neuroagent::eval
