#include "neuroagent/backend/plan.hpp"

#include <map>
#include <stdexcept>

namespace neuroagent::backend {

json PlanStep::to_json() const {
    json j{{"kind", agent::to_string(kind)}, {"agent", agent}, {"name", name}, {"args", args}};
    if (!key_args.empty()) j["key_args"] = key_args;
    return j;
}

PlanStep PlanStep::from_json(const json& j) {
    if (!j.is_object()) throw std::invalid_argument("plan step must be an object");
    for (const char* f : {"kind", "agent", "name"})
        if (!j.contains(f) || !j[f].is_string()) throw std::invalid_argument(std::string("plan step field '") + f + "'");
    PlanStep s;
    s.kind = agent::parse_event_kind(j["kind"].get<std::string>());
    s.agent = j["agent"].get<std::string>();
    s.name = j["name"].get<std::string>();
    s.args = j.value("args", json::object());
    if (j.contains("key_args")) {
        if (!j["key_args"].is_array()) throw std::invalid_argument("plan step field 'key_args'");
        s.key_args = j["key_args"].get<std::vector<std::string>>();
    }
    return s;
}

json plan_to_json(const Plan& plan) {
    json out = json::array();
    for (const auto& s : plan) out.push_back(s.to_json());
    return out;
}

Plan plan_from_json(const json& j) {
    if (!j.is_array()) throw std::invalid_argument("plan must be a list");
    Plan p;
    for (const auto& s : j) p.push_back(PlanStep::from_json(s));
    if (p.empty() || p.back().kind != agent::EventKind::FinalAnswer)
        throw std::invalid_argument("plan must end in FinalAnswer");
    return p;
}

const std::vector<std::string>& tool_key_args(const std::string& tool) {
    static const std::map<std::string, std::vector<std::string>> keys{
        {"tool_load_image", {"path"}},
        {"tool_register", {"target"}},
        {"tool_resample", {"spacing"}},
        {"tool_verify_registration", {"reference"}},
        {"tool_segment_pathology", {"model"}},
        {"tool_list_labels", {"scope"}},
        {"tool_lesion_geometry", {"lesion_id"}},
        {"tool_lesion_features", {"lesion_id"}},
        {"tool_localize", {"lesion_id"}},
    };
    static const std::vector<std::string> none;
    auto it = keys.find(tool);
    return it == keys.end() ? none : it->second;
}

}  // namespace neuroagent::backend
