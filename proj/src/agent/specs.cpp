#include "neuroagent/agent/specs.hpp"

#include <stdexcept>

#include "neuroagent/agent/tokens.hpp"

namespace neuroagent::agent {

std::string to_string(Topology t) {
    switch (t) {
        case Topology::Single: return "single";
        case Topology::AgentsAsTools: return "agents-as-tools";
        case Topology::Handoffs: return "handoffs";
        case Topology::Orchestrator: return "orchestrator";
    }
    return "unknown";
}

Topology parse_topology(const std::string& s) {
    for (Topology t : all_topologies())
        if (to_string(t) == s) return t;
    throw std::invalid_argument("unknown topology: " + s);
}

const std::vector<Topology>& all_topologies() {
    static const std::vector<Topology> all{Topology::Single, Topology::AgentsAsTools, Topology::Handoffs,
                                           Topology::Orchestrator};
    return all;
}

namespace {

constexpr const char* kProtocol =
    " Delegation uses structured requests {task, inputs: {handles, params}, expected_outputs} and responses "
    "{status: done|failed, outputs, summary}; free text between agents is rejected.";

std::vector<AgentSpec> make_agents() {
    std::vector<AgentSpec> a;
    a.push_back({"preprocessing",
                 std::string("You are the preprocessing agent. Skull-strip and register the images you are given "
                             "to the requested atlas, one modality at a time, then report the processed image "
                             "handles. If nothing needs processing, reply done with the summary 'nothing to do'.") +
                     kProtocol,
                 {"tool_skull_strip", "tool_register", "tool_resample"},
                 {"analysis", "segmentation"}});
    a.push_back({"segmentation",
                 std::string("You are the segmentation agent. Check model prerequisites locally (verify the "
                             "registration of an input against the model's atlas), then run the pathology or "
                             "anatomy segmentation requested and report the mask handles and output files.") +
                     kProtocol,
                 {"tool_verify_registration", "tool_segment_pathology", "tool_segment_anatomy"},
                 {"analysis", "preprocessing"}});
    a.push_back({"analysis",
                 std::string("You are the analysis agent and the user's point of contact. Delegate preprocessing "
                             "and segmentation to the specialist agents, measure lesions and regions with your "
                             "tools, and answer with one 'field: value' line per requested field; write "
                             "'cannot find' for values you could not obtain.") +
                     kProtocol,
                 {"tool_load_image", "tool_list_labels", "tool_enumerate_lesions", "tool_match_lesions",
                  "tool_lesion_geometry", "tool_lesion_features", "tool_localize", "tool_visualize"},
                 {"preprocessing", "segmentation"}});
    a.push_back({"orchestrator",
                 std::string("You are the orchestrator. You have no tools. Plan the workflow and delegate each "
                             "stage to the preprocessing, segmentation and analysis agents in turn, passing "
                             "handles and results between them, then answer the user with one 'field: value' "
                             "line per requested field.") +
                     kProtocol,
                 {},
                 {"preprocessing", "segmentation", "analysis"}});
    a.push_back({"generalist",
                 "You are a neuro-radiology assistant with the full tool suite. Preprocess raw scans (skull strip, "
                 "atlas registration) before pathology segmentation, then measure what is asked and answer with "
                 "one 'field: value' line per requested field; write 'cannot find' for values you could not "
                 "obtain.",
                 {"tool_load_image", "tool_skull_strip", "tool_register", "tool_resample", "tool_verify_registration",
                  "tool_segment_pathology", "tool_segment_anatomy", "tool_list_labels", "tool_enumerate_lesions",
                  "tool_match_lesions", "tool_lesion_geometry", "tool_lesion_features", "tool_localize",
                  "tool_visualize"},
                 {}});
    return a;
}

}  // namespace

const std::vector<AgentSpec>& standard_agents() {
    static const std::vector<AgentSpec> agents = make_agents();
    return agents;
}

const AgentSpec& agent_spec(const std::string& name) {
    for (const auto& a : standard_agents())
        if (a.name == name) return a;
    throw std::out_of_range("unknown agent: " + name);
}

bool is_agent_name(const std::string& name) {
    for (const auto& a : standard_agents())
        if (a.name == name) return true;
    return false;
}

const AgentSpec& entry_agent(Topology t) {
    switch (t) {
        case Topology::Single: return agent_spec("generalist");
        case Topology::Orchestrator: return agent_spec("orchestrator");
        default: return agent_spec("analysis");
    }
}

RenderedSchema render_tool_schemas(const AgentSpec& agent, const ToolRegistry& registry) {
    RenderedSchema r;
    r.text = agent.instructions;
    if (!agent.tools.empty()) {
        json tools = json::array();
        for (const auto& t : agent.tools) tools.push_back(registry.descriptor(t).schema());
        r.text += "\n\nTools:\n" + tools.dump();
    }
    r.tokens = estimate_tokens(r.text);
    return r;
}

}  // namespace neuroagent::agent
