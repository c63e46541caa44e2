#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "neuroagent/agent/registry.hpp"

namespace neuroagent::agent {

enum class Topology { Single, AgentsAsTools, Handoffs, Orchestrator };

std::string to_string(Topology t);
// Accepts "single", "agents-as-tools", "handoffs", "orchestrator"; throws std::invalid_argument.
Topology parse_topology(const std::string& s);
const std::vector<Topology>& all_topologies();

struct AgentSpec {
    std::string name;
    std::string instructions;
    std::vector<std::string> tools;
    std::vector<std::string> peers;
};

// preprocessing, segmentation, analysis, orchestrator, generalist
const std::vector<AgentSpec>& standard_agents();
// Throws std::out_of_range.
const AgentSpec& agent_spec(const std::string& name);
bool is_agent_name(const std::string& name);

const AgentSpec& entry_agent(Topology t);

struct RenderedSchema {
    std::string text;
    std::int64_t tokens = 0;
};

// Instructions followed by the function schemas of exactly the agent's tools.
// Throws UnknownTool for unregistered names.
RenderedSchema render_tool_schemas(const AgentSpec& agent, const ToolRegistry& registry);

}  // namespace neuroagent::agent
