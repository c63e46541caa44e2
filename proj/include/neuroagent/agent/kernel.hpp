#pragma once

#include <string>
#include <vector>

#include "neuroagent/agent/backend.hpp"
#include "neuroagent/agent/registry.hpp"
#include "neuroagent/agent/specs.hpp"
#include "neuroagent/agent/trace.hpp"
#include "neuroagent/toolbox/toolbox.hpp"

namespace neuroagent::agent {

inline constexpr int kDefaultBudget = 40;
inline constexpr const char* kBudgetExceeded = "budget_exceeded";

struct EpisodeOptions {
    int budget = kDefaultBudget;
    toolbox::ToolboxConfig toolbox;
};

struct EpisodeResult {
    std::string final_text;
    Trace trace;
    bool budget_exceeded = false;
    std::vector<Message> transcript;  // entry agent's view at the end
};

// Header line listing the case images preloaded as obj_1.. in the first user message.
inline constexpr const char* kCaseImagesMarker = "Case images:";

// Builds the entry prompt: the question followed by the preloaded images.
std::string initial_prompt(const std::string& question, const json& images);

// Runs one episode to a final answer or budget exhaustion. Images of every
// case timepoint are preloaded (not traced) in T1, T1ce, T2, FLAIR order.
// Throws BackendError from the backend and std::invalid_argument for budget < 1.
EpisodeResult run_episode(const std::string& question, const toolbox::CaseContext& ctx, Topology topology,
                          Backend& backend, const ToolRegistry& registry = standard_registry(),
                          const EpisodeOptions& options = {});

}  // namespace neuroagent::agent
