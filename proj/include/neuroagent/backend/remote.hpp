#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include <json.hpp>

#include "neuroagent/agent/backend.hpp"
#include "neuroagent/agent/registry.hpp"

namespace neuroagent::backend {

using nlohmann::json;

inline constexpr const char* kApiKeyVariable = "WORKBENCH_API_KEY";

struct RemoteConfig {
    std::string endpoint = "https://api.openai.com/v1/chat/completions";
    std::string model;
    std::string api_key;
    int max_retries = 5;
    double backoff_initial_seconds = 2.0;  // doubles per retry
    double backoff_cap_seconds = 60.0;
    double min_request_interval_seconds = 0.0;
    double timeout_seconds = 120.0;
    // Receives retry and malformed-response warnings; stderr when empty.
    std::function<void(const std::string&)> log;

    // Reads `endpoint`, `model`, `max_retries`, `backoff_initial_seconds`,
    // `backoff_cap_seconds`, `min_request_interval_seconds` and
    // `timeout_seconds` from flat config entries, and the key from the
    // environment. Throws ConfigError when the key or model is missing.
    static RemoteConfig from_entries(const std::map<std::string, std::string>& entries, const std::string& model);
};

// Minimum spacing between request starts, shared by concurrent episodes.
class RateLimiter {
public:
    explicit RateLimiter(double min_interval_seconds) : interval_(min_interval_seconds) {}
    void acquire();

private:
    std::mutex mu_;
    double interval_;
    std::chrono::steady_clock::time_point next_{};
};

// Chat-completions request body: temperature 0, the agent's tools plus
// handoff (transfer_to_<agent>) and delegation (call_<agent>) functions, and
// the transcript with tool observations passed back as user turns.
json completion_body(const agent::DecisionContext& ctx, const std::string& model,
                     const agent::ToolRegistry& registry = agent::standard_registry());

struct ParsedCompletion {
    agent::Decision decision;
    std::string warning;  // set when a malformed tool call fell back to text
};
ParsedCompletion parse_completion(const json& response);

class RemoteBackend : public agent::Backend {
public:
    RemoteBackend(RemoteConfig config, std::shared_ptr<RateLimiter> limiter = nullptr,
                  const agent::ToolRegistry& registry = agent::standard_registry());

    // Retries non-2xx and transport failures with exponential backoff, then
    // throws BackendError.
    agent::Decision decide(const agent::DecisionContext& ctx) override;
    std::string name() const override { return "remote:" + config_.model; }

    int retries() const { return retries_; }

private:
    void warn(const std::string& msg) const;

    RemoteConfig config_;
    std::shared_ptr<RateLimiter> limiter_;
    const agent::ToolRegistry& registry_;
    int retries_ = 0;
};

}  // namespace neuroagent::backend
