#include "neuroagent/backend/remote.hpp"

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <regex>
#include <thread>

#include <httplib.h>

#include "neuroagent/agent/tokens.hpp"
#include "neuroagent/backend/pricing.hpp"

namespace neuroagent::backend {

using agent::Decision;
using agent::DecisionContext;

namespace {

constexpr const char* kTransferPrefix = "transfer_to_";
constexpr const char* kCallPrefix = "call_";

double parse_number(const std::map<std::string, std::string>& e, const std::string& key, double fallback) {
    auto it = e.find(key);
    if (it == e.end()) return fallback;
    try {
        std::size_t used = 0;
        const double v = std::stod(it->second, &used);
        if (used != it->second.size() || !std::isfinite(v) || v < 0) throw std::invalid_argument(key);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("invalid value for '" + key + "': " + it->second);
    }
}

json request_schema() {
    return {{"type", "object"},
            {"properties",
             {{"task", {{"type", "string"}}},
              {"inputs",
               {{"type", "object"},
                {"properties",
                 {{"handles", {{"type", "array"}, {"items", {{"type", "string"}}}}},
                  {"params", {{"type", "object"}}}}},
                {"required", {"handles", "params"}}}},
              {"expected_outputs", {{"type", "array"}, {"items", {{"type", "string"}}}}}}},
            {"required", {"task", "inputs", "expected_outputs"}}};
}

}  // namespace

RemoteConfig RemoteConfig::from_entries(const std::map<std::string, std::string>& e, const std::string& model) {
    RemoteConfig c;
    if (auto it = e.find("endpoint"); it != e.end()) c.endpoint = it->second;
    c.model = model.empty() ? (e.count("model") ? e.at("model") : std::string()) : model;
    if (c.model.empty()) throw ConfigError("remote backend needs a model name");
    c.max_retries = static_cast<int>(parse_number(e, "max_retries", c.max_retries));
    c.backoff_initial_seconds = parse_number(e, "backoff_initial_seconds", c.backoff_initial_seconds);
    c.backoff_cap_seconds = parse_number(e, "backoff_cap_seconds", c.backoff_cap_seconds);
    c.min_request_interval_seconds = parse_number(e, "min_request_interval_seconds", c.min_request_interval_seconds);
    c.timeout_seconds = parse_number(e, "timeout_seconds", c.timeout_seconds);
    const char* key = std::getenv(kApiKeyVariable);
    if (!key || !*key) throw ConfigError(std::string("remote backend needs ") + kApiKeyVariable);
    c.api_key = key;
    return c;
}

void RateLimiter::acquire() {
    if (interval_ <= 0) return;
    std::chrono::steady_clock::time_point start;
    {
        std::lock_guard<std::mutex> lock(mu_);
        const auto now = std::chrono::steady_clock::now();
        start = std::max(now, next_);
        next_ = start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                            std::chrono::duration<double>(interval_));
    }
    std::this_thread::sleep_until(start);
}

json completion_body(const DecisionContext& ctx, const std::string& model, const agent::ToolRegistry& registry) {
    json tools = json::array();
    for (const auto& t : ctx.agent.tools)
        if (registry.contains(t)) tools.push_back({{"type", "function"}, {"function", registry.descriptor(t).schema()}});
    for (const auto& a : ctx.handoff_targets)
        tools.push_back({{"type", "function"},
                         {"function",
                          {{"name", kTransferPrefix + a},
                           {"description", "Hand the conversation over to the " + a + " agent."},
                           {"parameters", {{"type", "object"}, {"properties", json::object()}}}}}});
    for (const auto& a : ctx.delegates)
        tools.push_back({{"type", "function"},
                         {"function",
                          {{"name", kCallPrefix + a},
                           {"description", "Ask the " + a + " agent to perform a task and report back."},
                           {"parameters", request_schema()}}}});

    json messages = json::array();
    messages.push_back({{"role", "system"}, {"content", ctx.agent.instructions}});
    for (const auto& m : ctx.messages) {
        if (m.role == "tool")
            messages.push_back({{"role", "user"}, {"content", "Observation: " + m.content}});
        else
            messages.push_back({{"role", m.role}, {"content", m.content}});
    }
    json body{{"model", model}, {"temperature", 0}, {"messages", messages}};
    if (!tools.empty()) body["tools"] = tools;
    return body;
}

ParsedCompletion parse_completion(const json& response) {
    ParsedCompletion out;
    const json* msg = nullptr;
    if (response.contains("choices") && response["choices"].is_array() && !response["choices"].empty() &&
        response["choices"][0].contains("message"))
        msg = &response["choices"][0]["message"];
    std::string text;
    if (msg && msg->contains("content") && (*msg)["content"].is_string()) text = (*msg)["content"];
    if (!msg) out.warning = "response without choices";

    std::vector<agent::ToolInvocation> calls;
    bool malformed = false;
    if (msg && msg->contains("tool_calls") && (*msg)["tool_calls"].is_array()) {
        for (const auto& tc : (*msg)["tool_calls"]) {
            const json fn = tc.value("function", json::object());
            const std::string name = fn.value("name", "");
            json args = json::object();
            if (fn.contains("arguments")) {
                const json& raw = fn["arguments"];
                args = raw.is_string() ? json::parse(raw.get<std::string>(), nullptr, false) : raw;
            }
            if (name.empty() || args.is_discarded() || !args.is_object()) {
                malformed = true;
                break;
            }
            if (name.rfind(kTransferPrefix, 0) == 0) {
                out.decision = Decision::handoff(name.substr(std::string(kTransferPrefix).size()));
                calls.clear();
                break;
            }
            if (name.rfind(kCallPrefix, 0) == 0) {
                out.decision = Decision::subagent(name.substr(std::string(kCallPrefix).size()), args);
                calls.clear();
                break;
            }
            calls.push_back({name, args});
        }
    }
    if (malformed) {
        out.warning = "malformed tool call; treating the reply as text";
        out.decision = Decision::final_answer(text);
    } else if (!calls.empty()) {
        out.decision = Decision::tool_calls(std::move(calls));
    } else if (out.decision.kind != Decision::Kind::Handoff && out.decision.kind != Decision::Kind::Subagent) {
        out.decision = Decision::final_answer(text);
    }
    if (response.contains("usage") && response["usage"].is_object()) {
        const json& u = response["usage"];
        if (u.contains("prompt_tokens")) out.decision.reported_tokens_in = u["prompt_tokens"].get<std::int64_t>();
        if (u.contains("completion_tokens"))
            out.decision.reported_tokens_out = u["completion_tokens"].get<std::int64_t>();
    }
    return out;
}

RemoteBackend::RemoteBackend(RemoteConfig config, std::shared_ptr<RateLimiter> limiter,
                             const agent::ToolRegistry& registry)
    : config_(std::move(config)), limiter_(std::move(limiter)), registry_(registry) {}

void RemoteBackend::warn(const std::string& msg) const {
    if (config_.log)
        config_.log(msg);
    else
        std::cerr << "warning: " << msg << "\n";
}

Decision RemoteBackend::decide(const DecisionContext& ctx) {
    static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(config_.endpoint, m, kUrl)) throw agent::BackendError("bad endpoint " + config_.endpoint);
    const std::string host = m[1].str();
    const std::string path = m[2].matched ? m[2].str() : "/";

    const std::string body = completion_body(ctx, config_.model, registry_).dump();
    httplib::Client client(host);
    const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_bearer_token_auth(config_.api_key);

    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            ++retries_;
            const double delay = std::min(config_.backoff_cap_seconds,
                                          config_.backoff_initial_seconds * std::pow(2.0, attempt - 1));
            warn("retry " + std::to_string(attempt) + " after " + last_error);
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
        }
        if (limiter_) limiter_->acquire();
        auto res = client.Post(path, body, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        json parsed = json::parse(res->body, nullptr, false);
        if (parsed.is_discarded()) {
            last_error = "unparseable response body";
            continue;
        }
        ParsedCompletion pc = parse_completion(parsed);
        if (!pc.warning.empty()) warn(pc.warning);
        Decision d = std::move(pc.decision);
        d.tokens_in = agent::context_tokens(ctx);
        d.tokens_out = agent::estimate_tokens(d.to_json().dump());
        return d;
    }
    throw agent::BackendError("giving up after " + std::to_string(config_.max_retries) + " retries: " + last_error);
}

}  // namespace neuroagent::backend
