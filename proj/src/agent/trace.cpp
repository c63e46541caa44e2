#include "neuroagent/agent/trace.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace neuroagent::agent {

std::string to_string(EventKind k) {
    switch (k) {
        case EventKind::ToolCall: return "ToolCall";
        case EventKind::ToolError: return "ToolError";
        case EventKind::Handoff: return "Handoff";
        case EventKind::SubagentRequest: return "SubagentRequest";
        case EventKind::SubagentResponse: return "SubagentResponse";
        case EventKind::FinalAnswer: return "FinalAnswer";
    }
    return "unknown";
}

EventKind parse_event_kind(const std::string& s) {
    for (EventKind k : {EventKind::ToolCall, EventKind::ToolError, EventKind::Handoff, EventKind::SubagentRequest,
                        EventKind::SubagentResponse, EventKind::FinalAnswer})
        if (to_string(k) == s) return k;
    throw std::invalid_argument("unknown event kind: " + s);
}

bool TraceEvent::is_action() const {
    if (kind == EventKind::ToolError) return false;
    return !(kind == EventKind::FinalAnswer && synthetic);
}

json TraceEvent::to_json() const {
    json j{{"seq", seq},   {"agent", agent},         {"kind", to_string(kind)},
           {"name", name}, {"args", args},           {"text", text},
           {"tokens_in", tokens_in}, {"tokens_out", tokens_out}};
    if (!error_kind.empty()) j["error_kind"] = error_kind;
    if (synthetic) j["synthetic"] = true;
    return j;
}

TraceEvent TraceEvent::from_json(const json& j) {
    TraceEvent e;
    e.seq = j.at("seq").get<int>();
    e.agent = j.at("agent").get<std::string>();
    e.kind = parse_event_kind(j.at("kind").get<std::string>());
    e.name = j.value("name", "");
    e.args = j.value("args", json::object());
    e.text = j.value("text", "");
    e.error_kind = j.value("error_kind", "");
    e.tokens_in = j.value("tokens_in", std::int64_t{0});
    e.tokens_out = j.value("tokens_out", std::int64_t{0});
    e.synthetic = j.value("synthetic", false);
    return e;
}

std::size_t Trace::action_count() const {
    std::size_t n = 0;
    for (const auto& e : events) n += e.is_action();
    return n;
}

std::size_t Trace::error_count() const {
    std::size_t n = 0;
    for (const auto& e : events) n += e.kind == EventKind::ToolError;
    return n;
}

std::int64_t Trace::tokens_in() const {
    std::int64_t n = 0;
    for (const auto& e : events) n += e.tokens_in;
    return n;
}

std::int64_t Trace::tokens_out() const {
    std::int64_t n = 0;
    for (const auto& e : events) n += e.tokens_out;
    return n;
}

std::string Trace::final_answer() const {
    for (auto it = events.rbegin(); it != events.rend(); ++it)
        if (it->kind == EventKind::FinalAnswer) return it->text;
    return {};
}

std::string Trace::to_jsonl() const {
    std::string out;
    for (const auto& e : events) out += e.to_json().dump() + "\n";
    return out;
}

Trace Trace::from_jsonl(const std::string& text) {
    Trace t;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        t.events.push_back(TraceEvent::from_json(json::parse(line)));
    }
    return t;
}

json canonicalize(const json& j) {
    if (j.is_object()) {
        json out = json::object();  // std::map ordering sorts keys
        for (const auto& [k, v] : j.items()) out[k] = canonicalize(v);
        return out;
    }
    if (j.is_array()) {
        json out = json::array();
        for (const auto& v : j) out.push_back(canonicalize(v));
        return out;
    }
    if (j.is_number_float()) {
        const double d = j.get<double>();
        if (std::isfinite(d) && std::floor(d) == d && std::fabs(d) < 9007199254740992.0)
            return static_cast<std::int64_t>(d);
        return d;
    }
    if (j.is_number_unsigned()) return static_cast<std::int64_t>(j.get<std::uint64_t>());
    return j;
}

std::string canonical_dump(const json& j) { return canonicalize(j).dump(); }

}  // namespace neuroagent::agent
