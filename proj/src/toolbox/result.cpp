#include "neuroagent/toolbox/result.hpp"

namespace neuroagent::toolbox {

ToolResult ToolResult::success(nlohmann::json payload, std::vector<ObjectHandle> handles) {
    ToolResult r;
    r.payload = std::move(payload);
    r.handles = std::move(handles);
    return r;
}

ToolResult ToolResult::failure(std::string kind, std::string message, nlohmann::json detail) {
    ToolResult r;
    r.payload = detail.is_object() ? std::move(detail) : nlohmann::json::object();
    r.payload["message"] = std::move(message);
    r.error_kind = std::move(kind);
    return r;
}

nlohmann::json ToolResult::to_json() const {
    nlohmann::json j{{"status", status()}, {"payload", payload}};
    nlohmann::json hs = nlohmann::json::array();
    for (const auto& h : handles) hs.push_back(h.to_json());
    j["handles"] = std::move(hs);
    if (error_kind) j["error_kind"] = *error_kind;
    return j;
}

}  // namespace neuroagent::toolbox
