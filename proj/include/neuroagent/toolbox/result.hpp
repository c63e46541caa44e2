#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "neuroagent/toolbox/handles.hpp"

namespace neuroagent::toolbox {

// Error tags carried by ToolResult::error_kind.
namespace errc {
inline constexpr const char* kNotFound = "not_found";
inline constexpr const char* kBadHandle = "bad_handle";
inline constexpr const char* kWrongKind = "wrong_kind";
inline constexpr const char* kBadArgument = "bad_argument";
inline constexpr const char* kMissingInput = "missing_input";
inline constexpr const char* kPreconditionFailed = "precondition_failed";
inline constexpr const char* kGridError = "grid_error";
inline constexpr const char* kIoError = "io_error";
}  // namespace errc

// Uniform tool envelope: status is error exactly when error_kind is set.
struct ToolResult {
    nlohmann::json payload = nlohmann::json::object();
    std::vector<ObjectHandle> handles;
    std::optional<std::string> error_kind;

    bool ok() const { return !error_kind.has_value(); }
    std::string status() const { return ok() ? "ok" : "error"; }

    static ToolResult success(nlohmann::json payload, std::vector<ObjectHandle> handles = {});
    static ToolResult failure(std::string kind, std::string message, nlohmann::json detail = {});

    // {"status", "payload", "handles", "error_kind"?}
    nlohmann::json to_json() const;
};

}  // namespace neuroagent::toolbox
