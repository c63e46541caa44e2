#pragma once

#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "neuroagent/toolbox/result.hpp"
#include "neuroagent/toolbox/toolbox.hpp"

namespace neuroagent::agent {

using nlohmann::json;

struct DuplicateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UnknownTool : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Semantic parameter types: handle, text, number, integer, vector3.
struct ParamSpec {
    std::string name;
    std::string type;
    bool required = true;
    std::string description;
    // Error tag reported when a required parameter is absent.
    std::string missing_error = toolbox::errc::kBadArgument;
};

struct ToolDescriptor {
    std::string name;
    std::string description;
    std::vector<ParamSpec> params;
    std::string returns;

    // Function-calling schema: {"name", "description", "parameters": {...}}.
    json schema() const;
};

using ToolBinding = std::function<toolbox::ToolResult(toolbox::Toolbox&, const json& args)>;

class ToolRegistry {
public:
    // Throws DuplicateError when the name is taken.
    void register_tool(ToolDescriptor descriptor, ToolBinding binding);

    bool contains(const std::string& name) const { return tools_.count(name) > 0; }
    std::size_t size() const { return tools_.size(); }
    std::vector<std::string> names() const;
    // Throws UnknownTool.
    const ToolDescriptor& descriptor(const std::string& name) const;

    // Checks arguments against the descriptor, then dispatches. Schema
    // violations come back as error results; throws UnknownTool.
    toolbox::ToolResult dispatch(toolbox::Toolbox& tb, const std::string& name, const json& args) const;

private:
    struct Entry {
        ToolDescriptor descriptor;
        ToolBinding binding;
    };
    std::map<std::string, Entry> tools_;
};

// Null when args satisfy the descriptor, otherwise the error result.
std::optional<toolbox::ToolResult> validate_args(const ToolDescriptor& d, const json& args);

// The fourteen simulated tools.
std::vector<std::pair<ToolDescriptor, ToolBinding>> toolbox_tools();
const ToolRegistry& standard_registry();

}  // namespace neuroagent::agent
