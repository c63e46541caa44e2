#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "neuroagent/agent/specs.hpp"
#include "neuroagent/backend/plan.hpp"
#include "neuroagent/backend/workflow.hpp"
#include "neuroagent/bench/oracle.hpp"
#include "neuroagent/bench/phantom.hpp"

namespace neuroagent::bench {

using backend::Intent;
using backend::Plan;
using backend::Template;

struct TemplateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Comparison { ExactString, Numeric, Vector, StringSet };
std::string to_string(Comparison c);
// Throws std::invalid_argument.
Comparison parse_comparison(const std::string& s);

// One queried field. Numeric fields pass when |got - want| <= max(abs_tol,
// rel_tol * |want|); vectors compare componentwise with the same rule.
struct ExpectedField {
    std::string name;
    json value;
    Comparison comparison = Comparison::ExactString;
    double rel_tol = 0.0;
    double abs_tol = 0.0;
    std::vector<std::string> aliases;

    json to_json() const;
    static ExpectedField from_json(const json& j);
    bool operator==(const ExpectedField&) const = default;
};

// Pinned tolerances.
inline constexpr double kVolumeRelTol = 0.01;
inline constexpr double kCentroidAbsTol = 1.0;  // mm
inline constexpr double kShapeRelTol = 0.01;
inline constexpr double kZeroAbsTol = 1e-6;     // lets 0 compare equal under a relative tolerance

struct BenchmarkItem {
    std::string id;
    int tier = 1;
    Template tmpl = Template::SegPathology;
    std::string question;
    std::string case_id;
    std::vector<std::string> timepoints;
    std::map<agent::Topology, Plan> expected_plans;
    std::vector<ExpectedField> expected_answer;
    json extra = json::object();  // unknown fields, preserved verbatim

    Intent intent() const;
    bool operator==(const BenchmarkItem&) const = default;
};

// Field names with spaces, and without unit suffix ("total volume").
std::vector<std::string> default_aliases(const std::string& field);

// Expected fields from the oracle, in report order. Throws TemplateError when
// the template does not fit the case.
std::vector<ExpectedField> expected_answer(const Intent& intent, const Oracle& oracle);

// Expected plan per topology, derived from the template skeleton with the
// case's handle numbering simulated. Tool steps match on their key
// arguments; delegation requests on their task.
std::map<agent::Topology, Plan> expected_plans(const Intent& intent, const PhantomSpec& spec,
                                               const std::vector<agent::Topology>& topologies =
                                                   agent::all_topologies());

// Throws TemplateError when the template does not fit the case.
BenchmarkItem build_item(const std::string& id, const Intent& intent, const PhantomSpec& spec, const Oracle& oracle,
                         const std::vector<agent::Topology>& topologies = agent::all_topologies());

}  // namespace neuroagent::bench
