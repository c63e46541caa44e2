#pragma once

// Scoring of finished episodes: tool-call fidelity against the expected plan,
// error and cost accounting, and a field-level judge of the final answer.
// Everything here is a pure function of its inputs.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "neuroagent/agent/specs.hpp"
#include "neuroagent/agent/trace.hpp"
#include "neuroagent/backend/plan.hpp"
#include "neuroagent/backend/pricing.hpp"
#include "neuroagent/bench/item.hpp"

namespace neuroagent::eval {

using nlohmann::json;
using backend::ConfigError;

// ------------------------------------------------------------------ fidelity

struct FidelityScore {
    double precision = 0.0;
    double recall = 0.0;
    std::size_t predicted = 0;
    std::size_t expected = 0;
    // Action keys, sorted.
    std::vector<std::string> matched;
    std::vector<std::string> extra;    // predicted, unmatched
    std::vector<std::string> missing;  // expected, unmatched

    json to_json() const;
};

// Key of an action: kind, name and the canonical values of `key_args`
// ("-" for an absent argument).
std::string action_key(agent::EventKind kind, const std::string& name, const json& args,
                       const std::vector<std::string>& key_args);

// Traced actions as plan steps, FinalAnswer included, in trace order.
backend::Plan trace_actions(const agent::Trace& trace);

// Multiset match on action keys, order ignored, FinalAnswer excluded. A
// predicted action is keyed with the arguments the expected plan names for
// that (kind, name); actions the plan does not know match by name alone.
FidelityScore plan_fidelity(const backend::Plan& predicted, const backend::Plan& expected);
FidelityScore plan_fidelity(const agent::Trace& trace, const backend::Plan& expected);

// Number of ToolError events, retries counted per occurrence.
std::size_t count_errors(const agent::Trace& trace);

// ------------------------------------------------------------------ judge

struct FieldVerdict {
    std::string name;
    bool included = false;
    bool correct = false;  // implies included
    std::string reported;  // raw value text, empty when not included

    json to_json() const;
};

struct JudgeVerdict {
    std::vector<FieldVerdict> fields;
    std::size_t included = 0;
    std::size_t correct = 0;

    std::size_t queried() const { return fields.size(); }
    double inclusion_rate() const;
    double accuracy() const;
    json to_json() const;
};

// Reported numbers carry three decimals; this much display rounding is
// forgiven on top of each field's own tolerance.
inline constexpr double kDisplayRounding = 5e-4;

// Lower case, '_' and '-' as spaces, surrounding markup and blanks trimmed,
// inner blanks collapsed.
std::string normalize_key(const std::string& s);

// `key: value` lines, keys normalised, first occurrence kept. Inline
// "<name> is <value>" phrases need the field names and are read by the judge.
std::map<std::string, std::string> extract_pairs(const std::string& answer);

// Numbers in a value, skipping digits that are part of a word ("mm3").
std::vector<double> extract_numbers(const std::string& value);

// True for "cannot find", "not applicable" and similar abstentions.
bool is_abstention(const std::string& value);

bool value_matches(const bench::ExpectedField& field, const std::string& reported);

// Interface of an answer judge; a remote judge can stand in for the parser.
class Judge {
public:
    virtual ~Judge() = default;
    virtual JudgeVerdict judge(const std::string& answer, const std::vector<bench::ExpectedField>& fields) const = 0;
};

class DeterministicJudge : public Judge {
public:
    JudgeVerdict judge(const std::string& answer, const std::vector<bench::ExpectedField>& fields) const override;
};

JudgeVerdict judge_answer(const std::string& answer, const std::vector<bench::ExpectedField>& fields);

// ------------------------------------------------------------------ runs

struct RunMetrics {
    std::size_t errors = 0;
    std::size_t actions = 0;
    std::int64_t tokens_in = 0;
    std::int64_t tokens_out = 0;
    double cost_cents = 0.0;
    double inclusion_rate = 0.0;
    double accuracy = 0.0;
    bool budget_exceeded = false;

    json to_json() const;
};

struct RunReport {
    std::string item_id;
    int tier = 1;
    agent::Topology topology = agent::Topology::Single;
    std::string backend;
    RunMetrics metrics;
    FidelityScore fidelity;
    JudgeVerdict verdict;

    // One audit record; see verdicts_jsonl.
    json to_json() const;
};

// Price-table key of a backend name: "remote:<model>" prices as <model>.
std::string price_key(const std::string& backend);

// Throws ConfigError when the item has no plan for the topology or the
// backend has no price.
RunReport evaluate_run(const agent::Trace& trace, const bench::BenchmarkItem& item, agent::Topology topology,
                       const std::string& backend, const backend::PriceTable& prices,
                       const Judge& judge = DeterministicJudge{});

// One JSON record per run, in the given order, trailing newline.
std::string verdicts_jsonl(const std::vector<RunReport>& reports);

// ------------------------------------------------------------------ reports

struct GroupKey {
    int tier = 1;
    agent::Topology topology = agent::Topology::Single;
    std::string backend;
    auto operator<=>(const GroupKey&) const = default;
};

struct GroupRow {
    GroupKey key;
    std::size_t runs = 0;
    double errors = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double actions = 0.0;
    double tokens_in = 0.0;
    double tokens_out = 0.0;
    double cost_cents = 0.0;
    double inclusion_rate = 0.0;
    double accuracy = 0.0;
};

struct ReportTable {
    std::vector<GroupRow> rows;  // ascending key

    std::string to_text() const;
    std::string to_csv() const;
};

// Column headers of the metric part of a table, in display order.
const std::vector<std::string>& metric_columns();

// Per-group means, folded in item-id order. Throws std::invalid_argument when
// `reports` is empty.
ReportTable aggregate(std::vector<RunReport> reports);

}  // namespace neuroagent::eval
