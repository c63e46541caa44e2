#pragma once

// Shared task model of the offline backends: the benchmark question grammar,
// what a transcript reveals about the case, the work units a question breaks
// into, and the answer each unit set composes to. The scripted replayer and
// the rule-based planner both read transcripts through this layer.

#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "neuroagent/agent/backend.hpp"
#include "neuroagent/agent/protocol.hpp"

namespace neuroagent::backend {

using nlohmann::json;

enum class Template {
    SegPathology,
    SegAnatomy,
    LesionCount,
    TotalVolume,
    SubregionVolumes,
    LargestLesion,
    LesionLocations,
    LesionReport,
    LesionShape,
    RegionVolume,
    VolumeChange,
    NewLesions,
    NewLesionLocations,
    ResponseReport,
    LesionTracking,
};

const std::vector<Template>& all_templates();
std::string to_string(Template t);
// Throws std::invalid_argument.
Template parse_template(const std::string& s);
int template_tier(Template t);
bool is_longitudinal(Template t);
// False for the anatomy templates, which never run a pathology model.
bool uses_pathology(Template t);
// Templates whose answer is read off the segmentation alone.
bool has_analysis(Template t);

struct Intent {
    Template tmpl = Template::SegPathology;
    std::string case_id;
    std::string model;                    // pathology model; empty for anatomy templates
    std::vector<std::string> timepoints;  // one, or baseline then follow-up
    std::string region;                   // RegionVolume only
    bool operator==(const Intent&) const = default;
};

// Noun phrase naming a model's pathology, e.g. "brain metastases".
std::string pathology_phrase(const std::string& model);
// First pathology keyword in the text, most specific first.
std::optional<std::string> model_from_keywords(const std::string& text);

std::string render_question(const Intent& intent);
// Inverse of render_question over the benchmark grammar; nullopt otherwise.
std::optional<Intent> parse_question(const std::string& question);

// Largest lesion fields are reported for lesion 1 (components are ordered by size).
inline constexpr int kLargestLesionId = 1;
// Per-lesion report templates are only built for cases with at most this many lesions.
inline constexpr int kMaxReportedLesions = 9;

struct ImageRef {
    std::string handle;
    std::string timepoint;
    std::string modality;
    std::string space;
    bool skull_stripped = false;

    bool native() const { return space == "native"; }
    json to_json() const;
    static ImageRef from_json(const json& j);
    bool operator==(const ImageRef&) const = default;
};

// Everything a transcript tells an agent about its case.
struct Knowledge {
    std::string question;
    std::optional<agent::InterAgentRequest> request;  // set inside a delegated run
    std::vector<ImageRef> images;                     // discovery order, unique handles
    bool case_raw = false;                            // a preloaded image is in scanner space

    std::map<std::string, json> masks;    // timepoint -> segmentation payload + "handle"
    std::map<std::string, json> anatomy;  // timepoint -> anatomy payload + "handle" + "handles"
    std::map<std::string, json> labels;   // scope -> list_labels payload
    std::map<std::string, json> enumerations;
    std::map<std::pair<std::string, int>, json> geometry, features, localized;
    std::map<std::pair<std::string, std::string>, json> matches;
    std::set<std::string> verify_checked;  // images already checked against a reference
    std::optional<json> answer;            // field document from an analysis response
    int preprocessing_responses = 0;
    std::set<std::string> failed_units;  // unit keys whose delegation failed
    std::set<std::string> failed_calls;  // call_key of tool calls that returned an error

    // First image in a state: "raw" (scanner space, unstripped), "stripped"
    // (scanner space), "ready" (stripped, template space) or "any".
    const ImageRef* find_image(const std::string& tp, const std::string& modality, const std::string& state) const;
    void add_image(const ImageRef& ref);
};

std::string call_key(const std::string& tool, const json& args);

// Reads the first `count` messages.
Knowledge ingest(const std::vector<agent::Message>& messages,
                 std::size_t count = std::numeric_limits<std::size_t>::max());
// Extends `k` with messages [from, to).
void ingest_range(Knowledge& k, const std::vector<agent::Message>& messages, std::size_t from, std::size_t to);

// Incremental ingest of append-only transcripts. Entries are keyed by the
// transcript's address and revalidated against its first and last ingested
// messages, so a reused address never yields stale knowledge.
class KnowledgeCache {
public:
    const Knowledge& view(const std::vector<agent::Message>& messages);

private:
    struct Entry {
        Knowledge k;
        std::size_t count = 0;
        std::string first, last;
    };
    std::map<const void*, Entry> entries_;
};

enum class UnitKind { Prep, SegPathology, SegAnatomy, Analysis };

// One delegable piece of work, owned by a specialist agent.
struct Unit {
    UnitKind kind = UnitKind::Analysis;
    std::string timepoint;  // empty for Analysis
    std::string model;      // SegPathology
    std::string atlas;      // Prep, SegPathology: template space the model needs

    std::string owner() const;
    std::string task() const;  // request task name
    std::string key() const;   // task:timepoint
    bool operator==(const Unit&) const = default;
};

// Units in execution order: per timepoint preprocessing (raw pathology cases
// only) then segmentation, then analysis when the template needs it.
std::vector<Unit> plan_units(const Intent& intent, bool case_raw);
// The unit a delegated request asks for; nullopt for unknown tasks.
std::optional<Unit> unit_from_request(const agent::InterAgentRequest& request);

bool unit_complete(const Unit& unit, const Intent* intent, const Knowledge& k);
// Next tool call of a unit, skipping calls that already failed. `verify`
// adds the registration check specialists run before segmenting.
std::optional<agent::ToolInvocation> next_step(const Unit& unit, const Intent* intent, const Knowledge& k,
                                               bool verify);

// Answer fields in report order; null values print as "cannot find".
using Fields = std::vector<std::pair<std::string, json>>;
Fields compose_fields(const Intent& intent, const Knowledge& k);
std::string format_value(const json& v);
std::string format_answer(const Fields& fields);
// Final answer text: analysis response fields when present, else composed.
std::string compose_answer(const std::optional<Intent>& intent, const Knowledge& k);

// Delegation documents.
json build_request(const Unit& unit, const Intent* intent, const Knowledge& k);
json nothing_to_do_request();
json results_document(const Knowledge& k);
// Response of a delegated run, from what the callee's transcript holds.
json compose_response(const Knowledge& k);

}  // namespace neuroagent::backend
