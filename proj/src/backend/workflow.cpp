#include "neuroagent/backend/workflow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <regex>
#include <stdexcept>

#include "neuroagent/agent/kernel.hpp"
#include "neuroagent/agent/trace.hpp"
#include "neuroagent/toolbox/atlas.hpp"
#include "neuroagent/toolbox/case.hpp"

namespace neuroagent::backend {

using agent::InterAgentRequest;
using agent::Message;
using agent::ToolInvocation;

// ---------------------------------------------------------------- templates

namespace {

struct TemplateInfo {
    Template t;
    const char* name;
    int tier;
    // Question body. {P} pathology noun, {A} pathology adjective, {C} case,
    // {t} timepoint, {a}/{b} baseline/follow-up, {R} anatomy region.
    const char* body;
};

const std::vector<TemplateInfo>& template_table() {
    static const std::vector<TemplateInfo> kTable{
        {Template::SegPathology, "seg_pathology", 1, "Segment the {P} in case {C} at timepoint {t}."},
        {Template::SegAnatomy, "seg_anatomy", 1,
         "Segment the brain anatomy of case {C} at timepoint {t} into its 32 regions."},
        {Template::LesionCount, "lesion_count", 2, "How many {A} lesions are visible in case {C} at timepoint {t}?"},
        {Template::TotalVolume, "total_volume", 2, "What is the total {A} volume in case {C} at timepoint {t}?"},
        {Template::SubregionVolumes, "subregion_volumes", 2,
         "Measure each tumour sub-region of the {P} in case {C} at timepoint {t}."},
        {Template::LargestLesion, "largest_lesion", 2,
         "Give the size and position of the largest {A} lesion in case {C} at timepoint {t}."},
        {Template::LesionLocations, "lesion_locations", 2,
         "In which lobe does each {A} lesion of case {C} at timepoint {t} lie?"},
        {Template::LesionReport, "lesion_report", 2, "Write a per-lesion {A} report for case {C} at timepoint {t}."},
        {Template::LesionShape, "lesion_shape", 2,
         "Characterise the shape and T1ce intensity of the largest {A} lesion in case {C} at timepoint {t}."},
        {Template::RegionVolume, "region_volume", 2,
         "What is the volume of the {R} region in case {C} at timepoint {t}?"},
        {Template::VolumeChange, "volume_change", 3,
         "How did the total {A} volume of case {C} change from timepoint {a} to timepoint {b}?"},
        {Template::NewLesions, "new_lesions", 3,
         "Compare the {A} lesions of case {C} between timepoint {a} and timepoint {b}."},
        {Template::NewLesionLocations, "new_lesion_locations", 3,
         "Which lobes contain new {A} lesions in case {C} at timepoint {b} compared with timepoint {a}?"},
        {Template::ResponseReport, "response_report", 3,
         "Assess the treatment response of the {P} in case {C} from timepoint {a} to timepoint {b}."},
        {Template::LesionTracking, "lesion_tracking", 3,
         "Track each {A} lesion of case {C} from timepoint {a} to timepoint {b}."},
    };
    return kTable;
}

const TemplateInfo& info(Template t) {
    for (const auto& i : template_table())
        if (i.t == t) return i;
    throw std::logic_error("unhandled template");
}

struct ModelPhrase {
    const char* model;
    const char* noun;
    const char* adjective;
};

const std::vector<ModelPhrase>& model_phrases() {
    static const std::vector<ModelPhrase> kPhrases{
        {"glioma", "glioma", "glioma"},
        {"postop-glioma", "post-operative glioma", "post-operative glioma"},
        {"metastasis", "brain metastases", "metastatic"},
        {"meningioma", "meningioma", "meningioma"},
        {"pediatric", "pediatric glioma", "pediatric glioma"},
    };
    return kPhrases;
}

const ModelPhrase& phrase_of(const std::string& model) {
    for (const auto& p : model_phrases())
        if (model == p.model) return p;
    throw std::invalid_argument("unknown pathology model '" + model + "'");
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
        s.replace(pos, from.size(), to);
    return s;
}

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string region_slug(const std::string& region) { return toolbox::slug(region); }

std::string label_field(const std::string& name) { return toolbox::slug(name) + "_volume_mm3"; }

std::string report_hint(const Intent& in) {
    switch (in.tmpl) {
        case Template::SegPathology: return "segmentation_file";
        case Template::SegAnatomy: return "segmentation_file, volumes_file";
        case Template::LesionCount: return "lesion_count";
        case Template::TotalVolume: return "total_volume_mm3";
        case Template::SubregionVolumes: {
            std::string out;
            for (const auto& [id, name] : toolbox::model_vocabulary(in.model))
                out += (out.empty() ? "" : ", ") + label_field(name);
            return out;
        }
        case Template::LargestLesion:
            return "largest_lesion_volume_mm3, largest_lesion_centroid_mm, largest_lesion_extent_mm";
        case Template::LesionLocations: return "lesion_count and, for each lesion i, lesion_<i>_lobe";
        case Template::LesionReport:
            return "lesion_count and, for each lesion i, lesion_<i>_volume_mm3, lesion_<i>_centroid_mm, "
                   "lesion_<i>_lobe";
        case Template::LesionShape:
            return "largest_lesion_surface_area_mm2, largest_lesion_sphericity, largest_lesion_elongation, "
                   "largest_lesion_mean_intensity";
        case Template::RegionVolume: return region_slug(in.region) + "_volume_mm3";
        case Template::VolumeChange: return "baseline_volume_mm3, followup_volume_mm3, volume_change_percent";
        case Template::NewLesions: return "new_lesion_count, resolved_lesion_count, matched_lesion_count";
        case Template::NewLesionLocations: return "new_lesion_count, new_lesion_lobes";
        case Template::ResponseReport:
            return "baseline_volume_mm3, followup_volume_mm3, volume_change_percent, new_lesion_count, "
                   "resolved_lesion_count";
        case Template::LesionTracking:
            return "for each baseline lesion i, lesion_<i>_status and lesion_<i>_volume_change_percent";
    }
    return {};
}

struct CompiledTemplate {
    Template t;
    std::regex re;
    std::vector<char> slots;  // placeholder letter per capture group
};

const std::vector<CompiledTemplate>& compiled_templates() {
    static const std::vector<CompiledTemplate> kCompiled = [] {
        std::vector<CompiledTemplate> out;
        for (const auto& i : template_table()) {
            const std::string body = i.body;
            std::string pattern = "^";
            std::vector<char> slots;
            for (std::size_t k = 0; k < body.size(); ++k) {
                const char c = body[k];
                if (c == '{' && k + 2 < body.size() && body[k + 2] == '}') {
                    const char slot = body[k + 1];
                    slots.push_back(slot);
                    if (slot == 'C') pattern += "([A-Za-z0-9_-]+)";
                    else if (slot == 't' || slot == 'a' || slot == 'b') pattern += "(t[0-9]+)";
                    else pattern += "(.+?)";
                    k += 2;
                    continue;
                }
                if (std::string("\\^$.|?*+()[]{}").find(c) != std::string::npos) pattern += '\\';
                pattern += c;
            }
            out.push_back({i.t, std::regex(pattern, std::regex::icase), std::move(slots)});
        }
        return out;
    }();
    return kCompiled;
}

}  // namespace

const std::vector<Template>& all_templates() {
    static const std::vector<Template> kAll = [] {
        std::vector<Template> v;
        for (const auto& i : template_table()) v.push_back(i.t);
        return v;
    }();
    return kAll;
}

std::string to_string(Template t) { return info(t).name; }

Template parse_template(const std::string& s) {
    for (const auto& i : template_table())
        if (s == i.name) return i.t;
    throw std::invalid_argument("unknown template '" + s + "'");
}

int template_tier(Template t) { return info(t).tier; }

bool is_longitudinal(Template t) { return template_tier(t) == 3; }

bool uses_pathology(Template t) { return t != Template::SegAnatomy && t != Template::RegionVolume; }

bool has_analysis(Template t) { return t != Template::SegPathology && t != Template::SegAnatomy; }

std::string pathology_phrase(const std::string& model) { return phrase_of(model).noun; }

std::optional<std::string> model_from_keywords(const std::string& text) {
    const std::string s = lower(text);
    static const std::vector<std::pair<const char*, const char*>> kKeywords{
        {"post-operative", "postop-glioma"}, {"postoperative", "postop-glioma"}, {"pediatric", "pediatric"},
        {"metasta", "metastasis"},           {"meningioma", "meningioma"},      {"glioma", "glioma"},
    };
    for (const auto& [kw, model] : kKeywords)
        if (s.find(kw) != std::string::npos) return std::string(model);
    return std::nullopt;
}

std::string render_question(const Intent& in) {
    std::string q = info(in.tmpl).body;
    if (uses_pathology(in.tmpl)) {
        const ModelPhrase& p = phrase_of(in.model);
        q = replace_all(q, "{P}", p.noun);
        q = replace_all(q, "{A}", p.adjective);
    }
    q = replace_all(q, "{C}", in.case_id);
    q = replace_all(q, "{R}", in.region);
    if (is_longitudinal(in.tmpl)) {
        if (in.timepoints.size() < 2) throw std::invalid_argument("longitudinal question needs two timepoints");
        q = replace_all(q, "{a}", in.timepoints[0]);
        q = replace_all(q, "{b}", in.timepoints[1]);
    } else {
        if (in.timepoints.empty()) throw std::invalid_argument("question needs a timepoint");
        q = replace_all(q, "{t}", in.timepoints[0]);
    }
    return q + " Report: " + report_hint(in);
}

std::optional<Intent> parse_question(const std::string& question) {
    // Backends parse the same question on every decision.
    thread_local std::string last_question;
    thread_local std::optional<Intent> last_intent;
    thread_local bool primed = false;
    if (primed && question == last_question) return last_intent;

    std::optional<Intent> result;
    for (const auto& ct : compiled_templates()) {
        std::smatch m;
        if (!std::regex_search(question, m, ct.re)) continue;
        Intent in;
        in.tmpl = ct.t;
        std::string a, b, pathology;
        bool ok = true;
        for (std::size_t g = 0; g < ct.slots.size(); ++g) {
            const std::string v = m[g + 1].str();
            switch (ct.slots[g]) {
                case 'P':
                case 'A': pathology = v; break;
                case 'C': in.case_id = v; break;
                case 't': in.timepoints = {v}; break;
                case 'a': a = v; break;
                case 'b': b = v; break;
                case 'R': in.region = v; break;
                default: ok = false;
            }
        }
        if (!ok) continue;
        if (is_longitudinal(ct.t)) in.timepoints = {a, b};
        if (uses_pathology(ct.t)) {
            auto model = model_from_keywords(pathology);
            if (!model) continue;
            in.model = *model;
        }
        result = in;
        break;
    }
    last_question = question;
    last_intent = result;
    primed = true;
    return result;
}

// ---------------------------------------------------------------- knowledge

json ImageRef::to_json() const {
    return {{"handle", handle},
            {"timepoint", timepoint},
            {"modality", modality},
            {"space", space},
            {"skull_stripped", skull_stripped}};
}

ImageRef ImageRef::from_json(const json& j) {
    ImageRef r;
    r.handle = j.value("handle", "");
    r.timepoint = j.value("timepoint", "");
    r.modality = j.value("modality", "");
    r.space = j.value("space", "");
    r.skull_stripped = j.value("skull_stripped", false);
    return r;
}

const ImageRef* Knowledge::find_image(const std::string& tp, const std::string& modality,
                                      const std::string& state) const {
    for (const auto& r : images) {
        if (r.timepoint != tp || r.modality != modality) continue;
        if (state == "any") return &r;
        if (state == "raw" && r.native() && !r.skull_stripped) return &r;
        if (state == "stripped" && r.native() && r.skull_stripped) return &r;
        if (state == "ready" && !r.native() && r.skull_stripped) return &r;
    }
    return nullptr;
}

void Knowledge::add_image(const ImageRef& ref) {
    if (ref.handle.empty()) return;
    for (const auto& r : images)
        if (r.handle == ref.handle) return;
    images.push_back(ref);
}

std::string call_key(const std::string& tool, const json& args) { return tool + " " + agent::canonical_dump(args); }

namespace {

json parse_or_null(const std::string& s) {
    json j = json::parse(s, nullptr, false);
    return j.is_discarded() ? json() : j;
}

std::string first_handle(const json& result) {
    const json& hs = result.value("handles", json::array());
    return hs.empty() ? std::string() : hs[0].value("id", "");
}

std::string request_key(const json& request) {
    const json params = request.contains("inputs") ? request["inputs"].value("params", json::object()) : json();
    return request.value("task", "") + ":" +
           (params.is_object() ? params.value("timepoint", "") : std::string());
}

void absorb_results(Knowledge& k, const json& results) {
    if (!results.is_object()) return;
    for (const auto& r : results.value("images", json::array())) k.add_image(ImageRef::from_json(r));
    for (const auto& m : results.value("masks", json::array())) k.masks[m.value("timepoint", "")] = m;
    for (const auto& a : results.value("anatomy", json::array())) k.anatomy[a.value("timepoint", "")] = a;
}

void ingest_user(Knowledge& k, const std::string& content) {
    json j = parse_or_null(content);
    if (j.is_object() && j.contains("request")) {
        try {
            k.request = InterAgentRequest::from_json(j["request"]);
        } catch (const std::exception&) {
            return;
        }
        const json& p = k.request->params;
        k.question = p.value("question", "");
        for (const auto& r : p.value("images", json::array())) k.add_image(ImageRef::from_json(r));
        absorb_results(k, p.value("results", json::object()));
        return;
    }
    const std::string marker = std::string("\n\n") + agent::kCaseImagesMarker + "\n";
    const std::size_t pos = content.find(marker);
    if (pos == std::string::npos) {
        k.question = content;
        return;
    }
    k.question = content.substr(0, pos);
    json images = parse_or_null(content.substr(pos + marker.size()));
    if (!images.is_array()) return;
    for (const auto& r : images) {
        if (!r.contains("handle")) continue;
        ImageRef ref = ImageRef::from_json(r);
        if (ref.native()) k.case_raw = true;
        k.add_image(ref);
    }
}

void ingest_tool_result(Knowledge& k, const std::string& tool, const json& args, const json& result) {
    if (result.value("status", "") != "ok") {
        k.failed_calls.insert(call_key(tool, args));
        if (tool == "tool_verify_registration") k.verify_checked.insert(args.value("image", ""));
        return;
    }
    const json& p = result.value("payload", json::object());
    const std::string handle = first_handle(result);
    const std::string tp = p.value("timepoint", "");
    if (tool == "tool_load_image" || tool == "tool_register") {
        k.add_image({handle, tp, p.value("modality", ""), p.value("space", ""), p.value("skull_stripped", false)});
    } else if (tool == "tool_skull_strip") {
        k.add_image({handle, tp, p.value("modality", ""), p.value("space", ""), true});
    } else if (tool == "tool_verify_registration") {
        k.verify_checked.insert(args.value("image", ""));
    } else if (tool == "tool_segment_pathology") {
        json m = p;
        m["handle"] = handle;
        k.masks[tp] = m;
    } else if (tool == "tool_segment_anatomy") {
        json a = p;
        a["handle"] = handle;
        json ids = json::array();
        for (const auto& h : result.value("handles", json::array())) ids.push_back(h.value("id", ""));
        a["handles"] = ids;
        k.anatomy[tp] = a;
    } else if (tool == "tool_list_labels") {
        k.labels[p.value("scope", "")] = p;
    } else if (tool == "tool_enumerate_lesions") {
        k.enumerations[tp] = p;
    } else if (tool == "tool_lesion_geometry") {
        k.geometry[{tp, p.value("id", 0)}] = p;
    } else if (tool == "tool_lesion_features") {
        k.features[{tp, p.value("id", 0)}] = p;
    } else if (tool == "tool_localize") {
        k.localized[{tp, p.value("id", 0)}] = p;
    } else if (tool == "tool_match_lesions") {
        k.matches[{p.value("timepoint_t0", ""), p.value("timepoint_t1", "")}] = p;
    }
}

// The delegation a response or rejection answers: the closest earlier assistant message.
json preceding_request(const std::vector<Message>& messages, std::size_t i) {
    while (i-- > 0) {
        if (messages[i].role != "assistant") continue;
        json a = parse_or_null(messages[i].content);
        if (a.is_object() && a.contains("request")) return a["request"];
        return json();
    }
    return json();
}

}  // namespace

void ingest_range(Knowledge& k, const std::vector<Message>& messages, std::size_t from, std::size_t to) {
    to = std::min(to, messages.size());
    for (std::size_t i = from; i < to; ++i) {
        const Message& msg = messages[i];
        if (msg.role == "user") {
            if (i == 0) ingest_user(k, msg.content);
            continue;
        }
        if (msg.role != "tool") continue;
        const json j = parse_or_null(msg.content);
        if (!j.is_object()) continue;
        if (j.contains("tool")) {
            ingest_tool_result(k, j.value("tool", ""), j.value("args", json::object()),
                               j.value("result", json::object()));
        } else if (j.contains("agent") && j.contains("response")) {
            const json& r = j["response"];
            if (j["agent"] == "preprocessing") ++k.preprocessing_responses;
            if (r.value("status", "") == "done") {
                const json& out = r.value("outputs", json::object());
                absorb_results(k, out);
                if (out.contains("answer") && out["answer"].is_object()) k.answer = out["answer"];
            } else {
                k.failed_units.insert(request_key(preceding_request(messages, i)));
            }
        } else if (j.contains("agent") && j.contains("error")) {
            k.failed_units.insert(request_key(preceding_request(messages, i)));
        }
    }
}

Knowledge ingest(const std::vector<Message>& messages, std::size_t count) {
    Knowledge k;
    ingest_range(k, messages, 0, count);
    return k;
}

const Knowledge& KnowledgeCache::view(const std::vector<Message>& messages) {
    Entry& e = entries_[&messages];
    const bool valid = e.count > 0 && e.count <= messages.size() && messages[0].content == e.first &&
                       messages[e.count - 1].content == e.last;
    if (!valid) e = Entry{};
    if (e.count < messages.size()) {
        ingest_range(e.k, messages, e.count, messages.size());
        e.count = messages.size();
        e.first = messages[0].content;
        e.last = messages.back().content;
    }
    return e.k;
}

// ---------------------------------------------------------------- units

std::string Unit::owner() const {
    switch (kind) {
        case UnitKind::Prep: return "preprocessing";
        case UnitKind::SegPathology:
        case UnitKind::SegAnatomy: return "segmentation";
        case UnitKind::Analysis: return "analysis";
    }
    return {};
}

std::string Unit::task() const {
    switch (kind) {
        case UnitKind::Prep: return "preprocess";
        case UnitKind::SegPathology: return "segment_pathology";
        case UnitKind::SegAnatomy: return "segment_anatomy";
        case UnitKind::Analysis: return "analyze";
    }
    return {};
}

std::string Unit::key() const { return task() + ":" + timepoint; }

std::vector<Unit> plan_units(const Intent& in, bool case_raw) {
    std::vector<Unit> units;
    const bool pathology = uses_pathology(in.tmpl);
    const std::string atlas = pathology ? toolbox::model_atlas(in.model) : std::string();
    for (const auto& tp : in.timepoints) {
        if (pathology) {
            if (case_raw) units.push_back({UnitKind::Prep, tp, "", atlas});
            units.push_back({UnitKind::SegPathology, tp, in.model, atlas});
        } else {
            units.push_back({UnitKind::SegAnatomy, tp, "", ""});
        }
    }
    if (has_analysis(in.tmpl)) units.push_back({UnitKind::Analysis, "", "", ""});
    return units;
}

std::optional<Unit> unit_from_request(const InterAgentRequest& r) {
    const std::string tp = r.params.value("timepoint", "");
    std::string target = r.params.value("target", "");
    if (target.rfind("atlas:", 0) == 0) target = target.substr(6);
    if (r.task == "preprocess") {
        if (tp.empty()) return std::nullopt;
        return Unit{UnitKind::Prep, tp, "", target.empty() ? "SRI24" : target};
    }
    if (r.task == "segment_pathology") {
        const std::string model = r.params.value("model", "");
        if (tp.empty() || !toolbox::is_model_name(model)) return std::nullopt;
        return Unit{UnitKind::SegPathology, tp, model, target.empty() ? toolbox::model_atlas(model) : target};
    }
    if (r.task == "segment_anatomy") {
        if (tp.empty()) return std::nullopt;
        return Unit{UnitKind::SegAnatomy, tp, "", ""};
    }
    if (r.task == "analyze") return Unit{UnitKind::Analysis, "", "", ""};
    return std::nullopt;
}

namespace {

bool all_ready(const Knowledge& k, const std::string& tp) {
    for (const auto& m : toolbox::modality_names())
        if (!k.find_image(tp, m, "ready")) return false;
    return true;
}

std::string mask_handle(const Knowledge& k, const std::string& tp) {
    auto it = k.masks.find(tp);
    return it == k.masks.end() ? std::string() : it->second.value("handle", "");
}

int lesion_count(const Knowledge& k, const std::string& tp) {
    auto it = k.enumerations.find(tp);
    return it == k.enumerations.end() ? -1 : it->second.value("lesion_count", 0);
}

const json* find_match(const Knowledge& k, const std::string& a, const std::string& b) {
    auto it = k.matches.find({a, b});
    return it == k.matches.end() ? nullptr : &it->second;
}

// Analysis calls of a template, in order, as far as their inputs are known.
// Each entry is (call, already done).
std::vector<std::pair<ToolInvocation, bool>> analysis_calls(const Intent& in, const Knowledge& k) {
    std::vector<std::pair<ToolInvocation, bool>> calls;
    const std::string tp = in.timepoints.empty() ? std::string() : in.timepoints[0];
    const std::string tb = in.timepoints.size() > 1 ? in.timepoints[1] : std::string();

    auto enumerate = [&](const std::string& t) {
        const std::string h = mask_handle(k, t);
        if (h.empty()) return;
        calls.push_back({{"tool_enumerate_lesions", {{"mask", h}}}, k.enumerations.count(t) > 0});
    };
    auto per_lesion = [&](const char* tool, const std::string& t, int id,
                          const std::map<std::pair<std::string, int>, json>& done, json extra = json::object()) {
        const std::string h = mask_handle(k, t);
        if (h.empty()) return;
        json args{{"mask", h}, {"lesion_id", id}};
        args.update(extra);
        calls.push_back({{tool, args}, done.count({t, id}) > 0});
    };
    auto match = [&]() {
        const std::string h0 = mask_handle(k, tp), h1 = mask_handle(k, tb);
        if (h0.empty() || h1.empty()) return;
        calls.push_back({{"tool_match_lesions", {{"mask_t0", h0}, {"mask_t1", h1}}}, find_match(k, tp, tb) != nullptr});
    };
    auto labels = [&](const std::string& scope) {
        calls.push_back({{"tool_list_labels", {{"scope", scope}}}, k.labels.count(scope) > 0});
    };

    switch (in.tmpl) {
        case Template::SegPathology:
        case Template::SegAnatomy: break;
        case Template::LesionCount:
        case Template::TotalVolume: enumerate(tp); break;
        case Template::SubregionVolumes: labels(in.model); break;
        case Template::RegionVolume: labels("anatomy"); break;
        case Template::LargestLesion:
            enumerate(tp);
            if (lesion_count(k, tp) >= kLargestLesionId) per_lesion("tool_lesion_geometry", tp, kLargestLesionId, k.geometry);
            break;
        case Template::LesionShape:
            enumerate(tp);
            if (lesion_count(k, tp) >= kLargestLesionId) {
                if (const ImageRef* img = k.find_image(tp, "T1ce", "ready"))
                    per_lesion("tool_lesion_features", tp, kLargestLesionId, k.features, {{"image", img->handle}});
            }
            break;
        case Template::LesionLocations:
        case Template::LesionReport:
            enumerate(tp);
            for (int id = 1; id <= lesion_count(k, tp); ++id) per_lesion("tool_localize", tp, id, k.localized);
            break;
        case Template::VolumeChange:
            enumerate(tp);
            enumerate(tb);
            break;
        case Template::NewLesions: match(); break;
        case Template::NewLesionLocations:
            match();
            if (const json* m = find_match(k, tp, tb))
                for (const auto& n : m->value("new", json::array()))
                    per_lesion("tool_localize", tb, n.value("id", 0), k.localized);
            break;
        case Template::ResponseReport:
        case Template::LesionTracking:
            enumerate(tp);
            enumerate(tb);
            match();
            break;
    }
    return calls;
}

std::optional<ToolInvocation> unless_failed(const Knowledge& k, ToolInvocation call) {
    if (k.failed_calls.count(call_key(call.name, call.args))) return std::nullopt;
    return call;
}

}  // namespace

bool unit_complete(const Unit& u, const Intent* in, const Knowledge& k) {
    switch (u.kind) {
        case UnitKind::Prep: return all_ready(k, u.timepoint);
        case UnitKind::SegPathology: return k.masks.count(u.timepoint) > 0;
        case UnitKind::SegAnatomy: return k.anatomy.count(u.timepoint) > 0;
        case UnitKind::Analysis:
            if (k.answer) return true;
            if (!in) return false;
            for (const auto& [call, done] : analysis_calls(*in, k))
                if (!done) return false;
            return true;
    }
    return false;
}

std::optional<ToolInvocation> next_step(const Unit& u, const Intent* in, const Knowledge& k, bool verify) {
    const auto& mods = toolbox::modality_names();
    switch (u.kind) {
        case UnitKind::Prep: {
            for (const auto& m : mods) {
                if (k.find_image(u.timepoint, m, "ready") || k.find_image(u.timepoint, m, "stripped")) continue;
                const ImageRef* raw = k.find_image(u.timepoint, m, "raw");
                if (!raw) return std::nullopt;
                return unless_failed(k, {"tool_skull_strip", {{"image", raw->handle}}});
            }
            for (const auto& m : mods) {
                if (k.find_image(u.timepoint, m, "ready")) continue;
                const ImageRef* s = k.find_image(u.timepoint, m, "stripped");
                if (!s) return std::nullopt;
                return unless_failed(k, {"tool_register", {{"image", s->handle}, {"target", "atlas:" + u.atlas}}});
            }
            return std::nullopt;
        }
        case UnitKind::SegPathology: {
            if (k.masks.count(u.timepoint)) return std::nullopt;
            if (!all_ready(k, u.timepoint)) return std::nullopt;
            const ImageRef* t1 = k.find_image(u.timepoint, "T1", "ready");
            if (verify && !k.verify_checked.count(t1->handle))
                return unless_failed(k, {"tool_verify_registration",
                                         {{"image", t1->handle}, {"reference", "atlas:" + u.atlas}}});
            return unless_failed(k, {"tool_segment_pathology",
                                     {{"t1", t1->handle},
                                      {"t1ce", k.find_image(u.timepoint, "T1ce", "ready")->handle},
                                      {"t2", k.find_image(u.timepoint, "T2", "ready")->handle},
                                      {"flair", k.find_image(u.timepoint, "FLAIR", "ready")->handle},
                                      {"model", u.model}}});
        }
        case UnitKind::SegAnatomy: {
            if (k.anatomy.count(u.timepoint)) return std::nullopt;
            const ImageRef* t1 = k.find_image(u.timepoint, "T1", "any");
            if (!t1) return std::nullopt;
            return unless_failed(k, {"tool_segment_anatomy", {{"image", t1->handle}}});
        }
        case UnitKind::Analysis: {
            if (!in || k.answer) return std::nullopt;
            for (auto& [call, done] : analysis_calls(*in, k)) {
                if (done || k.failed_calls.count(call_key(call.name, call.args))) continue;
                return call;
            }
            return std::nullopt;
        }
    }
    return std::nullopt;
}

// ---------------------------------------------------------------- answers

namespace {

json get_or_null(const json* doc, const char* key) {
    if (!doc || !doc->is_object() || !doc->contains(key)) return json();
    return (*doc)[key];
}

const json* find_tp(const std::map<std::string, json>& m, const std::string& tp) {
    auto it = m.find(tp);
    return it == m.end() ? nullptr : &it->second;
}

const json* find_lesion(const std::map<std::pair<std::string, int>, json>& m, const std::string& tp, int id) {
    auto it = m.find({tp, id});
    return it == m.end() ? nullptr : &it->second;
}

json percent_change(const json& before, const json& after) {
    if (!before.is_number() || !after.is_number()) return json();
    const double b = before.get<double>(), a = after.get<double>();
    if (b <= 0.0) return json();
    return (a - b) / b * 100.0;
}

json lesion_entry(const json* enumeration, int id, const char* key) {
    if (!enumeration) return json();
    for (const auto& l : enumeration->value("lesions", json::array()))
        if (l.value("id", 0) == id) return l.contains(key) ? l[key] : json();
    return json();
}

json label_id(const json* labels, const std::string& name) {
    if (!labels) return json();
    for (const auto& l : labels->value("labels", json::array()))
        if (lower(l.value("name", "")) == lower(name)) return l["id"];
    return json();
}

json volume_by_id(const json* doc, const char* list, const json& id) {
    if (!doc || id.is_null()) return json();
    for (const auto& v : doc->value(list, json::array()))
        if (v.value("id", -1) == id.get<int>()) return v["volume_mm3"];
    return json();
}

}  // namespace

Fields compose_fields(const Intent& in, const Knowledge& k) {
    Fields f;
    const std::string tp = in.timepoints.empty() ? std::string() : in.timepoints[0];
    const std::string tb = in.timepoints.size() > 1 ? in.timepoints[1] : std::string();
    const json* mask = find_tp(k.masks, tp);
    const json* en = find_tp(k.enumerations, tp);
    const json* en_b = find_tp(k.enumerations, tb);
    const json* match = find_match(k, tp, tb);

    auto match_count = [&](const char* list) -> json {
        if (!match) return json();
        return match->value(list, json::array()).size();
    };
    auto lesion_fields = [&](auto&& per_lesion) {
        json count = get_or_null(en, "lesion_count");
        f.push_back({"lesion_count", count});
        if (count.is_number_integer())
            for (int id = 1; id <= count.get<int>(); ++id) per_lesion(id, "lesion_" + std::to_string(id) + "_");
    };
    auto lobe_of = [&](const std::string& t, int id) { return get_or_null(find_lesion(k.localized, t, id), "lobe"); };

    switch (in.tmpl) {
        case Template::SegPathology: f.push_back({"segmentation_file", get_or_null(mask, "segmentation_file")}); break;
        case Template::SegAnatomy: {
            const json* a = find_tp(k.anatomy, tp);
            f.push_back({"segmentation_file", get_or_null(a, "segmentation_file")});
            f.push_back({"volumes_file", get_or_null(a, "volumes_file")});
            break;
        }
        case Template::LesionCount: f.push_back({"lesion_count", get_or_null(en, "lesion_count")}); break;
        case Template::TotalVolume: f.push_back({"total_volume_mm3", get_or_null(en, "total_volume_mm3")}); break;
        case Template::SubregionVolumes: {
            const json* labels = find_tp(k.labels, in.model);
            for (const auto& [id, name] : toolbox::model_vocabulary(in.model))
                f.push_back({label_field(name), volume_by_id(mask, "label_volumes_mm3", label_id(labels, name))});
            break;
        }
        case Template::LargestLesion: {
            const json* g = find_lesion(k.geometry, tp, kLargestLesionId);
            f.push_back({"largest_lesion_volume_mm3", get_or_null(g, "volume_mm3")});
            f.push_back({"largest_lesion_centroid_mm", get_or_null(g, "centroid_mm")});
            f.push_back({"largest_lesion_extent_mm", get_or_null(g, "extent_mm")});
            break;
        }
        case Template::LesionLocations:
            lesion_fields([&](int id, const std::string& p) { f.push_back({p + "lobe", lobe_of(tp, id)}); });
            break;
        case Template::LesionReport:
            lesion_fields([&](int id, const std::string& p) {
                f.push_back({p + "volume_mm3", lesion_entry(en, id, "volume_mm3")});
                f.push_back({p + "centroid_mm", lesion_entry(en, id, "centroid_mm")});
                f.push_back({p + "lobe", lobe_of(tp, id)});
            });
            break;
        case Template::LesionShape: {
            const json* s = find_lesion(k.features, tp, kLargestLesionId);
            for (const char* key : {"surface_area_mm2", "sphericity", "elongation", "mean_intensity"})
                f.push_back({std::string("largest_lesion_") + key, get_or_null(s, key)});
            break;
        }
        case Template::RegionVolume: {
            const json id = label_id(find_tp(k.labels, "anatomy"), in.region);
            f.push_back({region_slug(in.region) + "_volume_mm3", volume_by_id(find_tp(k.anatomy, tp), "volumes_mm3", id)});
            break;
        }
        case Template::VolumeChange:
        case Template::ResponseReport: {
            const json v0 = get_or_null(en, "total_volume_mm3"), v1 = get_or_null(en_b, "total_volume_mm3");
            f.push_back({"baseline_volume_mm3", v0});
            f.push_back({"followup_volume_mm3", v1});
            f.push_back({"volume_change_percent", percent_change(v0, v1)});
            if (in.tmpl == Template::ResponseReport) {
                f.push_back({"new_lesion_count", match_count("new")});
                f.push_back({"resolved_lesion_count", match_count("resolved")});
            }
            break;
        }
        case Template::NewLesions:
            f.push_back({"new_lesion_count", match_count("new")});
            f.push_back({"resolved_lesion_count", match_count("resolved")});
            f.push_back({"matched_lesion_count", match_count("pairs")});
            break;
        case Template::NewLesionLocations: {
            f.push_back({"new_lesion_count", match_count("new")});
            json lobes;
            if (match) {
                lobes = json::array();
                for (const auto& n : match->value("new", json::array())) {
                    json lobe = lobe_of(tb, n.value("id", 0));
                    if (lobe.is_null()) {
                        lobes = json();
                        break;
                    }
                    lobes.push_back(lobe);
                }
            }
            f.push_back({"new_lesion_lobes", lobes});
            break;
        }
        case Template::LesionTracking: {
            if (!match) break;
            const int n0 = match->value("lesion_count_t0", 0);
            for (int id = 1; id <= n0; ++id) {
                const std::string p = "lesion_" + std::to_string(id) + "_";
                json status = "resolved", change = -100.0;
                for (const auto& pair : match->value("pairs", json::array())) {
                    if (pair.value("id_t0", 0) != id) continue;
                    status = "matched";
                    change = percent_change(pair["volume_t0_mm3"], pair["volume_t1_mm3"]);
                }
                f.push_back({p + "status", status});
                f.push_back({p + "volume_change_percent", change});
            }
            break;
        }
    }
    return f;
}

std::string format_value(const json& v) {
    if (v.is_null()) return "cannot find";
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
    if (v.is_number()) {
        double d = std::round(v.get<double>() * 1000.0) / 1000.0;
        if (d == 0.0) d = 0.0;  // no "-0"
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.3f", d);
        std::string s = buf;
        while (s.back() == '0') s.pop_back();
        if (s.back() == '.') s.pop_back();
        return s;
    }
    if (v.is_array()) {
        if (v.empty()) return "none";
        if (v[0].is_number()) {
            std::string s = "(";
            for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_value(v[i]);
            return s + ")";
        }
        std::vector<std::string> items;
        for (const auto& e : v) items.push_back(format_value(e));
        std::sort(items.begin(), items.end());
        items.erase(std::unique(items.begin(), items.end()), items.end());
        std::string s;
        for (const auto& i : items) s += (s.empty() ? "" : ", ") + i;
        return s;
    }
    return v.dump();
}

std::string format_answer(const Fields& fields) {
    std::string out;
    for (const auto& [name, value] : fields) out += name + ": " + format_value(value) + "\n";
    return out;
}

std::string compose_answer(const std::optional<Intent>& intent, const Knowledge& k) {
    if (k.answer) {
        Fields f;
        for (auto it = k.answer->begin(); it != k.answer->end(); ++it) f.push_back({it.key(), it.value()});
        return format_answer(f);
    }
    if (!intent) return "I could not interpret the question.";
    return format_answer(compose_fields(*intent, k));
}

// ---------------------------------------------------------------- delegation

json results_document(const Knowledge& k) {
    json images = json::array(), masks = json::array(), anatomy = json::array();
    for (const auto& r : k.images) images.push_back(r.to_json());
    for (const auto& [tp, m] : k.masks) masks.push_back(m);
    for (const auto& [tp, a] : k.anatomy) anatomy.push_back(a);
    return {{"images", images}, {"masks", masks}, {"anatomy", anatomy}};
}

json nothing_to_do_request() {
    InterAgentRequest r;
    r.task = "preprocess";
    return r.to_json();
}

json build_request(const Unit& u, const Intent* in, const Knowledge& k) {
    InterAgentRequest r;
    r.task = u.task();
    json images = json::array();
    auto add = [&](const ImageRef* ref) {
        if (!ref) return;
        r.handles.push_back(ref->handle);
        images.push_back(ref->to_json());
    };
    switch (u.kind) {
        case UnitKind::Prep:
            for (const auto& m : toolbox::modality_names()) add(k.find_image(u.timepoint, m, "raw"));
            r.params = {{"timepoint", u.timepoint}, {"target", "atlas:" + u.atlas}, {"images", images}};
            r.expected_outputs = {"images"};
            break;
        case UnitKind::SegPathology:
            for (const auto& m : toolbox::modality_names()) add(k.find_image(u.timepoint, m, "ready"));
            r.params = {{"timepoint", u.timepoint},
                        {"model", u.model},
                        {"target", "atlas:" + u.atlas},
                        {"images", images}};
            r.expected_outputs = {"masks"};
            break;
        case UnitKind::SegAnatomy:
            add(k.find_image(u.timepoint, "T1", "any"));
            r.params = {{"timepoint", u.timepoint}, {"images", images}};
            r.expected_outputs = {"anatomy"};
            break;
        case UnitKind::Analysis:
            for (const auto& [tp, m] : k.masks) r.handles.push_back(m.value("handle", ""));
            for (const auto& [tp, a] : k.anatomy) r.handles.push_back(a.value("handle", ""));
            r.params = {{"question", in ? render_question(*in) : k.question}, {"results", results_document(k)}};
            r.expected_outputs = {"answer"};
            break;
    }
    return r.to_json();
}

json compose_response(const Knowledge& k) {
    using agent::InterAgentResponse;
    if (!k.request) return InterAgentResponse::failed("no request").to_json();
    const InterAgentRequest& req = *k.request;
    if (req.task == "preprocess" && req.handles.empty()) {
        InterAgentResponse r;
        r.summary = "nothing to do";
        return r.to_json();
    }
    const std::optional<Unit> u = unit_from_request(req);
    if (!u) return InterAgentResponse::failed("unsupported task '" + req.task + "'").to_json();
    InterAgentResponse r;
    switch (u->kind) {
        case UnitKind::Prep: {
            if (!all_ready(k, u->timepoint))
                return InterAgentResponse::failed("could not preprocess " + u->timepoint).to_json();
            json images = json::array(), handles = json::array();
            for (const auto& m : toolbox::modality_names()) {
                const ImageRef* ref = k.find_image(u->timepoint, m, "ready");
                images.push_back(ref->to_json());
                handles.push_back(ref->handle);
            }
            r.outputs = {{"images", images}, {"handles", handles}};
            r.summary = "preprocessed " + std::to_string(images.size()) + " images of " + u->timepoint;
            break;
        }
        case UnitKind::SegPathology: {
            const json* m = find_tp(k.masks, u->timepoint);
            if (!m) return InterAgentResponse::failed("could not segment " + u->timepoint).to_json();
            r.outputs = {{"masks", json::array({*m})}};
            r.summary = "segmented " + u->timepoint + " with " + m->value("model", u->model);
            break;
        }
        case UnitKind::SegAnatomy: {
            const json* a = find_tp(k.anatomy, u->timepoint);
            if (!a) return InterAgentResponse::failed("could not segment anatomy of " + u->timepoint).to_json();
            r.outputs = {{"anatomy", json::array({*a})}};
            r.summary = "segmented anatomy of " + u->timepoint;
            break;
        }
        case UnitKind::Analysis: {
            const std::optional<Intent> intent = parse_question(k.question);
            if (!intent) return InterAgentResponse::failed("unrecognised question").to_json();
            json answer = json::object();
            int known = 0;
            const Fields fields = compose_fields(*intent, k);
            for (const auto& [name, value] : fields) {
                answer[name] = value;
                known += value.is_null() ? 0 : 1;
            }
            r.outputs = {{"answer", answer}};
            r.summary = "answered " + std::to_string(known) + " of " + std::to_string(fields.size()) + " fields";
            break;
        }
    }
    return r.to_json();
}

}  // namespace neuroagent::backend
