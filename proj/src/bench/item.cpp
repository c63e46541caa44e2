#include "neuroagent/bench/item.hpp"

#include <algorithm>
#include <cmath>

#include "neuroagent/agent/protocol.hpp"
#include "neuroagent/agent/trace.hpp"
#include "neuroagent/toolbox/atlas.hpp"

namespace neuroagent::bench {

using agent::EventKind;
using agent::Topology;
using backend::PlanStep;

std::string to_string(Comparison c) {
    switch (c) {
        case Comparison::ExactString: return "exact";
        case Comparison::Numeric: return "numeric";
        case Comparison::Vector: return "vector";
        case Comparison::StringSet: return "set";
    }
    return "exact";
}

Comparison parse_comparison(const std::string& s) {
    for (Comparison c : {Comparison::ExactString, Comparison::Numeric, Comparison::Vector, Comparison::StringSet})
        if (to_string(c) == s) return c;
    throw std::invalid_argument("unknown comparison '" + s + "'");
}

json ExpectedField::to_json() const {
    return {{"name", name},
            {"value", value},
            {"comparison", to_string(comparison)},
            {"rel_tol", rel_tol},
            {"abs_tol", abs_tol},
            {"aliases", aliases}};
}

ExpectedField ExpectedField::from_json(const json& j) {
    if (!j.is_object()) throw std::invalid_argument("expected_answer: fields must be objects");
    ExpectedField f;
    if (!j.contains("name") || !j["name"].is_string()) throw std::invalid_argument("expected_answer.name");
    if (!j.contains("value")) throw std::invalid_argument("expected_answer.value");
    f.name = j["name"].get<std::string>();
    f.value = j["value"];
    try {
        f.comparison = parse_comparison(j.value("comparison", "exact"));
        f.rel_tol = j.value("rel_tol", 0.0);
        f.abs_tol = j.value("abs_tol", 0.0);
        f.aliases = j.value("aliases", std::vector<std::string>{});
    } catch (const std::exception& e) {
        throw std::invalid_argument(std::string("expected_answer: ") + e.what());
    }
    return f;
}

Intent BenchmarkItem::intent() const {
    auto parsed = backend::parse_question(question);
    if (parsed) return *parsed;
    Intent in;
    in.tmpl = tmpl;
    in.case_id = case_id;
    in.timepoints = timepoints;
    return in;
}

std::vector<std::string> default_aliases(const std::string& field) {
    auto spaced = [](std::string s) {
        std::replace(s.begin(), s.end(), '_', ' ');
        return s;
    };
    std::vector<std::string> out{spaced(field)};
    for (const char* unit : {"_mm3", "_mm2", "_mm", "_percent"}) {
        const std::string u = unit;
        if (field.size() > u.size() && field.compare(field.size() - u.size(), u.size(), u) == 0) {
            out.push_back(spaced(field.substr(0, field.size() - u.size())));
            break;
        }
    }
    return out;
}

namespace {

double tidy(double v) { return std::round(v * 1e6) / 1e6 + 0.0; }

json vec(const Vec3& v) { return json::array({tidy(v[0]), tidy(v[1]), tidy(v[2])}); }

ExpectedField exact(const std::string& name, json value) {
    return {name, std::move(value), Comparison::ExactString, 0.0, 0.0, default_aliases(name)};
}
ExpectedField count(const std::string& name, std::size_t n) {
    return {name, n, Comparison::Numeric, 0.0, 0.0, default_aliases(name)};
}
ExpectedField volume(const std::string& name, double v) {
    return {name, tidy(v), Comparison::Numeric, kVolumeRelTol, kZeroAbsTol, default_aliases(name)};
}
ExpectedField shape(const std::string& name, double v) {
    return {name, tidy(v), Comparison::Numeric, kShapeRelTol, kZeroAbsTol, default_aliases(name)};
}
ExpectedField position(const std::string& name, const Vec3& v) {
    return {name, vec(v), Comparison::Vector, 0.0, kCentroidAbsTol, default_aliases(name)};
}
// A percent change of volumes that are each good to kVolumeRelTol is good to
// about 2 * kVolumeRelTol * max(v0, v1) / v0 * 100 percentage points.
ExpectedField change(const std::string& name, double v0, double v1) {
    const double pct = (v1 - v0) / v0 * 100.0;
    const double tol = 2.0 * kVolumeRelTol * std::max(v0, v1) / v0 * 100.0;
    return {name, tidy(pct), Comparison::Numeric, 0.0, tidy(tol), default_aliases(name)};
}
ExpectedField string_set(const std::string& name, std::vector<std::string> items) {
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
    return {name, items, Comparison::StringSet, 0.0, 0.0, default_aliases(name)};
}

std::string label_field(const std::string& label_name) { return toolbox::slug(label_name) + "_volume_mm3"; }

int region_id(const std::string& name) {
    for (const auto& [id, n] : toolbox::anatomy_vocabulary())
        if (n == name) return id;
    return 0;
}

void check_fit(const Intent& in, const PhantomSpec& spec, const Oracle* oracle) {
    auto fail = [&](const std::string& why) {
        throw TemplateError(backend::to_string(in.tmpl) + " does not fit case " + spec.case_id + ": " + why);
    };
    if (in.case_id != spec.case_id) fail("question names case " + in.case_id);
    const bool longitudinal = backend::is_longitudinal(in.tmpl);
    if (in.timepoints.size() != (longitudinal ? 2u : 1u)) fail("wrong number of timepoints");
    int prev = -1;
    for (const auto& tp : in.timepoints) {
        int t = -1;
        for (int k = 0; k < spec.timepoints; ++k)
            if (PhantomSpec::timepoint_id(k) == tp) t = k;
        if (t < 0) fail("no timepoint " + tp);
        if (t <= prev) fail("timepoints must be in acquisition order");
        prev = t;
    }
    if (backend::uses_pathology(in.tmpl)) {
        if (in.model != spec.pathology) fail("model " + in.model + " on a " + spec.pathology + " case");
    } else if (!in.model.empty()) {
        fail("anatomy templates take no model");
    }
    if (in.tmpl == Template::RegionVolume) {
        if (!region_id(in.region)) fail("unknown region '" + in.region + "'");
    } else if (!in.region.empty()) {
        fail("only region_volume takes a region");
    }
    if (!oracle) return;
    const std::string& a = in.timepoints[0];
    const std::size_t n0 = oracle->lesions(a).size();
    switch (in.tmpl) {
        case Template::LargestLesion:
        case Template::LesionShape:
            if (n0 < 1) fail("no lesion at " + a);
            break;
        case Template::LesionLocations:
        case Template::LesionReport:
            if (n0 > static_cast<std::size_t>(backend::kMaxReportedLesions)) fail("too many lesions to report");
            break;
        case Template::VolumeChange:
        case Template::ResponseReport:
            if (oracle->total_volume_mm3(a) <= 0.0) fail("empty baseline");
            break;
        case Template::LesionTracking:
            if (n0 < 1) fail("no baseline lesion");
            if (n0 > static_cast<std::size_t>(backend::kMaxReportedLesions)) fail("too many lesions to report");
            break;
        default: break;
    }
}

}  // namespace

std::vector<ExpectedField> expected_answer(const Intent& in, const Oracle& oracle) {
    const PhantomSpec& spec = oracle.spec();
    check_fit(in, spec, &oracle);
    std::vector<ExpectedField> f;
    const std::string a = in.timepoints[0];
    const std::string b = in.timepoints.size() > 1 ? in.timepoints[1] : std::string();
    auto lesion = [&](const std::string& tp, std::size_t id) -> const OracleLesion& {
        return oracle.lesions(tp)[id - 1];
    };

    switch (in.tmpl) {
        case Template::SegPathology:
            f.push_back(exact("segmentation_file", pathology_output_file(spec.case_id, a, in.model)));
            break;
        case Template::SegAnatomy:
            f.push_back(exact("segmentation_file", anatomy_output_file(spec.case_id, a)));
            f.push_back(exact("volumes_file", anatomy_volumes_file(spec.case_id, a)));
            break;
        case Template::LesionCount: f.push_back(count("lesion_count", oracle.lesions(a).size())); break;
        case Template::TotalVolume: f.push_back(volume("total_volume_mm3", oracle.total_volume_mm3(a))); break;
        case Template::SubregionVolumes:
            for (const auto& [id, name] : toolbox::model_vocabulary(in.model))
                f.push_back(volume(label_field(name), oracle.label_volume_mm3(a, id)));
            break;
        case Template::LargestLesion: {
            const OracleLesion& l = lesion(a, backend::kLargestLesionId);
            f.push_back(volume("largest_lesion_volume_mm3", l.volume_mm3));
            f.push_back(position("largest_lesion_centroid_mm", l.centroid_mm));
            f.push_back(position("largest_lesion_extent_mm", l.extent_mm));
            break;
        }
        case Template::LesionLocations:
        case Template::LesionReport: {
            const auto& ls = oracle.lesions(a);
            f.push_back(count("lesion_count", ls.size()));
            for (std::size_t id = 1; id <= ls.size(); ++id) {
                const std::string p = "lesion_" + std::to_string(id) + "_";
                if (in.tmpl == Template::LesionReport) {
                    f.push_back(volume(p + "volume_mm3", ls[id - 1].volume_mm3));
                    f.push_back(position(p + "centroid_mm", ls[id - 1].centroid_mm));
                }
                f.push_back(exact(p + "lobe", ls[id - 1].lobe));
            }
            break;
        }
        case Template::LesionShape: {
            const OracleShape s = oracle.shape(a, backend::kLargestLesionId);
            f.push_back(shape("largest_lesion_surface_area_mm2", s.surface_area_mm2));
            f.push_back(shape("largest_lesion_sphericity", s.sphericity));
            f.push_back(shape("largest_lesion_elongation", s.elongation));
            f.push_back(shape("largest_lesion_mean_intensity", s.mean_intensity));
            break;
        }
        case Template::RegionVolume:
            f.push_back(volume(toolbox::slug(in.region) + "_volume_mm3", oracle.region_volume_mm3(region_id(in.region))));
            break;
        case Template::VolumeChange:
        case Template::ResponseReport: {
            const double v0 = oracle.total_volume_mm3(a), v1 = oracle.total_volume_mm3(b);
            f.push_back(volume("baseline_volume_mm3", v0));
            f.push_back(volume("followup_volume_mm3", v1));
            f.push_back(change("volume_change_percent", v0, v1));
            if (in.tmpl == Template::ResponseReport) {
                const OracleMatch m = oracle.match(a, b);
                f.push_back(count("new_lesion_count", m.new_ids.size()));
                f.push_back(count("resolved_lesion_count", m.resolved_ids.size()));
            }
            break;
        }
        case Template::NewLesions: {
            const OracleMatch m = oracle.match(a, b);
            f.push_back(count("new_lesion_count", m.new_ids.size()));
            f.push_back(count("resolved_lesion_count", m.resolved_ids.size()));
            f.push_back(count("matched_lesion_count", m.pairs.size()));
            break;
        }
        case Template::NewLesionLocations: {
            const OracleMatch m = oracle.match(a, b);
            std::vector<std::string> lobes;
            for (int id : m.new_ids) lobes.push_back(lesion(b, static_cast<std::size_t>(id)).lobe);
            f.push_back(count("new_lesion_count", m.new_ids.size()));
            f.push_back(string_set("new_lesion_lobes", lobes));
            break;
        }
        case Template::LesionTracking: {
            const OracleMatch m = oracle.match(a, b);
            const auto& ls = oracle.lesions(a);
            for (std::size_t id = 1; id <= ls.size(); ++id) {
                const std::string p = "lesion_" + std::to_string(id) + "_";
                const OracleMatch::Pair* pair = nullptr;
                for (const auto& q : m.pairs)
                    if (q.id_t0 == static_cast<int>(id)) pair = &q;
                if (pair) {
                    f.push_back(exact(p + "status", "matched"));
                    f.push_back(change(p + "volume_change_percent", ls[id - 1].volume_mm3,
                                       lesion(b, static_cast<std::size_t>(pair->id_t1)).volume_mm3));
                } else {
                    f.push_back(exact(p + "status", "resolved"));
                    ExpectedField gone = change(p + "volume_change_percent", 1.0, 0.0);
                    gone.abs_tol = 1e-3;
                    f.push_back(gone);
                }
            }
            break;
        }
    }
    return f;
}

// ---------------------------------------------------------------- plans

namespace {

struct Image {
    std::string handle, tp, modality, space;
    bool stripped = false;
    json ref() const {
        return {{"handle", handle}, {"timepoint", tp}, {"modality", modality}, {"space", space},
                {"skull_stripped", stripped}};
    }
};

// Simulated episode state: the handle counter and what each handle holds.
class Episode {
public:
    Episode(const Intent& in, const PhantomSpec& spec, const Oracle* oracle, Topology topology)
        : in_(in), spec_(spec), oracle_(oracle), topology_(topology) {
        // Preloaded scans, all timepoints, fixed modality order.
        for (int t = 0; t < spec.timepoints; ++t)
            for (const auto& m : toolbox::modality_names()) {
                const std::string tp = PhantomSpec::timepoint_id(t);
                Image img{fresh(), tp, m, spec.preprocessed ? spec.atlas() : "native", spec.preprocessed};
                (spec.preprocessed ? ready_ : raw_)[tp].push_back(img);
                any_[tp].push_back(img);
            }
    }

    Plan run() {
        const auto units = backend::plan_units(in_, !spec_.preprocessed);
        const std::string entry = agent::entry_agent(topology_).name;
        if (topology_ == Topology::Orchestrator) {
            const bool any_prep = std::any_of(units.begin(), units.end(),
                                              [](const auto& u) { return u.kind == backend::UnitKind::Prep; });
            if (!any_prep) {
                request(entry, "preprocessing", backend::nothing_to_do_request());
                response("preprocessing");
            }
        }
        for (const auto& u : units) {
            const std::string owner = u.owner();
            const bool direct = topology_ == Topology::Single || owner == entry;
            if (direct) {
                steps(u, entry);
            } else if (topology_ == Topology::Handoffs) {
                handoff(entry, owner);
                steps(u, owner);
                handoff(owner, entry);
            } else {
                request(entry, owner, request_doc(u));
                steps(u, owner);
                response(owner);
            }
        }
        PlanStep final;
        final.kind = EventKind::FinalAnswer;
        final.agent = entry;
        plan_.push_back(final);
        return plan_;
    }

private:
    std::string fresh() { return "obj_" + std::to_string(++handles_); }

    void tool(const std::string& agent_name, const std::string& name, const json& args) {
        PlanStep s;
        s.kind = EventKind::ToolCall;
        s.agent = agent_name;
        s.name = name;
        s.args = agent::canonicalize(args);
        s.key_args = backend::tool_key_args(name);
        plan_.push_back(std::move(s));
    }
    void handoff(const std::string& from, const std::string& to) {
        PlanStep s;
        s.kind = EventKind::Handoff;
        s.agent = from;
        s.name = to;
        plan_.push_back(std::move(s));
    }
    void request(const std::string& from, const std::string& to, const json& doc) {
        PlanStep s;
        s.kind = EventKind::SubagentRequest;
        s.agent = from;
        s.name = to;
        s.args = agent::canonicalize(doc);
        s.key_args = {"task"};
        plan_.push_back(std::move(s));
    }
    void response(const std::string& callee) {
        PlanStep s;
        s.kind = EventKind::SubagentResponse;
        s.agent = callee;
        s.name = callee;
        plan_.push_back(std::move(s));
    }

    const Image& find(const std::map<std::string, std::vector<Image>>& m, const std::string& tp,
                      const std::string& modality) const {
        for (const auto& img : m.at(tp))
            if (img.modality == modality) return img;
        throw std::logic_error("plan simulation lost image " + tp + "/" + modality);
    }

    json request_doc(const backend::Unit& u) const {
        agent::InterAgentRequest r;
        r.task = u.task();
        json images = json::array();
        switch (u.kind) {
            case backend::UnitKind::Prep:
                for (const auto& m : toolbox::modality_names()) {
                    const Image& img = find(raw_, u.timepoint, m);
                    r.handles.push_back(img.handle);
                    images.push_back(img.ref());
                }
                r.params = {{"timepoint", u.timepoint}, {"target", "atlas:" + u.atlas}, {"images", images}};
                r.expected_outputs = {"images"};
                break;
            case backend::UnitKind::SegPathology:
                for (const auto& m : toolbox::modality_names()) {
                    const Image& img = find(ready_, u.timepoint, m);
                    r.handles.push_back(img.handle);
                    images.push_back(img.ref());
                }
                r.params = {{"timepoint", u.timepoint},
                            {"model", u.model},
                            {"target", "atlas:" + u.atlas},
                            {"images", images}};
                r.expected_outputs = {"masks"};
                break;
            case backend::UnitKind::SegAnatomy: {
                const Image& t1 = find(any_, u.timepoint, "T1");
                r.handles.push_back(t1.handle);
                r.params = {{"timepoint", u.timepoint}, {"images", json::array({t1.ref()})}};
                r.expected_outputs = {"anatomy"};
                break;
            }
            case backend::UnitKind::Analysis:
                for (const auto& [tp, h] : masks_) r.handles.push_back(h);
                for (const auto& [tp, h] : anatomy_) r.handles.push_back(h);
                // Results are attached by whoever sends the request, from its own transcript.
                r.params = {{"question", backend::render_question(in_)},
                            {"results", {{"images", json::array()}, {"masks", json::array()}, {"anatomy", json::array()}}}};
                r.expected_outputs = {"answer"};
                break;
        }
        return r.to_json();
    }

    void steps(const backend::Unit& u, const std::string& who) {
        const bool verify = topology_ != Topology::Single;
        switch (u.kind) {
            case backend::UnitKind::Prep: {
                std::vector<Image> stripped;
                for (const auto& m : toolbox::modality_names()) {
                    const Image& raw = find(raw_, u.timepoint, m);
                    tool(who, "tool_skull_strip", {{"image", raw.handle}});
                    stripped.push_back({fresh(), u.timepoint, m, "native", true});
                }
                for (const auto& s : stripped) {
                    tool(who, "tool_register", {{"image", s.handle}, {"target", "atlas:" + u.atlas}});
                    ready_[u.timepoint].push_back({fresh(), u.timepoint, s.modality, u.atlas, true});
                }
                break;
            }
            case backend::UnitKind::SegPathology: {
                const Image& t1 = find(ready_, u.timepoint, "T1");
                if (verify)
                    tool(who, "tool_verify_registration", {{"image", t1.handle}, {"reference", "atlas:" + u.atlas}});
                tool(who, "tool_segment_pathology",
                     {{"t1", t1.handle},
                      {"t1ce", find(ready_, u.timepoint, "T1ce").handle},
                      {"t2", find(ready_, u.timepoint, "T2").handle},
                      {"flair", find(ready_, u.timepoint, "FLAIR").handle},
                      {"model", u.model}});
                masks_[u.timepoint] = fresh();
                break;
            }
            case backend::UnitKind::SegAnatomy:
                tool(who, "tool_segment_anatomy", {{"image", find(any_, u.timepoint, "T1").handle}});
                anatomy_[u.timepoint] = fresh();
                fresh();  // volume table report
                break;
            case backend::UnitKind::Analysis: analysis(who); break;
        }
    }

    std::size_t lesion_count(const std::string& tp) const { return oracle_ ? oracle_->lesions(tp).size() : 0; }

    void analysis(const std::string& who) {
        const std::string a = in_.timepoints[0];
        const std::string b = in_.timepoints.size() > 1 ? in_.timepoints[1] : std::string();
        auto enumerate = [&](const std::string& tp) { tool(who, "tool_enumerate_lesions", {{"mask", masks_.at(tp)}}); };
        auto localize = [&](const std::string& tp, std::size_t id) {
            tool(who, "tool_localize", {{"mask", masks_.at(tp)}, {"lesion_id", id}});
        };
        auto match = [&] { tool(who, "tool_match_lesions", {{"mask_t0", masks_.at(a)}, {"mask_t1", masks_.at(b)}}); };
        switch (in_.tmpl) {
            case Template::SegPathology:
            case Template::SegAnatomy: break;
            case Template::LesionCount:
            case Template::TotalVolume: enumerate(a); break;
            case Template::SubregionVolumes: tool(who, "tool_list_labels", {{"scope", in_.model}}); break;
            case Template::RegionVolume: tool(who, "tool_list_labels", {{"scope", "anatomy"}}); break;
            case Template::LargestLesion:
                enumerate(a);
                tool(who, "tool_lesion_geometry", {{"mask", masks_.at(a)}, {"lesion_id", backend::kLargestLesionId}});
                break;
            case Template::LesionShape:
                enumerate(a);
                tool(who, "tool_lesion_features",
                     {{"mask", masks_.at(a)},
                      {"image", find(ready_, a, "T1ce").handle},
                      {"lesion_id", backend::kLargestLesionId}});
                break;
            case Template::LesionLocations:
            case Template::LesionReport:
                enumerate(a);
                for (std::size_t id = 1; id <= lesion_count(a); ++id) localize(a, id);
                break;
            case Template::VolumeChange:
                enumerate(a);
                enumerate(b);
                break;
            case Template::NewLesions: match(); break;
            case Template::NewLesionLocations:
                match();
                if (oracle_)
                    for (int id : oracle_->match(a, b).new_ids) localize(b, static_cast<std::size_t>(id));
                break;
            case Template::ResponseReport:
            case Template::LesionTracking:
                enumerate(a);
                enumerate(b);
                match();
                break;
        }
    }

    const Intent& in_;
    const PhantomSpec& spec_;
    const Oracle* oracle_;
    Topology topology_;
    int handles_ = 0;
    Plan plan_;
    std::map<std::string, std::vector<Image>> raw_, ready_, any_;
    std::map<std::string, std::string> masks_, anatomy_;
};

}  // namespace

std::map<Topology, Plan> expected_plans(const Intent& intent, const PhantomSpec& spec,
                                        const std::vector<Topology>& topologies) {
    check_fit(intent, spec, nullptr);
    std::optional<Oracle> oracle;
    // Lesion-dependent steps (per-lesion localisation) need the measured case.
    if (intent.tmpl == Template::LesionLocations || intent.tmpl == Template::LesionReport ||
        intent.tmpl == Template::NewLesionLocations)
        oracle.emplace(spec, build_ground_truth(spec));
    std::map<Topology, Plan> plans;
    for (Topology t : topologies) plans[t] = Episode(intent, spec, oracle ? &*oracle : nullptr, t).run();
    return plans;
}

BenchmarkItem build_item(const std::string& id, const Intent& intent, const PhantomSpec& spec, const Oracle& oracle,
                         const std::vector<Topology>& topologies) {
    BenchmarkItem item;
    item.id = id;
    item.tier = backend::template_tier(intent.tmpl);
    item.tmpl = intent.tmpl;
    item.question = backend::render_question(intent);
    item.case_id = spec.case_id;
    item.timepoints = intent.timepoints;
    item.expected_answer = expected_answer(intent, oracle);
    check_fit(intent, spec, &oracle);
    for (Topology t : topologies) item.expected_plans[t] = Episode(intent, spec, &oracle, t).run();
    return item;
}

}  // namespace neuroagent::bench
