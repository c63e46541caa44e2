#include "neuroagent/agent/registry.hpp"

#include <cmath>

namespace neuroagent::agent {

using toolbox::ToolResult;
namespace errc = toolbox::errc;

json ToolDescriptor::schema() const {
    json props = json::object();
    json required = json::array();
    for (const auto& p : params) {
        json t;
        if (p.type == "number") {
            t = {{"type", "number"}};
        } else if (p.type == "integer") {
            t = {{"type", "integer"}};
        } else if (p.type == "vector3") {
            t = {{"type", "array"}, {"items", {{"type", "number"}}}, {"minItems", 3}, {"maxItems", 3}};
        } else {
            t = {{"type", "string"}};
        }
        t["description"] = p.type == "handle" ? "object handle id. " + p.description : p.description;
        props[p.name] = std::move(t);
        if (p.required) required.push_back(p.name);
    }
    return {{"name", name},
            {"description", description + " Returns: " + returns},
            {"parameters", {{"type", "object"}, {"properties", props}, {"required", required}}}};
}

void ToolRegistry::register_tool(ToolDescriptor descriptor, ToolBinding binding) {
    const std::string name = descriptor.name;
    if (tools_.count(name)) throw DuplicateError("tool already registered: " + name);
    tools_.emplace(name, Entry{std::move(descriptor), std::move(binding)});
}

std::vector<std::string> ToolRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& [n, e] : tools_) out.push_back(n);
    return out;
}

const ToolDescriptor& ToolRegistry::descriptor(const std::string& name) const {
    auto it = tools_.find(name);
    if (it == tools_.end()) throw UnknownTool("unknown tool: " + name);
    return it->second.descriptor;
}

std::optional<ToolResult> validate_args(const ToolDescriptor& d, const json& args) {
    if (!args.is_object()) return ToolResult::failure(errc::kBadArgument, "arguments must be an object");
    for (const auto& [key, value] : args.items()) {
        bool known = false;
        for (const auto& p : d.params) known = known || p.name == key;
        if (!known) return ToolResult::failure(errc::kBadArgument, "unexpected argument '" + key + "'");
    }
    for (const auto& p : d.params) {
        if (!args.contains(p.name) || args[p.name].is_null()) {
            if (p.required)
                return ToolResult::failure(p.missing_error, "missing required argument '" + p.name + "'",
                                           {{"missing", json::array({p.name})}});
            continue;
        }
        const json& v = args[p.name];
        bool ok = true;
        if (p.type == "handle" || p.type == "text") {
            ok = v.is_string();
        } else if (p.type == "number") {
            ok = v.is_number();
        } else if (p.type == "integer") {
            ok = v.is_number_integer() || (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>());
        } else if (p.type == "vector3") {
            ok = v.is_array() && v.size() == 3;
            for (const auto& e : v) ok = ok && e.is_number();
        }
        if (!ok) return ToolResult::failure(errc::kBadArgument, "argument '" + p.name + "' must be " + p.type);
    }
    return std::nullopt;
}

ToolResult ToolRegistry::dispatch(toolbox::Toolbox& tb, const std::string& name, const json& args) const {
    auto it = tools_.find(name);
    if (it == tools_.end()) throw UnknownTool("unknown tool: " + name);
    if (auto err = validate_args(it->second.descriptor, args)) return *err;
    return it->second.binding(tb, args);
}

namespace {

std::string str(const json& a, const char* k) { return a.at(k).get<std::string>(); }
int integer(const json& a, const char* k) { return static_cast<int>(std::llround(a.at(k).get<double>())); }
std::optional<std::string> opt_str(const json& a, const char* k) {
    if (!a.contains(k) || a[k].is_null()) return std::nullopt;
    return a[k].get<std::string>();
}

ParamSpec handle(std::string name, std::string desc, bool required = true) {
    return {std::move(name), "handle", required, std::move(desc)};
}
ParamSpec modality(std::string name, std::string desc) {
    return {std::move(name), "handle", true, std::move(desc), errc::kMissingInput};
}

}  // namespace

std::vector<std::pair<ToolDescriptor, ToolBinding>> toolbox_tools() {
    using TB = toolbox::Toolbox;
    std::vector<std::pair<ToolDescriptor, ToolBinding>> t;
    t.push_back({{"tool_load_image",
                  "Load a case image file by its path in the case bundle.",
                  {{"path", "text", true, "path relative to the dataset root"}},
                  "image handle; timepoint, modality, space, skull_stripped, dims, spacing_mm"},
                 [](TB& tb, const json& a) { return tb.load_image(str(a, "path")); }});
    t.push_back({{"tool_skull_strip",
                  "Remove non-brain voxels from a head image.",
                  {handle("image", "input image")},
                  "skull-stripped image handle; brain_volume_mm3"},
                 [](TB& tb, const json& a) { return tb.skull_strip(str(a, "image")); }});
    t.push_back({{"tool_register",
                  "Rigidly register an image to an atlas template or onto another image's grid.",
                  {handle("image", "moving image"),
                   {"target", "text", true, "atlas:SRI24, atlas:MNI152, or a reference image handle"}},
                  "registered image handle; space"},
                 [](TB& tb, const json& a) { return tb.register_image(str(a, "image"), str(a, "target")); }});
    t.push_back({{"tool_resample",
                  "Resample an image or mask to a new voxel spacing (masks use nearest neighbour).",
                  {handle("image", "image or mask"), {"spacing", "vector3", true, "voxel spacing in mm (x, y, z)"}},
                  "resampled handle; dims"},
                 [](TB& tb, const json& a) {
                     const auto& s = a.at("spacing");
                     return tb.resample(str(a, "image"), {s[0].get<double>(), s[1].get<double>(), s[2].get<double>()});
                 }});
    t.push_back({{"tool_verify_registration",
                  "Compare image header geometry (dims, spacing, origin, orientation) against a reference.",
                  {handle("image", "image or mask to check"),
                   {"reference", "text", true, "atlas:SRI24, atlas:MNI152, or a handle"}},
                  "equal flag and list of mismatching fields"},
                 [](TB& tb, const json& a) { return tb.verify_registration(str(a, "image"), str(a, "reference")); }});
    t.push_back({{"tool_segment_pathology",
                  "Segment tumour sub-regions with a pathology-specific model. Inputs must be skull-stripped and "
                  "registered to the model's atlas (SRI24; MNI152 for postop-glioma).",
                  {modality("t1", "T1 image"), modality("t1ce", "contrast-enhanced T1 image"),
                   modality("t2", "T2 image"), modality("flair", "FLAIR image"),
                   {"model", "text", true, "glioma, postop-glioma, metastasis, meningioma or pediatric"}},
                  "mask handle; label vocabulary, per-label volumes, segmentation_file"},
                 [](TB& tb, const json& a) {
                     toolbox::PathologyInputs in{opt_str(a, "t1"), opt_str(a, "t1ce"), opt_str(a, "t2"),
                                                 opt_str(a, "flair")};
                     return tb.segment_pathology(in, str(a, "model"));
                 }});
    t.push_back({{"tool_segment_anatomy",
                  "Segment 32 anatomical brain regions; works in native or atlas space.",
                  {handle("image", "input image")},
                  "anatomy mask handle and volume table handle; region_count, per-region volumes by label id, "
                  "segmentation_file, volumes_file"},
                 [](TB& tb, const json& a) { return tb.segment_anatomy(str(a, "image")); }});
    t.push_back({{"tool_list_labels",
                  "List label ids and names for a segmentation model, the anatomy atlas, or the lobe atlas.",
                  {{"scope", "text", true, "model name, anatomy, or lobes"}},
                  "labels ordered by id"},
                 [](TB& tb, const json& a) { return tb.list_labels(str(a, "scope")); }});
    t.push_back({{"tool_enumerate_lesions",
                  "Split a lesion mask into connected lesion instances.",
                  {handle("mask", "lesion mask")},
                  "lesion_count, total_volume_mm3, per-lesion id, volume_mm3, centroid_mm (largest first)"},
                 [](TB& tb, const json& a) { return tb.enumerate_lesions(str(a, "mask")); }});
    t.push_back({{"tool_match_lesions",
                  "Match lesion instances between two timepoints by IoU.",
                  {handle("mask_t0", "earlier lesion mask"), handle("mask_t1", "later lesion mask"),
                   {"threshold", "number", false, "minimum IoU for a match (default 0.25)"}},
                  "pairs (id_t0, id_t1, iou), new lesions, resolved lesions"},
                 [](TB& tb, const json& a) {
                     std::optional<double> thr;
                     if (a.contains("threshold") && !a["threshold"].is_null()) thr = a["threshold"].get<double>();
                     return tb.match_lesions(str(a, "mask_t0"), str(a, "mask_t1"), thr);
                 }});
    t.push_back({{"tool_lesion_geometry",
                  "Extract one lesion's sub-volume geometry.",
                  {handle("mask", "lesion mask"), {"lesion_id", "integer", true, "lesion instance id"}},
                  "volume_mm3, centroid_mm, bounding box, extent_mm"},
                 [](TB& tb, const json& a) { return tb.lesion_geometry(str(a, "mask"), integer(a, "lesion_id")); }});
    t.push_back({{"tool_lesion_features",
                  "Compute shape and intensity features of one lesion.",
                  {handle("mask", "lesion mask"), handle("image", "intensity image on the mask grid"),
                   {"lesion_id", "integer", true, "lesion instance id"}},
                  "volume_mm3, surface_area_mm2, sphericity, elongation, flatness, mean/max intensity"},
                 [](TB& tb, const json& a) {
                     return tb.lesion_features(str(a, "mask"), str(a, "image"), integer(a, "lesion_id"));
                 }});
    t.push_back({{"tool_localize",
                  "Name the lobe with the largest overlap with a lesion (atlas-space masks only).",
                  {handle("mask", "atlas-space lesion mask"), {"lesion_id", "integer", true, "lesion instance id"}},
                  "lobe, lobe_id, overlap_fraction"},
                 [](TB& tb, const json& a) { return tb.localize(str(a, "mask"), integer(a, "lesion_id")); }});
    t.push_back({{"tool_visualize",
                  "Write a mid-axial snapshot of an image with an optional mask overlay.",
                  {handle("image", "image"), handle("mask", "optional mask overlay", false)},
                  "path of the written image"},
                 [](TB& tb, const json& a) { return tb.visualize(str(a, "image"), opt_str(a, "mask")); }});
    return t;
}

const ToolRegistry& standard_registry() {
    static const ToolRegistry reg = [] {
        ToolRegistry r;
        for (auto& [d, b] : toolbox_tools()) r.register_tool(std::move(d), std::move(b));
        return r;
    }();
    return reg;
}

}  // namespace neuroagent::agent
