#include "neuroagent/toolbox/toolbox.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "neuroagent/toolbox/atlas.hpp"
#include "neuroagent/volume/errors.hpp"
#include "neuroagent/volume/header.hpp"
#include "neuroagent/volume/kernels.hpp"
#include "neuroagent/volume/nifti.hpp"

namespace neuroagent::toolbox {

using nlohmann::json;
using volume::Affine;
using volume::Interpolation;
using volume::Vec3;

const TimepointFiles* CaseBundle::timepoint(const std::string& id) const {
    for (const auto& tp : timepoints)
        if (tp.id == id) return &tp;
    return nullptr;
}

std::shared_ptr<const VoxelVolume> VolumeCache::load(const std::filesystem::path& path) {
    const std::string key = path.lexically_normal().string();
    {
        std::lock_guard<std::mutex> lock(mu_);
        if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    }
    auto v = std::make_shared<const VoxelVolume>(volume::read_volume(path));
    std::lock_guard<std::mutex> lock(mu_);
    return entries_.emplace(key, std::move(v)).first->second;
}

namespace {

constexpr const char* kNative = "native";

double round_to(double x, int decimals) {
    const double f = std::pow(10.0, decimals);
    const double r = std::round(x * f) / f;
    return r == 0.0 ? 0.0 : r;  // no negative zero in payloads
}

json vec_json(const Vec3& v, int decimals = 2) {
    return json::array({round_to(v[0], decimals), round_to(v[1], decimals), round_to(v[2], decimals)});
}

json index_json(const volume::Index3& v) { return json::array({v[0], v[1], v[2]}); }

json vocab_json(const std::map<int, std::string>& vocab) {
    json out = json::array();
    for (const auto& [id, name] : vocab) out.push_back({{"id", id}, {"name", name}});
    return out;
}

bool same_frame(const std::string& a, const std::string& b) {
    return (a == kNative) == (b == kNative);
}

std::string strip_atlas_prefix(const std::string& s) {
    return s.rfind("atlas:", 0) == 0 ? s.substr(6) : s;
}

// Lookup with kind checking; holds either the object or the error to return.
struct Deref {
    const StoredObject* obj = nullptr;
    std::optional<ToolResult> error;
};

Deref deref(const HandleStore& store, const std::string& id, std::initializer_list<ObjectKind> kinds,
            const std::string& arg) {
    const StoredObject* o = store.find(id);
    if (!o) return {nullptr, ToolResult::failure(errc::kBadHandle, "unknown handle '" + id + "' for " + arg)};
    for (ObjectKind k : kinds)
        if (o->handle.kind == k) return {o, std::nullopt};
    return {nullptr, ToolResult::failure(errc::kWrongKind, "handle " + id + " for " + arg + " is a " +
                                                               to_string(o->handle.kind))};
}

const VoxelVolume& voxels_of(const StoredObject& o) { return o.mask ? o.mask->grid : *o.image; }

std::string space_of(const StoredObject& o) { return voxels_of(o).meta_or("space", kNative); }

double component_volume(const volume::ComponentSet& cs, int id, const volume::Grid& g) {
    return static_cast<double>(cs.components[id - 1].voxel_count) * g.voxel_volume();
}

json lesion_brief(const volume::ComponentSet& cs, int id, const volume::Grid& g) {
    const auto& c = cs.components[id - 1];
    return {{"id", id},
            {"voxel_count", c.voxel_count},
            {"volume_mm3", round_to(component_volume(cs, id, g), 3)},
            {"centroid_mm", vec_json(c.centroid)}};
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw volume::IoError("cannot write " + p.string());
    out << text;
}

const volume::ComponentSet& components_of(const StoredObject& o, volume::Connectivity c) {
    if (!o.components || o.components->connectivity != c)
        o.components = std::make_shared<const volume::ComponentSet>(
            volume::connected_components(*o.mask, std::nullopt, c));
    return *o.components;
}

// Pull-back transform from `target_space` world coordinates to `source_space`
// world coordinates. Both templates share one world frame.
Affine frame_transform(const GroundTruth* truth, const std::string& target_space, const std::string& source_space) {
    if (same_frame(target_space, source_space) || !truth || !truth->native) return Affine::identity();
    if (source_space == kNative) return truth->native->native_to_atlas.inverse();
    return truth->native->native_to_atlas;
}

const volume::Grid& grid_of(const VoxelVolume& v) { return v.grid; }
const volume::Grid& grid_of(const LabelMask& m) { return m.grid.grid; }

// An atlas-space ground-truth product sampled onto grid `g` in `space`.
template <class T>
T truth_on(const T& atlas_obj, const std::string& atlas, const GroundTruth* truth, const volume::Grid& g,
           const std::string& space) {
    if (space == atlas && g == grid_of(atlas_obj)) return atlas_obj;
    return volume::apply_affine(atlas_obj, frame_transform(truth, space, atlas), g, Interpolation::Nearest);
}

std::string output_rel(const CaseBundle& b, const std::string& tp, const std::string& file) {
    return "outputs/" + b.case_id + "/" + (tp.empty() ? std::string("unknown") : tp) + "/" + file;
}

}  // namespace

Toolbox::Toolbox(const CaseContext& ctx, HandleStore& store, ToolboxConfig cfg)
    : ctx_(ctx), store_(store), cfg_(std::move(cfg)) {}

ToolResult Toolbox::load_image(const std::string& path) {
    for (const auto& tp : ctx_.bundle.timepoints) {
        for (const auto& [modality, rel] : tp.files) {
            if (rel != path) continue;
            const std::filesystem::path full = ctx_.root / rel;
            std::shared_ptr<const VoxelVolume> raw;
            try {
                raw = ctx_.cache ? ctx_.cache->load(full)
                                 : std::make_shared<const VoxelVolume>(volume::read_volume(full));
            } catch (const volume::VolumeError& e) {
                return ToolResult::failure(errc::kIoError, e.what());
            }
            auto v = std::make_shared<VoxelVolume>(*raw);
            v->meta["case_id"] = ctx_.bundle.case_id;
            v->meta["timepoint"] = tp.id;
            v->meta["modality"] = modality;
            v->meta["skull_stripped"] = ctx_.bundle.preprocessed ? "true" : "false";
            v->meta["space"] = ctx_.bundle.preprocessed ? ctx_.bundle.atlas : kNative;
            json payload{{"path", path},
                         {"timepoint", tp.id},
                         {"modality", modality},
                         {"space", v->meta["space"]},
                         {"skull_stripped", ctx_.bundle.preprocessed},
                         {"dims", index_json(v->grid.dims())},
                         {"spacing_mm", vec_json(v->grid.spacing(), 4)}};
            ObjectHandle h = store_.put_image(std::move(v), "tool_load_image");
            return ToolResult::success(std::move(payload), {h});
        }
    }
    return ToolResult::failure(errc::kNotFound, "no file '" + path + "' in case " + ctx_.bundle.case_id);
}

ToolResult Toolbox::skull_strip(const std::string& image) {
    Deref in = deref(store_, image, {ObjectKind::Image}, "image");
    if (in.error) return *in.error;
    const VoxelVolume& src = *in.obj->image;
    if (!ctx_.truth) return ToolResult::failure(errc::kPreconditionFailed, "no brain model for this case");
    const auto atlas = atlas_volumes(ctx_.truth->atlas);
    const std::string space = space_of(*in.obj);
    const VoxelVolume brain = truth_on(atlas->brain, ctx_.truth->atlas, ctx_.truth.get(), src.grid, space);
    auto out = std::make_shared<VoxelVolume>(volume::mask_multiply(src, brain));
    out->meta = src.meta;
    out->meta["skull_stripped"] = "true";
    const double brain_mm3 = static_cast<double>(volume::count_nonzero(brain)) * src.grid.voxel_volume();
    json payload{{"brain_volume_mm3", round_to(brain_mm3, 3)},
                 {"timepoint", src.meta_or("timepoint")},
                 {"modality", src.meta_or("modality")},
                 {"space", space}};
    ObjectHandle h = store_.put_image(std::move(out), "tool_skull_strip");
    return ToolResult::success(std::move(payload), {h});
}

ToolResult Toolbox::register_image(const std::string& image, const std::string& target) {
    Deref in = deref(store_, image, {ObjectKind::Image}, "image");
    if (in.error) return *in.error;
    const VoxelVolume& src = *in.obj->image;
    volume::Grid target_grid;
    std::string target_space;
    if (target.rfind("atlas:", 0) == 0) {
        target_space = target.substr(6);
        if (!is_atlas_name(target_space))
            return ToolResult::failure(errc::kBadArgument, "unknown atlas '" + target_space + "'");
        target_grid = atlas_by_name(target_space).grid;
    } else {
        Deref ref = deref(store_, target, {ObjectKind::Image, ObjectKind::Mask}, "target");
        if (ref.error) {
            if (store_.find(target) == nullptr && target.rfind("obj_", 0) != 0)
                return ToolResult::failure(errc::kBadArgument,
                                           "target must be atlas:SRI24, atlas:MNI152 or an image handle");
            return *ref.error;
        }
        target_grid = voxels_of(*ref.obj).grid;
        target_space = space_of(*ref.obj);
    }
    const std::string space = space_of(*in.obj);
    std::shared_ptr<VoxelVolume> out;
    if (space == target_space && src.grid == target_grid) {
        out = std::make_shared<VoxelVolume>(src);
    } else {
        out = std::make_shared<VoxelVolume>(volume::apply_affine(
            src, frame_transform(ctx_.truth.get(), target_space, space), target_grid, Interpolation::Trilinear));
        out->meta = src.meta;
    }
    out->meta["space"] = target_space;
    json payload{{"space", target_space},
                 {"timepoint", src.meta_or("timepoint")},
                 {"modality", src.meta_or("modality")},
                 {"skull_stripped", src.meta_or("skull_stripped") == "true"},
                 {"dims", index_json(target_grid.dims())}};
    ObjectHandle h = store_.put_image(std::move(out), "tool_register");
    return ToolResult::success(std::move(payload), {h});
}

ToolResult Toolbox::resample(const std::string& image, const Vec3& spacing) {
    Deref in = deref(store_, image, {ObjectKind::Image, ObjectKind::Mask}, "image");
    if (in.error) return *in.error;
    for (double s : spacing)
        if (!(s > 0.0) || !std::isfinite(s))
            return ToolResult::failure(errc::kBadArgument, "spacing components must be positive");
    ObjectHandle h;
    volume::Index3 dims{};
    if (in.obj->mask) {
        auto out = std::make_shared<LabelMask>(volume::resample(*in.obj->mask, spacing, Interpolation::Nearest));
        out->grid.meta = in.obj->mask->grid.meta;
        dims = out->grid.grid.dims();
        h = store_.put_mask(std::move(out), "tool_resample");
    } else {
        auto out = std::make_shared<VoxelVolume>(volume::resample(*in.obj->image, spacing, Interpolation::Trilinear));
        out->meta = in.obj->image->meta;
        dims = out->grid.dims();
        h = store_.put_image(std::move(out), "tool_resample");
    }
    json payload{{"dims", index_json(dims)}, {"spacing_mm", vec_json(spacing, 4)}};
    return ToolResult::success(std::move(payload), {h});
}

ToolResult Toolbox::verify_registration(const std::string& image, const std::string& reference) {
    Deref in = deref(store_, image, {ObjectKind::Image, ObjectKind::Mask}, "image");
    if (in.error) return *in.error;
    volume::Grid ref_grid;
    const std::string atlas = strip_atlas_prefix(reference);
    if (is_atlas_name(atlas)) {
        ref_grid = atlas_by_name(atlas).grid;
    } else if (reference.rfind("obj_", 0) == 0) {
        Deref ref = deref(store_, reference, {ObjectKind::Image, ObjectKind::Mask}, "reference");
        if (ref.error) return *ref.error;
        ref_grid = voxels_of(*ref.obj).grid;
    } else {
        return ToolResult::failure(errc::kBadArgument, "unknown reference '" + reference + "'");
    }
    const volume::HeaderDiff diff = volume::compare_headers(voxels_of(*in.obj).grid, ref_grid);
    json mismatches = json::array();
    for (const auto& m : diff.mismatches)
        mismatches.push_back({{"field", m.field}, {"image", m.value_a}, {"reference", m.value_b}});
    return ToolResult::success({{"equal", diff.equal}, {"reference", reference}, {"mismatches", mismatches}});
}

ToolResult Toolbox::segment_pathology(const PathologyInputs& inputs, const std::string& model) {
    const std::pair<const char*, const std::optional<std::string>*> slots[] = {
        {"t1", &inputs.t1}, {"t1ce", &inputs.t1ce}, {"t2", &inputs.t2}, {"flair", &inputs.flair}};
    const char* modality_of_slot[] = {"T1", "T1ce", "T2", "FLAIR"};
    json missing = json::array();
    for (const auto& [name, v] : slots)
        if (!v->has_value() || (*v)->empty()) missing.push_back(name);
    if (!missing.empty())
        return ToolResult::failure(errc::kMissingInput, "missing modality input", {{"missing", missing}});
    if (!is_model_name(model)) return ToolResult::failure(errc::kBadArgument, "unknown model '" + model + "'");

    const AtlasTemplate& required = atlas_by_name(model_atlas(model));
    const VoxelVolume* vols[4] = {};
    for (int s = 0; s < 4; ++s) {
        Deref d = deref(store_, **slots[s].second, {ObjectKind::Image}, slots[s].first);
        if (d.error) return *d.error;
        vols[s] = d.obj->image.get();
        if (vols[s]->meta_or("modality") != modality_of_slot[s])
            return ToolResult::failure(errc::kBadArgument, std::string("input for ") + slots[s].first +
                                                               " is a " + vols[s]->meta_or("modality", "?") +
                                                               " image");
    }
    bool space_ok = true;
    bool strip_ok = true;
    for (const VoxelVolume* v : vols) {
        space_ok = space_ok && volume::compare_headers(v->grid, required.grid).equal;
        strip_ok = strip_ok && v->meta_or("skull_stripped") == "true";
    }
    if (!space_ok || !strip_ok) {
        json failed = json::array();
        if (!space_ok) failed.push_back("space");
        if (!strip_ok) failed.push_back("skull_strip");
        std::string msg = "model " + model + " requires skull-stripped inputs in " + required.name + " space";
        return ToolResult::failure(errc::kPreconditionFailed, msg, {{"failed_checks", failed}});
    }

    const std::string tp = vols[1]->meta_or("timepoint");
    const auto& vocab = model_vocabulary(model);
    std::shared_ptr<LabelMask> out;
    const GroundTruth* truth = ctx_.truth.get();
    if (truth && truth->pathology == model && truth->lesions.count(tp)) {
        const LabelMask& gt = truth->lesions.at(tp);
        if (cfg_.noise > 0.0) {
            out = std::make_shared<LabelMask>(apply_boundary_noise(
                gt, truth->instances.at(tp), atlas_volumes(truth->atlas)->brain, cfg_.noise,
                truth->seed ^ std::hash<std::string>{}(tp)));
        } else {
            out = std::make_shared<LabelMask>(gt);
        }
        out->vocabulary = vocab;
    } else {
        out = std::make_shared<LabelMask>(VoxelVolume(required.grid, volume::DType::UInt8), vocab);
    }
    out->grid.meta["case_id"] = ctx_.bundle.case_id;
    out->grid.meta["timepoint"] = tp;
    out->grid.meta["space"] = required.name;
    out->grid.meta["model"] = model;

    const std::string rel = output_rel(ctx_.bundle, tp, "seg_" + model + ".nii");
    if (cfg_.output_dir) {
        try {
            std::filesystem::create_directories((*cfg_.output_dir / rel).parent_path());
            volume::write_volume(out->grid, *cfg_.output_dir / rel);
        } catch (const std::exception& e) {
            return ToolResult::failure(errc::kIoError, e.what());
        }
    }
    const auto hist = volume::label_histogram(out->grid);
    json volumes = json::array();
    for (const auto& [id, name] : vocab) {
        const auto it = hist.find(id);
        const double mm3 = it == hist.end() ? 0.0 : static_cast<double>(it->second) * required.grid.voxel_volume();
        volumes.push_back({{"id", id}, {"name", name}, {"volume_mm3", round_to(mm3, 3)}});
    }
    json payload{{"model", model},
                 {"timepoint", tp},
                 {"space", required.name},
                 {"labels", vocab_json(vocab)},
                 {"label_volumes_mm3", volumes},
                 {"segmentation_file", rel}};
    ObjectHandle h = store_.put_mask(std::move(out), "tool_segment_pathology");
    return ToolResult::success(std::move(payload), {h});
}

ToolResult Toolbox::segment_anatomy(const std::string& image) {
    Deref in = deref(store_, image, {ObjectKind::Image}, "image");
    if (in.error) return *in.error;
    if (!ctx_.truth) return ToolResult::failure(errc::kPreconditionFailed, "no anatomy model for this case");
    const VoxelVolume& src = *in.obj->image;
    const std::string space = space_of(*in.obj);
    const auto atlas = atlas_volumes(ctx_.truth->atlas);
    auto mask = std::make_shared<LabelMask>(
        truth_on(atlas->anatomy, ctx_.truth->atlas, ctx_.truth.get(), src.grid, space));
    mask->grid.meta = {{"case_id", ctx_.bundle.case_id},
                       {"timepoint", src.meta_or("timepoint")},
                       {"space", space},
                       {"model", "anatomy"}};
    const std::string tp = src.meta_or("timepoint");
    const std::string seg_rel = output_rel(ctx_.bundle, tp, "anatomy_seg.nii");
    const std::string csv_rel = output_rel(ctx_.bundle, tp, "anatomy_volumes.csv");

    const auto hist = volume::label_histogram(mask->grid);
    const double vv = src.grid.voxel_volume();
    std::ostringstream csv;
    csv << "label_id,region_name,volume_mm3\n";
    json volumes = json::array();
    double total = 0.0;
    for (const auto& [id, name] : anatomy_vocabulary()) {
        const auto it = hist.find(id);
        const std::uint64_t n = it == hist.end() ? 0 : it->second;
        const double mm3 = static_cast<double>(n) * vv;
        total += mm3;
        csv << id << ',' << name << ',' << round_to(mm3, 3) << '\n';
        volumes.push_back({{"id", id}, {"volume_mm3", round_to(mm3, 3)}});
    }
    if (cfg_.output_dir) {
        try {
            std::filesystem::create_directories((*cfg_.output_dir / seg_rel).parent_path());
            volume::write_volume(mask->grid, *cfg_.output_dir / seg_rel);
            write_text(*cfg_.output_dir / csv_rel, csv.str());
        } catch (const std::exception& e) {
            return ToolResult::failure(errc::kIoError, e.what());
        }
    }
    json payload{{"region_count", kAnatomyRegionCount},
                 {"timepoint", tp},
                 {"space", space},
                 {"segmentation_file", seg_rel},
                 {"volumes_file", csv_rel},
                 {"total_volume_mm3", round_to(total, 3)},
                 {"volumes_mm3", volumes}};
    ObjectHandle hm = store_.put_mask(std::move(mask), "tool_segment_anatomy");
    ObjectHandle hr = store_.put_report(csv.str(), csv_rel, "tool_segment_anatomy");
    return ToolResult::success(std::move(payload), {hm, hr});
}

ToolResult Toolbox::list_labels(const std::string& scope) {
    const std::map<int, std::string>* vocab = nullptr;
    if (scope == "anatomy") {
        vocab = &anatomy_vocabulary();
    } else if (scope == "lobes") {
        vocab = &lobe_vocabulary();
    } else if (is_model_name(scope)) {
        vocab = &model_vocabulary(scope);
    } else {
        return ToolResult::failure(errc::kBadArgument, "unknown label scope '" + scope + "'");
    }
    return ToolResult::success({{"scope", scope}, {"count", vocab->size()}, {"labels", vocab_json(*vocab)}});
}

ToolResult Toolbox::enumerate_lesions(const std::string& mask) {
    Deref in = deref(store_, mask, {ObjectKind::Mask}, "mask");
    if (in.error) return *in.error;
    const LabelMask& m = *in.obj->mask;
    const auto& cs = components_of(*in.obj, cfg_.connectivity);
    json lesions = json::array();
    double total = 0.0;
    for (std::size_t id = 1; id <= cs.count; ++id) {
        lesions.push_back(lesion_brief(cs, static_cast<int>(id), m.grid.grid));
        total += component_volume(cs, static_cast<int>(id), m.grid.grid);
    }
    return ToolResult::success({{"lesion_count", cs.count},
                                {"timepoint", m.grid.meta_or("timepoint")},
                                {"total_volume_mm3", round_to(total, 3)},
                                {"lesions", lesions}});
}

ToolResult Toolbox::match_lesions(const std::string& mask_t0, const std::string& mask_t1,
                                  std::optional<double> threshold) {
    Deref a = deref(store_, mask_t0, {ObjectKind::Mask}, "mask_t0");
    if (a.error) return *a.error;
    Deref b = deref(store_, mask_t1, {ObjectKind::Mask}, "mask_t1");
    if (b.error) return *b.error;
    const double thr = threshold.value_or(cfg_.match_threshold);
    if (!(thr > 0.0 && thr <= 1.0)) return ToolResult::failure(errc::kBadArgument, "threshold must be in (0, 1]");
    const LabelMask& m0 = *a.obj->mask;
    const LabelMask& m1 = *b.obj->mask;
    if (!(m0.grid.grid == m1.grid.grid))
        return ToolResult::failure(errc::kGridError, "masks are on different grids");

    const auto& c0 = components_of(*a.obj, cfg_.connectivity);
    const auto& c1 = components_of(*b.obj, cfg_.connectivity);
    std::map<std::pair<int, int>, std::uint64_t> inter;
    const auto& l0 = c0.labeling.data;
    const auto& l1 = c1.labeling.data;
    for (std::size_t n = 0; n < l0.size(); ++n)
        if (l0[n] > 0.0f && l1[n] > 0.0f) ++inter[{static_cast<int>(l0[n]), static_cast<int>(l1[n])}];

    struct Candidate {
        int i0, i1;
        double iou;
    };
    std::vector<Candidate> cands;
    for (const auto& [key, n] : inter) {
        const double uni = static_cast<double>(c0.components[key.first - 1].voxel_count +
                                               c1.components[key.second - 1].voxel_count - n);
        const double iou = static_cast<double>(n) / uni;
        if (iou >= thr) cands.push_back({key.first, key.second, iou});
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
        if (x.iou != y.iou) return x.iou > y.iou;
        return std::pair(x.i0, x.i1) < std::pair(y.i0, y.i1);
    });
    std::vector<bool> used0(c0.count + 1, false), used1(c1.count + 1, false);
    std::vector<Candidate> pairs;
    for (const auto& c : cands) {
        if (used0[c.i0] || used1[c.i1]) continue;
        used0[c.i0] = used1[c.i1] = true;
        pairs.push_back(c);
    }
    std::sort(pairs.begin(), pairs.end(), [](const Candidate& x, const Candidate& y) { return x.i0 < y.i0; });

    const auto& g = m0.grid.grid;
    json jp = json::array(), jn = json::array(), jr = json::array();
    for (const auto& p : pairs)
        jp.push_back({{"id_t0", p.i0},
                      {"id_t1", p.i1},
                      {"iou", round_to(p.iou, 4)},
                      {"volume_t0_mm3", round_to(component_volume(c0, p.i0, g), 3)},
                      {"volume_t1_mm3", round_to(component_volume(c1, p.i1, g), 3)}});
    for (std::size_t id = 1; id <= c1.count; ++id)
        if (!used1[id]) jn.push_back(lesion_brief(c1, static_cast<int>(id), g));
    for (std::size_t id = 1; id <= c0.count; ++id)
        if (!used0[id]) jr.push_back(lesion_brief(c0, static_cast<int>(id), g));
    return ToolResult::success({{"threshold", thr},
                                {"timepoint_t0", m0.grid.meta_or("timepoint")},
                                {"timepoint_t1", m1.grid.meta_or("timepoint")},
                                {"lesion_count_t0", c0.count},
                                {"lesion_count_t1", c1.count},
                                {"pairs", jp},
                                {"new", jn},
                                {"resolved", jr}});
}

ToolResult Toolbox::lesion_geometry(const std::string& mask, int lesion_id) {
    Deref in = deref(store_, mask, {ObjectKind::Mask}, "mask");
    if (in.error) return *in.error;
    const LabelMask& m = *in.obj->mask;
    const auto& cs = components_of(*in.obj, cfg_.connectivity);
    if (lesion_id < 1 || static_cast<std::size_t>(lesion_id) > cs.count)
        return ToolResult::failure(errc::kNotFound, "no lesion " + std::to_string(lesion_id) + " in mask " + mask);
    const auto& c = cs.components[lesion_id - 1];
    const volume::Grid& g = m.grid.grid;
    // Extent along world axes: the affine is a signed permutation.
    Vec3 extent{};
    for (int col = 0; col < 3; ++col) {
        const double span = (c.bbox_max[col] - c.bbox_min[col] + 1) * g.spacing()[col];
        for (int row = 0; row < 3; ++row)
            if (g.affine().m[row][col] != 0.0) extent[row] = span;
    }
    json payload = lesion_brief(cs, lesion_id, g);
    payload["bbox_min"] = index_json(c.bbox_min);
    payload["bbox_max"] = index_json(c.bbox_max);
    payload["extent_mm"] = vec_json(extent, 3);
    payload["timepoint"] = m.grid.meta_or("timepoint");
    return ToolResult::success(std::move(payload));
}

ShapeFeatures shape_features(const VoxelVolume& labeling, int id) {
    const volume::Grid& g = labeling.grid;
    const auto& d = g.dims();
    const Vec3 sp = g.spacing();
    const double face[3] = {sp[1] * sp[2], sp[0] * sp[2], sp[0] * sp[1]};
    const float target = static_cast<float>(id);
    auto inside = [&](int i, int j, int k) { return g.contains(i, j, k) && labeling.at(i, j, k) == target; };

    ShapeFeatures f;
    std::size_t n = 0;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    Eigen::Matrix3d second = Eigen::Matrix3d::Zero();
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i) {
                if (labeling.at(i, j, k) != target) continue;
                ++n;
                const int nb[3][2][3] = {{{i - 1, j, k}, {i + 1, j, k}},
                                         {{i, j - 1, k}, {i, j + 1, k}},
                                         {{i, j, k - 1}, {i, j, k + 1}}};
                for (int a = 0; a < 3; ++a)
                    for (const auto& q : nb[a])
                        if (!inside(q[0], q[1], q[2])) f.surface_area_mm2 += face[a];
                const Vec3 w = g.index_to_world({double(i), double(j), double(k)});
                const Eigen::Vector3d p(w[0], w[1], w[2]);
                mean += p;
                second += p * p.transpose();
            }
    if (n == 0) return f;
    f.volume_mm3 = static_cast<double>(n) * g.voxel_volume();
    f.sphericity = std::cbrt(M_PI) * std::pow(6.0 * f.volume_mm3, 2.0 / 3.0) / f.surface_area_mm2;
    mean /= static_cast<double>(n);
    const Eigen::Matrix3d cov = second / static_cast<double>(n) - mean * mean.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    Eigen::Vector3d ev = es.eigenvalues().cwiseMax(0.0);  // ascending
    if (ev[2] > 1e-12) {
        f.elongation = std::sqrt(ev[1] / ev[2]);
        f.flatness = std::sqrt(ev[0] / ev[2]);
    }
    return f;
}

ToolResult Toolbox::lesion_features(const std::string& mask, const std::string& image, int lesion_id) {
    Deref m = deref(store_, mask, {ObjectKind::Mask}, "mask");
    if (m.error) return *m.error;
    Deref im = deref(store_, image, {ObjectKind::Image}, "image");
    if (im.error) return *im.error;
    const LabelMask& lm = *m.obj->mask;
    const VoxelVolume& img = *im.obj->image;
    if (!(lm.grid.grid == img.grid))
        return ToolResult::failure(errc::kGridError, "mask and image are on different grids");
    const auto& cs = components_of(*m.obj, cfg_.connectivity);
    if (lesion_id < 1 || static_cast<std::size_t>(lesion_id) > cs.count)
        return ToolResult::failure(errc::kNotFound, "no lesion " + std::to_string(lesion_id) + " in mask " + mask);
    const ShapeFeatures f = shape_features(cs.labeling, lesion_id);
    double sum = 0.0;
    double mx = -std::numeric_limits<double>::infinity();
    std::size_t n = 0;
    const float target = static_cast<float>(lesion_id);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        if (cs.labeling.data[i] != target) continue;
        sum += img.data[i];
        mx = std::max(mx, static_cast<double>(img.data[i]));
        ++n;
    }
    return ToolResult::success({{"id", lesion_id},
                                {"modality", img.meta_or("modality")},
                                {"timepoint", lm.grid.meta_or("timepoint")},
                                {"volume_mm3", round_to(f.volume_mm3, 3)},
                                {"surface_area_mm2", round_to(f.surface_area_mm2, 3)},
                                {"sphericity", round_to(f.sphericity, 4)},
                                {"elongation", round_to(f.elongation, 4)},
                                {"flatness", round_to(f.flatness, 4)},
                                {"mean_intensity", round_to(sum / static_cast<double>(n), 3)},
                                {"max_intensity", round_to(mx, 3)}});
}

ToolResult Toolbox::localize(const std::string& mask, int lesion_id) {
    Deref in = deref(store_, mask, {ObjectKind::Mask}, "mask");
    if (in.error) return *in.error;
    const LabelMask& m = *in.obj->mask;
    const std::string space = m.grid.meta_or("space", kNative);
    if (!is_atlas_name(space) || !volume::compare_headers(m.grid.grid, atlas_by_name(space).grid).equal)
        return ToolResult::failure(errc::kPreconditionFailed, "mask is not in an atlas space",
                                   {{"failed_checks", json::array({"space"})}});
    const auto& cs = components_of(*in.obj, cfg_.connectivity);
    if (lesion_id < 1 || static_cast<std::size_t>(lesion_id) > cs.count)
        return ToolResult::failure(errc::kNotFound, "no lesion " + std::to_string(lesion_id) + " in mask " + mask);
    const LabelMask& lobes = atlas_volumes(space)->lobes;
    std::map<int, std::size_t> overlap;
    const float target = static_cast<float>(lesion_id);
    for (std::size_t i = 0; i < cs.labeling.data.size(); ++i)
        if (cs.labeling.data[i] == target) ++overlap[static_cast<int>(lobes.grid.data[i])];
    int best = 0;
    std::size_t best_n = 0;
    for (const auto& [lobe, n] : overlap)  // ascending id: ties keep the lower id
        if (lobe > 0 && n > best_n) best = lobe, best_n = n;
    const double total = static_cast<double>(cs.components[lesion_id - 1].voxel_count);
    return ToolResult::success({{"id", lesion_id},
                                {"lobe", best > 0 ? lobe_vocabulary().at(best) : std::string("none")},
                                {"lobe_id", best},
                                {"overlap_fraction", round_to(static_cast<double>(best_n) / total, 4)},
                                {"centroid_mm", vec_json(cs.components[lesion_id - 1].centroid)},
                                {"timepoint", m.grid.meta_or("timepoint")}});
}

ToolResult Toolbox::visualize(const std::string& image, const std::optional<std::string>& mask) {
    Deref in = deref(store_, image, {ObjectKind::Image}, "image");
    if (in.error) return *in.error;
    const VoxelVolume& img = *in.obj->image;
    const LabelMask* overlay = nullptr;
    if (mask) {
        Deref dm = deref(store_, *mask, {ObjectKind::Mask}, "mask");
        if (dm.error) return *dm.error;
        overlay = dm.obj->mask.get();
        if (!(overlay->grid.grid == img.grid))
            return ToolResult::failure(errc::kGridError, "mask and image are on different grids");
    }
    const auto& d = img.grid.dims();
    const int z = d[2] / 2;
    float lo = std::numeric_limits<float>::infinity(), hi = -lo;
    for (int j = 0; j < d[1]; ++j)
        for (int i = 0; i < d[0]; ++i) lo = std::min(lo, img.at(i, j, z)), hi = std::max(hi, img.at(i, j, z));
    std::string pixels(static_cast<std::size_t>(d[0]) * d[1], '\0');
    for (int j = 0; j < d[1]; ++j)
        for (int i = 0; i < d[0]; ++i) {
            int v = hi > lo ? static_cast<int>(std::lround(254.0 * (img.at(i, j, z) - lo) / (hi - lo))) : 0;
            if (overlay && overlay->grid.at(i, j, z) != 0.0f) v = 255;
            pixels[static_cast<std::size_t>(j) * d[0] + i] = static_cast<char>(static_cast<unsigned char>(v));
        }
    const std::filesystem::path dir = cfg_.output_dir ? *cfg_.output_dir / "viz" / ctx_.bundle.case_id
                                                      : std::filesystem::temp_directory_path() / "neuroagent_viz" /
                                                            ctx_.bundle.case_id;
    const std::string file = image + (mask ? "_" + *mask : std::string()) + ".pgm";
    const std::filesystem::path path = dir / file;
    try {
        std::ostringstream header;
        header << "P5\n" << d[0] << ' ' << d[1] << "\n255\n";
        write_text(path, header.str() + pixels);
    } catch (const std::exception& e) {
        return ToolResult::failure(errc::kIoError, e.what());
    }
    return ToolResult::success({{"path", path.string()}, {"width", d[0]}, {"height", d[1]}, {"slice", z}});
}

namespace {

bool perturb_erode(VoxelVolume& out, const VoxelVolume& instances, float id) {
    const volume::Grid& g = out.grid;
    const auto& d = g.dims();
    std::vector<std::size_t> boundary;
    std::size_t total = 0;
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i) {
                if (instances.at(i, j, k) != id) continue;
                ++total;
                const int nb[6][3] = {{i - 1, j, k}, {i + 1, j, k}, {i, j - 1, k},
                                      {i, j + 1, k}, {i, j, k - 1}, {i, j, k + 1}};
                for (const auto& q : nb)
                    if (!g.contains(q[0], q[1], q[2]) || instances.at(q[0], q[1], q[2]) != id) {
                        boundary.push_back(g.linear(i, j, k));
                        break;
                    }
            }
    if (boundary.size() >= total) return false;  // would vanish
    VoxelVolume trial = out;
    VoxelVolume inst = instances;
    for (std::size_t n : boundary) trial.data[n] = 0.0f, inst.data[n] = 0.0f;
    // Erosion must not split the lesion.
    if (volume::connected_components(inst, static_cast<int>(id), volume::Connectivity::TwentySix).count != 1)
        return false;
    out = std::move(trial);
    return true;
}

void perturb_dilate(VoxelVolume& out, const VoxelVolume& instances, const VoxelVolume& brain, float id) {
    const volume::Grid& g = out.grid;
    const auto& d = g.dims();
    std::vector<std::pair<std::size_t, float>> grow;
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i) {
                if (instances.at(i, j, k) != 0.0f || brain.at(i, j, k) == 0.0f) continue;
                const int nb[6][3] = {{i - 1, j, k}, {i + 1, j, k}, {i, j - 1, k},
                                      {i, j + 1, k}, {i, j, k - 1}, {i, j, k + 1}};
                for (const auto& q : nb)
                    if (g.contains(q[0], q[1], q[2]) && instances.at(q[0], q[1], q[2]) == id) {
                        grow.emplace_back(g.linear(i, j, k), out.at(q[0], q[1], q[2]));
                        break;
                    }
            }
    for (const auto& [n, label] : grow) out.data[n] = label;
}

}  // namespace

LabelMask apply_boundary_noise(const LabelMask& lesions, const VoxelVolume& instances, const VoxelVolume& brain,
                               double level, std::uint64_t seed) {
    LabelMask out = lesions;
    if (level <= 0.0) return out;
    volume::require_same_grid(lesions.grid.grid, instances.grid, "noise instances");
    volume::require_same_grid(lesions.grid.grid, brain.grid, "noise brain");
    const auto hist = volume::label_histogram(instances);
    for (const auto& [id, count] : hist) {
        if (id <= 0 || count == 0) continue;
        std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(id));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        if (u(rng) >= level) continue;
        const bool erode = u(rng) < 0.5;
        const float fid = static_cast<float>(id);
        if (!erode || !perturb_erode(out.grid, instances, fid)) perturb_dilate(out.grid, instances, brain, fid);
    }
    return out;
}

}  // namespace neuroagent::toolbox
