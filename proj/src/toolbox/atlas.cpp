#include "neuroagent/toolbox/atlas.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <mutex>
#include <stdexcept>

namespace neuroagent::toolbox {

namespace {

double sq(double x) { return x * x; }

AtlasTemplate make_template(std::string name, volume::Index3 dims, Vec3 radii) {
    const Vec3 origin{-0.5 * dims[0], -0.5 * dims[1], -0.5 * dims[2]};
    return AtlasTemplate{std::move(name), Grid::axis_aligned(dims, {1.0, 1.0, 1.0}, origin),
                         Vec3{0.0, 0.0, 0.0}, radii, 3.0};
}

const char* kYSlab[kAnatomySlabs] = {"Posterior", "Mid-Posterior", "Mid-Anterior", "Anterior"};
const char* kZSlab[kAnatomySlabs] = {"Basal", "Lower", "Upper", "Apical"};

int slab_of(double f) {
    const int s = static_cast<int>(std::floor(f * kAnatomySlabs));
    return std::clamp(s, 0, kAnatomySlabs - 1);
}

}  // namespace

bool AtlasTemplate::in_brain(const Vec3& p) const {
    double r = 0.0;
    for (int a = 0; a < 3; ++a) r += sq((p[a] - brain_center[a]) / brain_radii[a]);
    return r <= 1.0;
}

bool AtlasTemplate::in_head(const Vec3& p) const {
    double r = 0.0;
    for (int a = 0; a < 3; ++a) r += sq((p[a] - brain_center[a]) / (brain_radii[a] + skull_thickness));
    return r <= 1.0;
}

Vec3 AtlasTemplate::box_fraction(const Vec3& p) const {
    Vec3 f{};
    for (int a = 0; a < 3; ++a) f[a] = (p[a] - (brain_center[a] - brain_radii[a])) / (2.0 * brain_radii[a]);
    return f;
}

const AtlasTemplate& sri24() {
    static const AtlasTemplate t = make_template("SRI24", {40, 48, 36}, {15.0, 19.0, 13.0});
    return t;
}

const AtlasTemplate& mni152() {
    static const AtlasTemplate t = make_template("MNI152", {42, 50, 38}, {16.0, 20.0, 14.0});
    return t;
}

const AtlasTemplate& atlas_by_name(const std::string& name) {
    if (name == "SRI24") return sri24();
    if (name == "MNI152") return mni152();
    throw std::out_of_range("unknown atlas: " + name);
}

bool is_atlas_name(const std::string& name) { return name == "SRI24" || name == "MNI152"; }

int anatomy_label_at(const AtlasTemplate& atlas, const Vec3& world) {
    if (!atlas.in_brain(world)) return 0;
    const Vec3 f = atlas.box_fraction(world);
    const int hemi = world[0] >= atlas.brain_center[0] ? 1 : 0;  // RAS: +x is right
    return 1 + hemi * kAnatomySlabs * kAnatomySlabs + slab_of(f[1]) * kAnatomySlabs + slab_of(f[2]);
}

int lobe_label_at(const AtlasTemplate& atlas, const Vec3& world) {
    if (!atlas.in_brain(world)) return 0;
    const Vec3 f = atlas.box_fraction(world);
    const int hemi = world[0] >= atlas.brain_center[0] ? 1 : 0;
    int lobe = 2;  // temporal
    if (f[1] >= kFrontalCutY) {
        lobe = 0;
    } else if (f[2] >= kParietalCutZ) {
        lobe = 1;
    }
    return 1 + hemi * 3 + lobe;
}

const std::map<int, std::string>& anatomy_vocabulary() {
    static const std::map<int, std::string> vocab = [] {
        std::map<int, std::string> v;
        for (int h = 0; h < 2; ++h)
            for (int y = 0; y < kAnatomySlabs; ++y)
                for (int z = 0; z < kAnatomySlabs; ++z)
                    v[1 + h * kAnatomySlabs * kAnatomySlabs + y * kAnatomySlabs + z] =
                        std::string(h == 0 ? "Left " : "Right ") + kYSlab[y] + " " + kZSlab[z];
        return v;
    }();
    return vocab;
}

const std::map<int, std::string>& lobe_vocabulary() {
    static const std::map<int, std::string> vocab{
        {1, "Left Frontal"},  {2, "Left Parietal"},  {3, "Left Temporal"},
        {4, "Right Frontal"}, {5, "Right Parietal"}, {6, "Right Temporal"},
    };
    return vocab;
}

std::shared_ptr<const AtlasVolumes> atlas_volumes(const std::string& atlas_name) {
    static std::mutex mu;
    static std::map<std::string, std::shared_ptr<const AtlasVolumes>> cache;
    std::lock_guard<std::mutex> lock(mu);
    if (auto it = cache.find(atlas_name); it != cache.end()) return it->second;

    const AtlasTemplate& atlas = atlas_by_name(atlas_name);
    auto out = std::make_shared<AtlasVolumes>();
    out->brain = VoxelVolume(atlas.grid, volume::DType::UInt8);
    VoxelVolume anatomy(atlas.grid, volume::DType::UInt8);
    VoxelVolume lobes(atlas.grid, volume::DType::UInt8);
    const auto& d = atlas.grid.dims();
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i) {
                const Vec3 w = atlas.grid.index_to_world({double(i), double(j), double(k)});
                const std::size_t n = atlas.grid.linear(i, j, k);
                out->brain.data[n] = atlas.in_brain(w) ? 1.0f : 0.0f;
                anatomy.data[n] = static_cast<float>(anatomy_label_at(atlas, w));
                lobes.data[n] = static_cast<float>(lobe_label_at(atlas, w));
            }
    for (auto* v : {&out->brain, &anatomy, &lobes}) {
        v->meta["space"] = atlas.name;
    }
    out->anatomy = LabelMask(std::move(anatomy), anatomy_vocabulary());
    out->lobes = LabelMask(std::move(lobes), lobe_vocabulary());
    cache[atlas_name] = out;
    return out;
}

const std::vector<std::string>& model_names() {
    static const std::vector<std::string> names{"glioma", "postop-glioma", "metastasis", "meningioma",
                                                "pediatric"};
    return names;
}

bool is_model_name(const std::string& name) {
    const auto& n = model_names();
    return std::find(n.begin(), n.end(), name) != n.end();
}

const std::map<int, std::string>& model_vocabulary(const std::string& model) {
    static const std::map<int, std::string> tumour{
        {1, "necrotic core"}, {2, "edema"}, {3, "enhancing tumor"}};
    static const std::map<int, std::string> postop{
        {1, "necrotic core"}, {2, "edema"}, {3, "enhancing tumor"}, {4, "resection cavity"}};
    if (!is_model_name(model)) throw std::out_of_range("unknown model: " + model);
    return model == "postop-glioma" ? postop : tumour;
}

const std::string& model_atlas(const std::string& model) {
    static const std::string sri = "SRI24";
    static const std::string mni = "MNI152";
    if (!is_model_name(model)) throw std::out_of_range("unknown model: " + model);
    return model == "postop-glioma" ? mni : sri;
}

NativeFrame make_native_frame(const AtlasTemplate& atlas, int quarter_turns, const Vec3& translation) {
    const volume::Affine to_atlas = volume::Affine::rotation_z90(quarter_turns, translation);
    const volume::Affine to_native = to_atlas.inverse();
    const auto& d = atlas.grid.dims();
    Vec3 lo{1e30, 1e30, 1e30}, hi{-1e30, -1e30, -1e30};
    for (int c = 0; c < 8; ++c) {
        const Vec3 idx{(c & 1) ? d[0] - 0.5 : -0.5, (c & 2) ? d[1] - 0.5 : -0.5, (c & 4) ? d[2] - 0.5 : -0.5};
        const Vec3 w = to_native.apply(atlas.grid.index_to_world(idx));
        for (int a = 0; a < 3; ++a) lo[a] = std::min(lo[a], w[a]), hi[a] = std::max(hi[a], w[a]);
    }
    for (int a = 0; a < 3; ++a) lo[a] = std::floor(lo[a]), hi[a] = std::ceil(hi[a]);
    const Vec3 spacing{0.5, 1.0, 1.0};
    volume::Index3 dims{};
    for (int a = 0; a < 3; ++a) dims[a] = static_cast<int>(std::lround((hi[a] - lo[a]) / spacing[a])) + 1;
    volume::Affine native = volume::Affine::axis_aligned(spacing, lo);
    native.m[0][0] = -spacing[0];  // first axis runs right-to-left
    native.m[0][3] = hi[0];
    return NativeFrame{Grid(dims, native), to_atlas};
}

std::string slug(const std::string& name) {
    std::string out;
    for (char c : name) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!out.empty() && out.back() != '_') {
            out += '_';
        }
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    return out;
}

}  // namespace neuroagent::toolbox
