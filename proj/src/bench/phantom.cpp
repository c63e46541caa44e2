#include "neuroagent/bench/phantom.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "neuroagent/toolbox/atlas.hpp"
#include "neuroagent/volume/nifti.hpp"

namespace neuroagent::bench {

using toolbox::AtlasTemplate;
using volume::VoxelVolume;

namespace {

Vec3 vec_from_json(const json& j, const char* field) {
    if (!j.is_array() || j.size() != 3) throw std::invalid_argument(std::string(field) + ": expected 3 numbers");
    Vec3 v{};
    for (int a = 0; a < 3; ++a) {
        if (!j[a].is_number()) throw std::invalid_argument(std::string(field) + ": expected 3 numbers");
        v[a] = j[a].get<double>();
    }
    return v;
}

template <class T>
T field(const json& j, const char* name) {
    if (!j.contains(name)) throw std::invalid_argument(std::string("missing field '") + name + "'");
    try {
        return j.at(name).get<T>();
    } catch (const json::exception&) {
        throw std::invalid_argument(std::string("bad type for field '") + name + "'");
    }
}

// Squared normalised radius of a point in a scaled ellipsoid.
double rho2(const LesionSpec& l, double scale, const Vec3& w) {
    double r = 0.0;
    for (int a = 0; a < 3; ++a) {
        const double d = (w[a] - l.center[a]) / (l.radii[a] * scale);
        r += d * d;
    }
    return r;
}

const std::array<int, 5>& contrast(const std::string& modality) {
    // Indexed by sub-region label; entry 0 unused.
    static const std::array<int, 5> t1{0, -40, -20, -10, -60};
    static const std::array<int, 5> t1ce{0, -30, -10, 80, -60};
    static const std::array<int, 5> t2{0, 60, 50, 30, 90};
    static const std::array<int, 5> flair{0, 20, 70, 40, -50};
    if (modality == "T1") return t1;
    if (modality == "T1ce") return t1ce;
    if (modality == "T2") return t2;
    if (modality == "FLAIR") return flair;
    throw std::invalid_argument("unknown modality: " + modality);
}

int base_intensity(const std::string& modality) {
    if (modality == "T1") return 100;
    if (modality == "T1ce") return 110;
    if (modality == "T2") return 80;
    return 90;
}

struct Raster {
    // Per atlas voxel: lesion index + 1 and sub-region label, 0 for none.
    std::vector<std::uint8_t> instance, label;
};

Raster rasterize(const PhantomSpec& spec, const AtlasTemplate& atlas, int t) {
    const auto& g = atlas.grid;
    const auto& d = g.dims();
    Raster r{std::vector<std::uint8_t>(g.voxel_count(), 0), std::vector<std::uint8_t>(g.voxel_count(), 0)};
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i) {
                const Vec3 w = g.index_to_world({double(i), double(j), double(k)});
                for (std::size_t n = 0; n < spec.lesions.size(); ++n) {
                    const LesionSpec& l = spec.lesions[n];
                    const double s = l.scales[static_cast<std::size_t>(t)];
                    if (s <= 0.0) continue;
                    const double q = rho2(l, s, w);
                    if (q > 1.0) continue;
                    const std::size_t at = g.linear(i, j, k);
                    r.instance[at] = static_cast<std::uint8_t>(n + 1);
                    r.label[at] = static_cast<std::uint8_t>(subregion_label(spec.pathology, std::sqrt(q)));
                }
            }
    return r;
}

}  // namespace

json LesionSpec::to_json() const {
    return {{"center", center}, {"radii", radii}, {"intensity", intensity}, {"scales", scales}};
}

LesionSpec LesionSpec::from_json(const json& j) {
    if (!j.is_object()) throw std::invalid_argument("lesion: expected an object");
    LesionSpec l;
    l.center = vec_from_json(j.value("center", json()), "center");
    l.radii = vec_from_json(j.value("radii", json()), "radii");
    l.intensity = field<double>(j, "intensity");
    l.scales = field<std::vector<double>>(j, "scales");
    return l;
}

std::string PhantomSpec::atlas() const { return toolbox::model_atlas(pathology); }

void PhantomSpec::validate() const {
    static const std::vector<std::string> kPathologies{"glioma", "postop-glioma", "metastasis", "meningioma"};
    if (std::find(kPathologies.begin(), kPathologies.end(), pathology) == kPathologies.end())
        throw SpecError(case_id + ": unsupported pathology '" + pathology + "'");
    if (timepoints < 1 || timepoints > 3) throw SpecError(case_id + ": timepoints must be 1..3");
    if (lesions.empty()) throw SpecError(case_id + ": no lesions");
    if (pathology != "metastasis" && lesions.size() != 1)
        throw SpecError(case_id + ": " + pathology + " cases have exactly one lesion");
    if (lesions.size() > 255) throw SpecError(case_id + ": too many lesions");
    for (double t : translation)
        if (t != std::round(t)) throw SpecError(case_id + ": native translation must be integral");
    for (std::size_t n = 0; n < lesions.size(); ++n) {
        const LesionSpec& l = lesions[n];
        const std::string who = case_id + ": lesion " + std::to_string(n + 1);
        if (static_cast<int>(l.scales.size()) != timepoints) throw SpecError(who + ": one scale per timepoint");
        bool present = false;
        for (double s : l.scales) {
            if (!(s >= 0.0)) throw SpecError(who + ": scale factors must be positive or 0 (absent)");
            present = present || s > 0.0;
        }
        if (!present) throw SpecError(who + ": absent at every timepoint");
        for (double r : l.radii)
            if (!(r > 0.0)) throw SpecError(who + ": radii must be positive");
        if (!(l.intensity > 0.0)) throw SpecError(who + ": intensity must be positive");
    }

    // Voxel-level checks: every lesion voxel in the brain, every present lesion
    // visible, and no two lesions within one voxel of each other at any
    // timepoint pair (so components, instances and matches coincide).
    const AtlasTemplate& atlas = toolbox::atlas_by_name(this->atlas());
    const auto& g = atlas.grid;
    std::vector<std::vector<std::uint8_t>> footprint(lesions.size(), std::vector<std::uint8_t>(g.voxel_count(), 0));
    for (int t = 0; t < timepoints; ++t) {
        const Raster r = rasterize(*this, atlas, t);
        std::vector<std::size_t> count(lesions.size(), 0);
        for (std::size_t at = 0; at < r.instance.size(); ++at) {
            if (!r.instance[at]) continue;
            const std::size_t n = r.instance[at] - 1u;
            const auto ijk = g.unravel(at);
            if (!atlas.in_brain(g.index_to_world({double(ijk[0]), double(ijk[1]), double(ijk[2])})))
                throw SpecError(case_id + ": lesion " + std::to_string(n + 1) + " extends outside the brain");
            ++count[n];
            footprint[n][at] = 1;
        }
        for (std::size_t n = 0; n < lesions.size(); ++n)
            if (lesions[n].scales[static_cast<std::size_t>(t)] > 0.0 && count[n] == 0)
                throw SpecError(case_id + ": lesion " + std::to_string(n + 1) + " covers no voxel at " +
                                timepoint_id(t));
    }
    for (std::size_t a = 0; a < lesions.size(); ++a)
        for (std::size_t at = 0; at < footprint[a].size(); ++at) {
            if (!footprint[a][at]) continue;
            const auto p = g.unravel(at);
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int i = p[0] + dx, j = p[1] + dy, k = p[2] + dz;
                        if (!g.contains(i, j, k)) continue;
                        for (std::size_t b = a + 1; b < lesions.size(); ++b)
                            if (footprint[b][g.linear(i, j, k)])
                                throw SpecError(case_id + ": lesions " + std::to_string(a + 1) + " and " +
                                                std::to_string(b + 1) + " touch");
                    }
        }
}

json PhantomSpec::to_json() const {
    const auto& g = toolbox::atlas_by_name(atlas()).grid;
    json ls = json::array();
    for (const auto& l : lesions) ls.push_back(l.to_json());
    return {{"case_id", case_id},
            {"pathology", pathology},
            {"timepoints", timepoints},
            {"preprocessed", preprocessed},
            {"seed", seed},
            {"grid", {{"dims", g.dims()}, {"spacing", g.spacing()}}},
            {"native", {{"quarter_turns", quarter_turns}, {"translation", translation}}},
            {"lesions", ls}};
}

PhantomSpec PhantomSpec::from_json(const json& j) {
    if (!j.is_object()) throw std::invalid_argument("spec: expected an object");
    PhantomSpec s;
    s.case_id = field<std::string>(j, "case_id");
    s.pathology = field<std::string>(j, "pathology");
    s.timepoints = field<int>(j, "timepoints");
    s.preprocessed = field<bool>(j, "preprocessed");
    s.seed = field<std::uint64_t>(j, "seed");
    const json native = j.value("native", json::object());
    s.quarter_turns = native.value("quarter_turns", 1);
    if (native.contains("translation")) s.translation = vec_from_json(native["translation"], "native.translation");
    if (!toolbox::is_model_name(s.pathology)) throw std::invalid_argument("pathology: unknown '" + s.pathology + "'");
    if (j.contains("grid")) {
        const auto& g = toolbox::atlas_by_name(s.atlas()).grid;
        const json want{{"dims", g.dims()}, {"spacing", g.spacing()}};
        if (j["grid"] != want) throw std::invalid_argument("grid: does not match the " + s.atlas() + " template");
    }
    const json ls = j.value("lesions", json());
    if (!ls.is_array()) throw std::invalid_argument("missing field 'lesions'");
    for (const auto& l : ls) s.lesions.push_back(LesionSpec::from_json(l));
    return s;
}

int subregion_label(const std::string& pathology, double r) {
    if (pathology == "postop-glioma") return r <= 0.4 ? 4 : r <= 0.75 ? 3 : 2;
    if (pathology == "metastasis") return r <= 0.3 ? 1 : r <= 0.8 ? 3 : 2;
    if (pathology == "meningioma") return r <= 0.85 ? 3 : 2;
    return r <= 0.4 ? 1 : r <= 0.75 ? 3 : 2;
}

int tissue_intensity(const std::string& modality, int anatomy, int lesion_label, double lesion_intensity) {
    if (anatomy <= 0) return 0;
    const int base = base_intensity(modality) + 2 * ((anatomy - 1) % 4);
    if (lesion_label <= 0) return base;
    return base + static_cast<int>(std::lround(contrast(modality).at(static_cast<std::size_t>(lesion_label)) *
                                               lesion_intensity));
}

std::shared_ptr<toolbox::GroundTruth> build_ground_truth(const PhantomSpec& spec) {
    const AtlasTemplate& atlas = toolbox::atlas_by_name(spec.atlas());
    auto truth = std::make_shared<toolbox::GroundTruth>();
    truth->atlas = atlas.name;
    truth->pathology = spec.pathology;
    truth->seed = spec.seed;
    if (!spec.preprocessed) truth->native = toolbox::make_native_frame(atlas, spec.quarter_turns, spec.translation);
    for (int t = 0; t < spec.timepoints; ++t) {
        const std::string tp = PhantomSpec::timepoint_id(t);
        const Raster r = rasterize(spec, atlas, t);
        VoxelVolume labels(atlas.grid, volume::DType::UInt8), inst(atlas.grid, volume::DType::UInt8);
        for (std::size_t at = 0; at < r.label.size(); ++at) {
            labels.data[at] = r.label[at];
            inst.data[at] = r.instance[at];
        }
        labels.meta["space"] = atlas.name;
        labels.meta["timepoint"] = tp;
        inst.meta = labels.meta;
        truth->lesions[tp] = volume::LabelMask(labels, toolbox::model_vocabulary(spec.pathology));
        truth->instances[tp] = inst;
    }
    return truth;
}

std::string volume_path(const std::string& case_id, const std::string& tp, const std::string& modality) {
    return "volumes/" + case_id + "/" + tp + "/" + modality + ".nii";
}

toolbox::CaseBundle phantom_bundle(const PhantomSpec& spec) {
    toolbox::CaseBundle b;
    b.case_id = spec.case_id;
    b.pathology = spec.pathology;
    b.preprocessed = spec.preprocessed;
    b.atlas = spec.atlas();
    for (int t = 0; t < spec.timepoints; ++t) {
        toolbox::TimepointFiles f;
        f.id = PhantomSpec::timepoint_id(t);
        for (const auto& m : toolbox::modality_names()) f.files[m] = volume_path(spec.case_id, f.id, m);
        b.timepoints.push_back(std::move(f));
    }
    return b;
}

Phantom generate_phantom(const PhantomSpec& spec, const std::filesystem::path& root) {
    spec.validate();
    Phantom p{phantom_bundle(spec), build_ground_truth(spec)};
    const AtlasTemplate& atlas = toolbox::atlas_by_name(spec.atlas());
    const auto& g = atlas.grid;
    const auto& d = g.dims();

    // Analytic anatomy per atlas voxel, shared by all timepoints and modalities.
    std::vector<int> anatomy(g.voxel_count(), 0);
    std::vector<std::uint8_t> head(g.voxel_count(), 0);
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i) {
                const Vec3 w = g.index_to_world({double(i), double(j), double(k)});
                anatomy[g.linear(i, j, k)] = toolbox::anatomy_label_at(atlas, w);
                head[g.linear(i, j, k)] = atlas.in_head(w) ? 1 : 0;
            }

    for (const auto& files : p.bundle.timepoints) {
        const auto& labels = p.truth->lesions.at(files.id).grid;
        const auto& inst = p.truth->instances.at(files.id);
        for (const auto& m : toolbox::modality_names()) {
            VoxelVolume img(g, volume::DType::Int16);
            for (std::size_t at = 0; at < img.data.size(); ++at) {
                const int lesion = static_cast<int>(inst.data[at]);
                const double gain = lesion ? spec.lesions[static_cast<std::size_t>(lesion - 1)].intensity : 1.0;
                img.data[at] = static_cast<float>(
                    tissue_intensity(m, anatomy[at], static_cast<int>(labels.data[at]), gain));
            }
            VoxelVolume out;
            if (spec.preprocessed) {
                out = std::move(img);
            } else {
                // Scanner frame: every native voxel takes its nearest atlas voxel, skull shell included.
                const auto& native = *p.truth->native;
                const auto& ng = native.grid;
                const auto& nd = ng.dims();
                out = VoxelVolume(ng, volume::DType::Int16);
                for (int k = 0; k < nd[2]; ++k)
                    for (int j = 0; j < nd[1]; ++j)
                        for (int i = 0; i < nd[0]; ++i) {
                            const Vec3 c = g.world_to_index(
                                native.native_to_atlas.apply(ng.index_to_world({double(i), double(j), double(k)})));
                            const int ai = static_cast<int>(std::floor(c[0] + 0.5));
                            const int aj = static_cast<int>(std::floor(c[1] + 0.5));
                            const int ak = static_cast<int>(std::floor(c[2] + 0.5));
                            if (!g.contains(ai, aj, ak)) continue;
                            const std::size_t at = g.linear(ai, aj, ak);
                            if (anatomy[at]) out.at(i, j, k) = img.data[at];
                            else if (head[at]) out.at(i, j, k) = static_cast<float>(kSkullIntensity);
                        }
            }
            const std::filesystem::path full = root / files.files.at(m);
            std::filesystem::create_directories(full.parent_path());
            volume::write_volume(out, full);
        }
    }
    return p;
}

}  // namespace neuroagent::bench
