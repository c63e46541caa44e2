#pragma once

// Synthetic phantom cases. A case is an analytic brain (the atlas ellipsoid)
// carrying ellipsoidal lesions whose size may change between timepoints.
// Everything here is a pure function of the PhantomSpec.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "neuroagent/toolbox/case.hpp"
#include "neuroagent/volume/grid.hpp"

namespace neuroagent::bench {

using nlohmann::json;
using volume::Vec3;

struct SpecError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LesionSpec {
    Vec3 center{};  // atlas world mm
    Vec3 radii{};   // mm, at scale 1
    double intensity = 1.0;  // multiplies the lesion contrast of every modality
    // One entry per timepoint; 0 means the lesion is absent there.
    std::vector<double> scales;

    json to_json() const;
    static LesionSpec from_json(const json& j);
    bool operator==(const LesionSpec&) const = default;
};

struct PhantomSpec {
    std::string case_id;
    std::string pathology;  // glioma, postop-glioma, metastasis, meningioma
    int timepoints = 1;
    bool preprocessed = true;
    std::uint64_t seed = 0;
    int quarter_turns = 1;             // native frame of unprocessed cases
    Vec3 translation{3.0, -2.0, 1.0};  // integer mm
    std::vector<LesionSpec> lesions;

    // Template the pathology model works in.
    std::string atlas() const;
    static std::string timepoint_id(int t) { return "t" + std::to_string(t); }

    // Throws SpecError: unknown pathology, timepoints outside 1..3, a scale
    // vector of the wrong length or with negative entries, a lesion absent
    // everywhere, a lesion voxel outside the brain, touching lesions, or a
    // non-metastasis case without exactly one lesion.
    void validate() const;

    json to_json() const;
    // Throws std::invalid_argument naming the offending field.
    static PhantomSpec from_json(const json& j);
    bool operator==(const PhantomSpec&) const = default;
};

// Sub-region label of a lesion voxel at normalised ellipsoid radius r in [0, 1].
int subregion_label(const std::string& pathology, double r);

// Intensity of a voxel of `modality` in an atlas-space, skull-stripped image.
// `anatomy` is the region label (0 outside the brain), `lesion_label` the
// sub-region (0 for healthy tissue).
int tissue_intensity(const std::string& modality, int anatomy, int lesion_label, double lesion_intensity);
// Skull shell intensity of unprocessed scans.
inline constexpr int kSkullIntensity = 40;

// Ground truth in the atlas: sub-region labels and instance ids (spec lesion
// index + 1) per timepoint, and the native frame for unprocessed cases.
std::shared_ptr<toolbox::GroundTruth> build_ground_truth(const PhantomSpec& spec);

// Relative path of a modality file under the dataset root.
std::string volume_path(const std::string& case_id, const std::string& tp, const std::string& modality);

struct Phantom {
    toolbox::CaseBundle bundle;
    std::shared_ptr<toolbox::GroundTruth> truth;
};

// Validates the phantom spec, writes every timepoint's four modalities below `root`
// and returns the bundle. Throws SpecError or volume::IoError.
Phantom generate_phantom(const PhantomSpec& spec, const std::filesystem::path& root);
// The bundle without touching the file system.
toolbox::CaseBundle phantom_bundle(const PhantomSpec& spec);

}  // namespace neuroagent::bench
