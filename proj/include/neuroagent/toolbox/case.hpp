#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "neuroagent/volume/grid.hpp"
#include "neuroagent/volume/volume.hpp"

namespace neuroagent::toolbox {

inline const std::vector<std::string>& modality_names() {
    static const std::vector<std::string> kNames{"T1", "T1ce", "T2", "FLAIR"};
    return kNames;
}

struct TimepointFiles {
    std::string id;                             // "t0", "t1", ...
    std::map<std::string, std::string> files;   // modality -> path relative to the dataset root
};

struct CaseBundle {
    std::string case_id;
    std::string pathology;  // glioma, postop-glioma, metastasis, meningioma
    bool preprocessed = true;
    std::string atlas;      // template the case's ground truth lives in
    std::vector<TimepointFiles> timepoints;

    const TimepointFiles* timepoint(const std::string& id) const;
};

// Scanner frame of an unprocessed case.
struct NativeFrame {
    volume::Grid grid;
    volume::Affine native_to_atlas;  // world_native -> world_atlas
};

// Phantom ground truth in the case's atlas space.
struct GroundTruth {
    std::string atlas;
    std::string pathology;
    std::optional<NativeFrame> native;
    // Tumour sub-region labels per timepoint (model vocabulary of the pathology).
    std::map<std::string, volume::LabelMask> lesions;
    // Dense instance ids 1..K per timepoint.
    std::map<std::string, volume::VoxelVolume> instances;
    // Seed for the boundary-noise model.
    std::uint64_t seed = 0;
};

}  // namespace neuroagent::toolbox
