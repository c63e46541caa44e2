#pragma once

// Hand-built phantom cases for toolbox and kernel tests. Lesions are balls
// rasterised directly on the atlas grid; raw scans are sampled onto the native
// grid by explicit nearest-voxel lookup, without library resampling.

#include <cmath>
#include <filesystem>
#include <memory>
#include <string>
#include <unistd.h>
#include <vector>

#include "neuroagent/toolbox/atlas.hpp"
#include "neuroagent/toolbox/toolbox.hpp"
#include "neuroagent/volume/nifti.hpp"

namespace neuroagent::testing {

struct Ball {
    volume::Vec3 center;  // world mm, atlas space
    double radius;
};

inline std::filesystem::path scratch_dir(const std::string& tag) {
    auto p = std::filesystem::temp_directory_path() / ("na_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

// Sub-region label for a point at distance d from a ball of radius r.
inline int ball_label(double d, double r) {
    if (d <= 0.4 * r) return 1;
    if (d <= 0.75 * r) return 3;
    return 2;
}

struct FixtureCase {
    std::filesystem::path root;
    toolbox::CaseContext ctx;
    std::shared_ptr<toolbox::GroundTruth> truth;
    // Skull-stripped atlas-space images per timepoint and modality.
    std::map<std::string, std::map<std::string, volume::VoxelVolume>> atlas_images;
};

inline float modality_offset(const std::string& m) {
    if (m == "T1") return 0.0f;
    if (m == "T1ce") return 10.0f;
    if (m == "T2") return 20.0f;
    return 30.0f;
}

inline FixtureCase make_fixture(const std::string& tag, const std::string& pathology, bool preprocessed,
                                const std::vector<std::vector<Ball>>& lesions_per_tp, int quarter_turns = 1,
                                const volume::Vec3& translation = {3.0, -2.0, 1.0}) {
    FixtureCase fc;
    fc.root = scratch_dir(tag);
    const std::string atlas_name = pathology == "postop-glioma" ? "MNI152" : "SRI24";
    const toolbox::AtlasTemplate& atlas = toolbox::atlas_by_name(atlas_name);
    auto truth = std::make_shared<toolbox::GroundTruth>();
    truth->atlas = atlas_name;
    truth->pathology = pathology;
    truth->seed = 1234;
    if (!preprocessed) truth->native = toolbox::make_native_frame(atlas, quarter_turns, translation);

    toolbox::CaseBundle bundle;
    bundle.case_id = tag;
    bundle.pathology = pathology;
    bundle.preprocessed = preprocessed;
    bundle.atlas = atlas_name;

    const auto& g = atlas.grid;
    const auto& d = g.dims();
    for (std::size_t t = 0; t < lesions_per_tp.size(); ++t) {
        const std::string tp = "t" + std::to_string(t);
        volume::VoxelVolume labels(g, volume::DType::UInt8), inst(g, volume::DType::UInt8);
        volume::VoxelVolume head(g, volume::DType::Int16);  // unstripped T1 intensities
        for (int k = 0; k < d[2]; ++k)
            for (int j = 0; j < d[1]; ++j)
                for (int i = 0; i < d[0]; ++i) {
                    const volume::Vec3 w = g.index_to_world({double(i), double(j), double(k)});
                    for (std::size_t b = 0; b < lesions_per_tp[t].size(); ++b) {
                        const Ball& ball = lesions_per_tp[t][b];
                        const double dist = std::hypot(w[0] - ball.center[0], w[1] - ball.center[1],
                                                       w[2] - ball.center[2]);
                        if (dist <= ball.radius && atlas.in_brain(w)) {
                            labels.at(i, j, k) = static_cast<float>(ball_label(dist, ball.radius));
                            inst.at(i, j, k) = static_cast<float>(b + 1);
                        }
                    }
                    if (atlas.in_brain(w)) {
                        head.at(i, j, k) = 100.0f + 20.0f * labels.at(i, j, k);
                    } else if (atlas.in_head(w)) {
                        head.at(i, j, k) = 40.0f;
                    }
                }
        labels.meta["space"] = atlas_name;
        labels.meta["timepoint"] = tp;
        truth->lesions[tp] = volume::LabelMask(labels, toolbox::model_vocabulary(pathology));
        truth->instances[tp] = inst;

        toolbox::TimepointFiles files;
        files.id = tp;
        for (const auto& m : toolbox::modality_names()) {
            volume::VoxelVolume stripped(g, volume::DType::Int16);
            for (std::size_t n = 0; n < head.data.size(); ++n)
                if (head.data[n] >= 100.0f) stripped.data[n] = head.data[n] + modality_offset(m);
            fc.atlas_images[tp][m] = stripped;

            volume::VoxelVolume file_vol;
            if (preprocessed) {
                file_vol = stripped;
            } else {
                const auto& ng = truth->native->grid;
                file_vol = volume::VoxelVolume(ng, volume::DType::Int16);
                const auto& nd = ng.dims();
                for (int k = 0; k < nd[2]; ++k)
                    for (int j = 0; j < nd[1]; ++j)
                        for (int i = 0; i < nd[0]; ++i) {
                            const auto wa = truth->native->native_to_atlas.apply(
                                ng.index_to_world({double(i), double(j), double(k)}));
                            const auto c = g.world_to_index(wa);
                            const int ai = static_cast<int>(std::floor(c[0] + 0.5));
                            const int aj = static_cast<int>(std::floor(c[1] + 0.5));
                            const int ak = static_cast<int>(std::floor(c[2] + 0.5));
                            if (!g.contains(ai, aj, ak)) continue;
                            const float h = head.at(ai, aj, ak);
                            file_vol.at(i, j, k) = h >= 100.0f ? h + modality_offset(m) : h;
                        }
            }
            const std::string rel = tag + "/" + tp + "/" + m + ".nii";
            std::filesystem::create_directories((fc.root / rel).parent_path());
            volume::write_volume(file_vol, fc.root / rel);
            files.files[m] = rel;
        }
        bundle.timepoints.push_back(files);
    }
    fc.truth = truth;
    fc.ctx.bundle = bundle;
    fc.ctx.truth = truth;
    fc.ctx.root = fc.root;
    return fc;
}

}  // namespace neuroagent::testing
