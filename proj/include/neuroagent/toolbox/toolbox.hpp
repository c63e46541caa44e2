#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "neuroagent/toolbox/case.hpp"
#include "neuroagent/toolbox/handles.hpp"
#include "neuroagent/toolbox/result.hpp"
#include "neuroagent/volume/components.hpp"

namespace neuroagent::toolbox {

struct ToolboxConfig {
    volume::Connectivity connectivity = volume::Connectivity::TwentySix;
    double match_threshold = 0.25;
    // Probability that a lesion boundary is eroded or dilated by one voxel.
    double noise = 0.0;
    // Where segmentation files, tables and snapshots are written. Without it
    // files are only named, except visualisations, which go to a temp dir.
    std::optional<std::filesystem::path> output_dir;
};

// Thread-safe cache of decoded case files shared by concurrent episodes.
class VolumeCache {
public:
    // Throws volume::VolumeError subclasses on read failure.
    std::shared_ptr<const volume::VoxelVolume> load(const std::filesystem::path& path);

private:
    std::mutex mu_;
    std::map<std::string, std::shared_ptr<const volume::VoxelVolume>> entries_;
};

struct CaseContext {
    CaseBundle bundle;
    std::shared_ptr<const GroundTruth> truth;
    std::filesystem::path root;          // bundle file paths are relative to this
    std::shared_ptr<VolumeCache> cache;  // optional
};

// Segmentation inputs; absent entries produce missing_input.
struct PathologyInputs {
    std::optional<std::string> t1, t1ce, t2, flair;
};

// The simulated tool suite bound to one episode's case and handle store.
// Every method returns a ToolResult; none throws for agent-caused errors.
class Toolbox {
public:
    Toolbox(const CaseContext& ctx, HandleStore& store, ToolboxConfig cfg = {});

    ToolResult load_image(const std::string& path);
    ToolResult skull_strip(const std::string& image);
    // target: "atlas:SRI24", "atlas:MNI152" or an image handle id.
    ToolResult register_image(const std::string& image, const std::string& target);
    ToolResult resample(const std::string& image, const volume::Vec3& spacing);
    // reference: atlas name (with or without "atlas:") or an image/mask handle id.
    ToolResult verify_registration(const std::string& image, const std::string& reference);
    ToolResult segment_pathology(const PathologyInputs& inputs, const std::string& model);
    ToolResult segment_anatomy(const std::string& image);
    ToolResult list_labels(const std::string& scope);
    ToolResult enumerate_lesions(const std::string& mask);
    ToolResult match_lesions(const std::string& mask_t0, const std::string& mask_t1,
                             std::optional<double> threshold = std::nullopt);
    ToolResult lesion_geometry(const std::string& mask, int lesion_id);
    ToolResult lesion_features(const std::string& mask, const std::string& image, int lesion_id);
    ToolResult localize(const std::string& mask, int lesion_id);
    ToolResult visualize(const std::string& image, const std::optional<std::string>& mask);

    HandleStore& store() { return store_; }
    const CaseContext& context() const { return ctx_; }
    const ToolboxConfig& config() const { return cfg_; }

private:
    const CaseContext& ctx_;
    HandleStore& store_;
    ToolboxConfig cfg_;
};

// Ground-truth lesions with each instance independently eroded or dilated by
// one voxel with probability `level`. Instance count and adjacency are kept.
volume::LabelMask apply_boundary_noise(const volume::LabelMask& lesions, const volume::VoxelVolume& instances,
                                       const volume::VoxelVolume& brain, double level, std::uint64_t seed);

// Shape descriptors of one lesion's voxel set.
struct ShapeFeatures {
    double volume_mm3 = 0.0;
    double surface_area_mm2 = 0.0;  // exposed voxel faces
    double sphericity = 0.0;
    double elongation = 1.0;        // sqrt(lambda_2 / lambda_1) of the world-coordinate covariance
    double flatness = 1.0;          // sqrt(lambda_3 / lambda_1)
};
ShapeFeatures shape_features(const volume::VoxelVolume& labeling, int id);

}  // namespace neuroagent::toolbox
