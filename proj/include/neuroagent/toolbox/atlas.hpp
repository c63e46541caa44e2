#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "neuroagent/toolbox/case.hpp"
#include "neuroagent/volume/volume.hpp"

namespace neuroagent::toolbox {

using volume::Grid;
using volume::LabelMask;
using volume::Vec3;
using volume::VoxelVolume;

// Fractional cut planes of the synthetic lobe atlas, measured across the
// brain's bounding box along y (posterior -> anterior) and z (inferior ->
// superior). Frontal is the anterior part; the posterior part splits into
// parietal (upper) and temporal (lower).
inline constexpr double kFrontalCutY = 0.5;
inline constexpr double kParietalCutZ = 0.45;
inline constexpr int kAnatomySlabs = 4;  // per axis (y, z); x splits by hemisphere
inline constexpr int kAnatomyRegionCount = 2 * kAnatomySlabs * kAnatomySlabs;
inline constexpr int kLobeCount = 6;

// A reference brain grid. The brain is an axis-aligned ellipsoid; the head
// (skull shell) extends `skull_thickness` mm beyond it.
struct AtlasTemplate {
    std::string name;  // "SRI24" or "MNI152"
    Grid grid;
    Vec3 brain_center;
    Vec3 brain_radii;
    double skull_thickness = 3.0;

    bool in_brain(const Vec3& world) const;
    bool in_head(const Vec3& world) const;
    // Fraction of the brain bounding box along each axis, in [0, 1] inside it.
    Vec3 box_fraction(const Vec3& world) const;
};

const AtlasTemplate& sri24();
const AtlasTemplate& mni152();
// Throws std::out_of_range for unknown names.
const AtlasTemplate& atlas_by_name(const std::string& name);
bool is_atlas_name(const std::string& name);

// 1..32 for world points inside the brain, 0 outside.
int anatomy_label_at(const AtlasTemplate& atlas, const Vec3& world);
// 1..6 for world points inside the brain, 0 outside.
int lobe_label_at(const AtlasTemplate& atlas, const Vec3& world);

const std::map<int, std::string>& anatomy_vocabulary();
const std::map<int, std::string>& lobe_vocabulary();

// Rasterised atlas products on the template grid, computed once per template.
struct AtlasVolumes {
    VoxelVolume brain;   // uint8 0/1
    LabelMask anatomy;   // 32 regions covering exactly the brain voxels
    LabelMask lobes;     // 6 lobes covering exactly the brain voxels
};
std::shared_ptr<const AtlasVolumes> atlas_volumes(const std::string& atlas_name);

// Pathology segmentation models.
const std::vector<std::string>& model_names();
bool is_model_name(const std::string& name);
// Tumour sub-region vocabulary produced by a model.
const std::map<int, std::string>& model_vocabulary(const std::string& model);
// Template space a model expects its inputs in.
const std::string& model_atlas(const std::string& model);

// Scanner frame whose world maps onto the atlas world by a quarter-turn
// rotation about z plus an integer translation. The native grid has 0.5 mm
// spacing along its first (flipped) axis and 1 mm elsewhere, so every atlas
// voxel centre is a native voxel centre and nearest-neighbour round trips
// native -> atlas are exact. The grid covers the whole atlas grid.
NativeFrame make_native_frame(const AtlasTemplate& atlas, int quarter_turns, const Vec3& translation);

// "Left Anterior Upper" -> "left_anterior_upper"
std::string slug(const std::string& name);

}  // namespace neuroagent::toolbox
