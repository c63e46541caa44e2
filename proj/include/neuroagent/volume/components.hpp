#pragma once

#include <optional>
#include <vector>

#include "neuroagent/volume/volume.hpp"

namespace neuroagent::volume {

enum class Connectivity { Six = 6, Eighteen = 18, TwentySix = 26 };

Connectivity connectivity_from_int(int n);

struct ComponentInfo {
    std::size_t voxel_count = 0;
    Index3 bbox_min{};
    Index3 bbox_max{};
    Vec3 centroid{};  // world mm
};

// Component ids are dense 1..K, ordered by descending voxel count; ties go to
// the lexicographically smaller world centroid.
struct ComponentSet {
    VoxelVolume labeling;  // 0 = background
    std::size_t count = 0;
    Connectivity connectivity = Connectivity::TwentySix;
    std::vector<ComponentInfo> components;  // components[id - 1]
};

// foreground_label: nullopt means any nonzero voxel.
ComponentSet connected_components(const LabelMask& mask, std::optional<int> foreground_label = std::nullopt,
                                  Connectivity connectivity = Connectivity::TwentySix);
ComponentSet connected_components(const VoxelVolume& mask, std::optional<int> foreground_label = std::nullopt,
                                  Connectivity connectivity = Connectivity::TwentySix);

namespace serial {
// Breadth-first flood fill.
ComponentSet connected_components(const VoxelVolume& mask, std::optional<int> foreground_label,
                                  Connectivity connectivity);
}  // namespace serial

// Neighbour offsets for the connectivity, excluding the origin.
std::vector<Index3> neighbor_offsets(Connectivity c);

}  // namespace neuroagent::volume
