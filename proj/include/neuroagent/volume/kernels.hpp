#pragma once

#include <cstdint>
#include <map>

#include "neuroagent/volume/volume.hpp"

namespace neuroagent::volume {

enum class Interpolation { Nearest, Trilinear };

// Resample onto a grid with the same orientation and the requested spacing.
// Output dims are ceil(dim * old_spacing / new_spacing); the outer voxel edges
// stay aligned with the input's.
VoxelVolume resample(const VoxelVolume& volume, const Vec3& spacing, Interpolation interp);
// Label data: nearest only, trilinear throws InterpolationError.
LabelMask resample(const LabelMask& mask, const Vec3& spacing, Interpolation interp);

// Pull-back resampling: every target voxel centre q samples the source at
// world point target_to_source(q). Samples outside the source extent are 0.
VoxelVolume apply_affine(const VoxelVolume& source, const Affine& target_to_source,
                         const Grid& target, Interpolation interp);
LabelMask apply_affine(const LabelMask& source, const Affine& target_to_source, const Grid& target,
                       Interpolation interp);

// |A ∩ B| / |A ∪ B| over nonzero voxels; 0 when both are empty.
double overlap_iou(const VoxelVolume& a, const VoxelVolume& b);

struct OverlapCounts {
    std::uint64_t intersection = 0;
    std::uint64_t uni = 0;
};
OverlapCounts overlap_counts(const VoxelVolume& a, const VoxelVolume& b);

// Voxel count per integer value (background included).
std::map<int, std::uint64_t> label_histogram(const VoxelVolume& v);

// Voxels where `mask` is zero are set to zero.
VoxelVolume mask_multiply(const VoxelVolume& v, const VoxelVolume& mask);

// Throws GridError unless the two grids are identical.
void require_same_grid(const Grid& a, const Grid& b, const char* what);

// Single-threaded reference implementations kept for testing and benchmarks.
namespace serial {
VoxelVolume apply_affine(const VoxelVolume& source, const Affine& target_to_source,
                         const Grid& target, Interpolation interp);
VoxelVolume resample(const VoxelVolume& volume, const Vec3& spacing, Interpolation interp);
OverlapCounts overlap_counts(const VoxelVolume& a, const VoxelVolume& b);
std::map<int, std::uint64_t> label_histogram(const VoxelVolume& v);
}  // namespace serial

}  // namespace neuroagent::volume
