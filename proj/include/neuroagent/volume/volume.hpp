#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "neuroagent/volume/grid.hpp"

namespace neuroagent::volume {

enum class DType : std::uint8_t { UInt8, Int16, Float32 };

std::string to_string(DType d);
std::size_t bytes_per_voxel(DType d);

// A scalar field on a grid. Voxel values are held as float regardless of the
// storage dtype; uint8 and int16 values are integral and exactly representable.
// `meta` carries free-form header fields and is not persisted by the NIfTI writer.
struct VoxelVolume {
    Grid grid;
    DType dtype = DType::Float32;
    std::vector<float> data;
    std::map<std::string, std::string> meta;

    VoxelVolume() = default;
    VoxelVolume(Grid g, DType d) : grid(std::move(g)), dtype(d), data(grid.voxel_count(), 0.0f) {}

    float at(int i, int j, int k) const { return data[grid.linear(i, j, k)]; }
    float& at(int i, int j, int k) { return data[grid.linear(i, j, k)]; }

    std::string meta_or(const std::string& key, const std::string& fallback = {}) const;

    // Throws VolumeError if data length or value range disagrees with dtype.
    void validate() const;

    // Geometry, dtype, and voxel equality; meta is ignored.
    bool same_content(const VoxelVolume& o) const {
        return grid == o.grid && dtype == o.dtype && data == o.data;
    }
};

// Integer label grid plus the id -> name vocabulary. Label 0 is background.
struct LabelMask {
    VoxelVolume grid;
    std::map<int, std::string> vocabulary;

    LabelMask() = default;
    LabelMask(VoxelVolume g, std::map<int, std::string> vocab);

    // Throws VolumeError when a nonzero voxel has no vocabulary entry, label 0
    // is named, or the dtype is not integral.
    void validate() const;
};

std::size_t count_nonzero(const VoxelVolume& v);

}  // namespace neuroagent::volume
