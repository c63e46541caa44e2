#pragma once

#include <filesystem>

#include "neuroagent/volume/volume.hpp"

namespace neuroagent::volume {

// Single-file NIfTI-1 subset: little-endian, vox_offset 352, datatype 2/4/16,
// geometry taken from srow_x/y/z. Everything else is written as zero.
inline constexpr std::size_t kNiftiHeaderSize = 348;
inline constexpr std::size_t kNiftiVoxOffset = 352;

VoxelVolume read_volume(const std::filesystem::path& path);
void write_volume(const VoxelVolume& volume, const std::filesystem::path& path);

std::vector<char> encode_nifti(const VoxelVolume& volume);
VoxelVolume decode_nifti(const std::vector<char>& bytes, const std::string& source = "<memory>");

}  // namespace neuroagent::volume
