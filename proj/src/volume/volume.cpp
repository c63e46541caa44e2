#include "neuroagent/volume/volume.hpp"

#include <cmath>

#include "neuroagent/volume/errors.hpp"

namespace neuroagent::volume {

std::string to_string(DType d) {
    switch (d) {
        case DType::UInt8: return "uint8";
        case DType::Int16: return "int16";
        case DType::Float32: return "float32";
    }
    return "unknown";
}

std::size_t bytes_per_voxel(DType d) {
    switch (d) {
        case DType::UInt8: return 1;
        case DType::Int16: return 2;
        case DType::Float32: return 4;
    }
    return 0;
}

std::string VoxelVolume::meta_or(const std::string& key, const std::string& fallback) const {
    auto it = meta.find(key);
    return it == meta.end() ? fallback : it->second;
}

void VoxelVolume::validate() const {
    if (data.size() != grid.voxel_count()) throw VolumeError("data length does not match dims");
    if (dtype == DType::Float32) return;
    const float lo = dtype == DType::UInt8 ? 0.0f : -32768.0f;
    const float hi = dtype == DType::UInt8 ? 255.0f : 32767.0f;
    for (float v : data) {
        if (v < lo || v > hi || std::nearbyint(v) != v)
            throw VolumeError("value out of range for " + to_string(dtype));
    }
}

LabelMask::LabelMask(VoxelVolume g, std::map<int, std::string> vocab)
    : grid(std::move(g)), vocabulary(std::move(vocab)) {}

void LabelMask::validate() const {
    if (grid.dtype == DType::Float32) throw VolumeError("label mask must be uint8 or int16");
    grid.validate();
    if (vocabulary.count(0)) throw VolumeError("label 0 is reserved for background");
    for (float v : grid.data) {
        const int id = static_cast<int>(v);
        if (id != 0 && !vocabulary.count(id))
            throw VolumeError("label " + std::to_string(id) + " missing from vocabulary");
    }
}

std::size_t count_nonzero(const VoxelVolume& v) {
    std::size_t n = 0;
    for (float x : v.data) n += (x != 0.0f);
    return n;
}

}  // namespace neuroagent::volume
