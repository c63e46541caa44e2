#pragma once

// Brute-force reference computations used by the tests. Nothing here calls
// into the library's kernels.

#include <array>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>
#include <tuple>
#include <vector>

#include "neuroagent/volume/volume.hpp"

namespace neuroagent::testing {

using Voxel = std::array<int, 3>;

inline bool adjacent(const Voxel& a, const Voxel& b, int connectivity) {
    const int dx = std::abs(a[0] - b[0]), dy = std::abs(a[1] - b[1]), dz = std::abs(a[2] - b[2]);
    if (dx > 1 || dy > 1 || dz > 1) return false;
    const int m = dx + dy + dz;
    if (m == 0) return false;
    if (connectivity == 6) return m == 1;
    if (connectivity == 18) return m <= 2;
    return true;
}

// Label propagation to a fixpoint: every foreground voxel repeatedly takes the
// minimum label among its neighbours. O(n^2) per sweep, fine for small grids.
inline std::vector<std::set<Voxel>> flood_fill_partition(const volume::VoxelVolume& v, int connectivity) {
    const auto& d = v.grid.dims();
    std::vector<Voxel> fg;
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i)
                if (v.at(i, j, k) != 0.0f) fg.push_back({i, j, k});
    std::map<Voxel, int> label;
    for (std::size_t n = 0; n < fg.size(); ++n) label[fg[n]] = static_cast<int>(n);
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& a : fg) {
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const Voxel b{a[0] + dx, a[1] + dy, a[2] + dz};
                        auto it = label.find(b);
                        if (it == label.end() || !adjacent(a, b, connectivity)) continue;
                        if (it->second < label[a]) {
                            label[a] = it->second;
                            changed = true;
                        }
                    }
        }
    }
    std::map<int, std::set<Voxel>> groups;
    for (const auto& [vx, l] : label) groups[l].insert(vx);
    std::vector<std::set<Voxel>> out;
    for (auto& [l, s] : groups) out.push_back(std::move(s));
    return out;
}

inline std::set<Voxel> voxel_set(const volume::VoxelVolume& v) {
    std::set<Voxel> s;
    const auto& d = v.grid.dims();
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i)
                if (v.at(i, j, k) != 0.0f) s.insert({i, j, k});
    return s;
}

inline double set_iou(const std::set<Voxel>& a, const std::set<Voxel>& b) {
    std::size_t inter = 0;
    for (const auto& x : a) inter += b.count(x);
    const std::size_t uni = a.size() + b.size() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Exposed faces of a voxel set, counted per axis.
inline std::array<std::size_t, 3> exposed_faces(const std::set<Voxel>& s) {
    std::array<std::size_t, 3> faces{};
    for (const auto& v : s)
        for (int a = 0; a < 3; ++a)
            for (int sgn : {-1, 1}) {
                Voxel n = v;
                n[a] += sgn;
                if (!s.count(n)) ++faces[a];
            }
    return faces;
}

}  // namespace neuroagent::testing
