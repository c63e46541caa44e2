#include "neuroagent/volume/components.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "neuroagent/volume/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace neuroagent::volume {

Connectivity connectivity_from_int(int n) {
    switch (n) {
        case 6: return Connectivity::Six;
        case 18: return Connectivity::Eighteen;
        case 26: return Connectivity::TwentySix;
        default: throw VolumeError("connectivity must be 6, 18 or 26");
    }
}

std::vector<Index3> neighbor_offsets(Connectivity c) {
    std::vector<Index3> out;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
                if (manhattan == 0) continue;
                if (c == Connectivity::Six && manhattan > 1) continue;
                if (c == Connectivity::Eighteen && manhattan > 2) continue;
                out.push_back({dx, dy, dz});
            }
    return out;
}

namespace {

bool is_foreground(float v, const std::optional<int>& label) {
    if (label) return static_cast<int>(v) == *label && v != 0.0f;
    return v != 0.0f;
}

struct Accum {
    std::size_t count = 0;
    Index3 lo{};
    Index3 hi{};
    std::array<double, 3> sum{};  // index-space sums
    std::size_t first = 0;        // smallest linear index, final tie-break
};

// Turns provisional labels (any positive ints, one per component) into the
// canonical ComponentSet ordering.
ComponentSet finalize(const Grid& grid, const std::vector<std::int64_t>& provisional, std::size_t provisional_count,
                      Connectivity connectivity) {
    std::vector<Accum> acc(provisional_count);
    for (std::size_t n = 0; n < provisional.size(); ++n) {
        const auto p = provisional[n];
        if (p < 0) continue;
        auto& a = acc[static_cast<std::size_t>(p)];
        const Index3 ijk = grid.unravel(n);
        if (a.count == 0) {
            a.lo = a.hi = ijk;
            a.first = n;
        }
        for (int d = 0; d < 3; ++d) {
            a.lo[d] = std::min(a.lo[d], ijk[d]);
            a.hi[d] = std::max(a.hi[d], ijk[d]);
            a.sum[d] += ijk[d];
        }
        ++a.count;
    }
    std::vector<ComponentInfo> infos(provisional_count);
    std::vector<std::size_t> firsts(provisional_count);
    for (std::size_t p = 0; p < provisional_count; ++p) {
        const auto& a = acc[p];
        auto& info = infos[p];
        info.voxel_count = a.count;
        info.bbox_min = a.lo;
        info.bbox_max = a.hi;
        const Vec3 mean_idx{a.sum[0] / a.count, a.sum[1] / a.count, a.sum[2] / a.count};
        info.centroid = grid.index_to_world(mean_idx);
        firsts[p] = a.first;
    }
    std::vector<std::size_t> order(provisional_count);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        if (infos[x].voxel_count != infos[y].voxel_count) return infos[x].voxel_count > infos[y].voxel_count;
        if (infos[x].centroid != infos[y].centroid) return infos[x].centroid < infos[y].centroid;
        return firsts[x] < firsts[y];
    });
    std::vector<int> rank(provisional_count);
    for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = static_cast<int>(r) + 1;

    ComponentSet out;
    out.connectivity = connectivity;
    out.count = provisional_count;
    out.labeling = VoxelVolume(grid, provisional_count <= 32767 ? DType::Int16 : DType::Float32);
    for (std::size_t n = 0; n < provisional.size(); ++n)
        if (provisional[n] >= 0) out.labeling.data[n] = static_cast<float>(rank[static_cast<std::size_t>(provisional[n])]);
    out.components.reserve(provisional_count);
    for (std::size_t r = 0; r < order.size(); ++r) out.components.push_back(infos[order[r]]);
    return out;
}

std::int64_t find_root(std::vector<std::int64_t>& parent, std::int64_t x) {
    while (parent[x] != x) {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    return x;
}

void unite(std::vector<std::int64_t>& parent, std::int64_t a, std::int64_t b) {
    a = find_root(parent, a);
    b = find_root(parent, b);
    if (a == b) return;
    if (a < b)
        parent[b] = a;
    else
        parent[a] = b;
}

// Only "backward" neighbours (earlier in linear order) are needed for union-find.
std::vector<Index3> backward_offsets(Connectivity c) {
    std::vector<Index3> out;
    for (const auto& o : neighbor_offsets(c)) {
        if (o[2] < 0 || (o[2] == 0 && (o[1] < 0 || (o[1] == 0 && o[0] < 0)))) out.push_back(o);
    }
    return out;
}

}  // namespace

ComponentSet connected_components(const VoxelVolume& mask, std::optional<int> foreground_label,
                                  Connectivity connectivity) {
    const Grid& g = mask.grid;
    const auto& d = g.dims();
    const auto n = static_cast<std::int64_t>(g.voxel_count());
    std::vector<std::int64_t> parent(static_cast<std::size_t>(n), -1);
#pragma omp parallel for schedule(static)
    for (std::int64_t q = 0; q < n; ++q)
        if (is_foreground(mask.data[q], foreground_label)) parent[q] = q;

    const auto offsets = backward_offsets(connectivity);

    // Pass 1: slabs of z-planes are labelled independently; every union stays
    // inside one slab, so slabs never touch each other's trees.
    int slabs = 1;
#ifdef _OPENMP
    slabs = std::max(1, std::min(omp_get_max_threads(), d[2]));
#endif
    std::vector<int> bounds(static_cast<std::size_t>(slabs) + 1);
    for (int s = 0; s <= slabs; ++s) bounds[s] = static_cast<int>(static_cast<std::int64_t>(d[2]) * s / slabs);

#pragma omp parallel for schedule(static, 1)
    for (int s = 0; s < slabs; ++s) {
        for (int k = bounds[s]; k < bounds[s + 1]; ++k)
            for (int j = 0; j < d[1]; ++j)
                for (int i = 0; i < d[0]; ++i) {
                    const auto q = static_cast<std::int64_t>(g.linear(i, j, k));
                    if (parent[q] < 0) continue;
                    for (const auto& o : offsets) {
                        const int ni = i + o[0], nj = j + o[1], nk = k + o[2];
                        if (nk < bounds[s] || !g.contains(ni, nj, nk)) continue;
                        const auto nq = static_cast<std::int64_t>(g.linear(ni, nj, nk));
                        if (parent[nq] >= 0) unite(parent, q, nq);
                    }
                }
    }

    // Pass 2: stitch each slab to the plane just below it.
    for (int s = 1; s < slabs; ++s) {
        const int k = bounds[s];
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i) {
                const auto q = static_cast<std::int64_t>(g.linear(i, j, k));
                if (parent[q] < 0) continue;
                for (const auto& o : offsets) {
                    if (o[2] != -1) continue;
                    const int ni = i + o[0], nj = j + o[1];
                    if (!g.contains(ni, nj, k - 1)) continue;
                    const auto nq = static_cast<std::int64_t>(g.linear(ni, nj, k - 1));
                    if (parent[nq] >= 0) unite(parent, q, nq);
                }
            }
    }

    std::vector<std::int64_t> provisional(static_cast<std::size_t>(n), -1);
    std::vector<std::int64_t> root_id(static_cast<std::size_t>(n), -1);
    std::size_t next = 0;
    for (std::int64_t q = 0; q < n; ++q) {
        if (parent[q] < 0) continue;
        const auto r = find_root(parent, q);
        if (root_id[r] < 0) root_id[r] = static_cast<std::int64_t>(next++);
        provisional[q] = root_id[r];
    }
    return finalize(g, provisional, next, connectivity);
}

ComponentSet connected_components(const LabelMask& mask, std::optional<int> foreground_label,
                                  Connectivity connectivity) {
    return connected_components(mask.grid, foreground_label, connectivity);
}

namespace serial {

ComponentSet connected_components(const VoxelVolume& mask, std::optional<int> foreground_label,
                                  Connectivity connectivity) {
    const Grid& g = mask.grid;
    const auto offsets = neighbor_offsets(connectivity);
    const std::size_t n = g.voxel_count();
    std::vector<std::int64_t> provisional(n, -1);
    std::size_t next = 0;
    std::deque<std::size_t> queue;
    for (std::size_t seed = 0; seed < n; ++seed) {
        if (provisional[seed] >= 0 || !is_foreground(mask.data[seed], foreground_label)) continue;
        const auto id = static_cast<std::int64_t>(next++);
        provisional[seed] = id;
        queue.push_back(seed);
        while (!queue.empty()) {
            const std::size_t q = queue.front();
            queue.pop_front();
            const Index3 ijk = g.unravel(q);
            for (const auto& o : offsets) {
                const int ni = ijk[0] + o[0], nj = ijk[1] + o[1], nk = ijk[2] + o[2];
                if (!g.contains(ni, nj, nk)) continue;
                const std::size_t nq = g.linear(ni, nj, nk);
                if (provisional[nq] >= 0 || !is_foreground(mask.data[nq], foreground_label)) continue;
                provisional[nq] = id;
                queue.push_back(nq);
            }
        }
    }
    return finalize(g, provisional, next, connectivity);
}

}  // namespace serial

}  // namespace neuroagent::volume
