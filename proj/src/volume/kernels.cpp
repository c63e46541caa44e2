#include "neuroagent/volume/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "neuroagent/volume/errors.hpp"

namespace neuroagent::volume {

namespace {

float store_value(double v, DType d) {
    switch (d) {
        case DType::UInt8: return static_cast<float>(std::clamp(std::nearbyint(v), 0.0, 255.0));
        case DType::Int16: return static_cast<float>(std::clamp(std::nearbyint(v), -32768.0, 32767.0));
        case DType::Float32: return static_cast<float>(v);
    }
    return 0.0f;
}

// Value of `src` at continuous index c; 0 outside the extent.
float sample(const VoxelVolume& src, const Vec3& c, Interpolation interp) {
    const auto& d = src.grid.dims();
    if (interp == Interpolation::Nearest) {
        const int i = static_cast<int>(std::floor(c[0] + 0.5));
        const int j = static_cast<int>(std::floor(c[1] + 0.5));
        const int k = static_cast<int>(std::floor(c[2] + 0.5));
        if (!src.grid.contains(i, j, k)) return 0.0f;
        return src.at(i, j, k);
    }
    for (int a = 0; a < 3; ++a)
        if (c[a] < -0.5 || c[a] > d[a] - 0.5) return 0.0f;
    std::array<int, 3> lo{};
    std::array<double, 3> w{};
    for (int a = 0; a < 3; ++a) {
        const double x = std::clamp(c[a], 0.0, static_cast<double>(d[a] - 1));
        lo[a] = std::min(static_cast<int>(std::floor(x)), d[a] - 1);
        w[a] = x - lo[a];
    }
    double acc = 0.0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                const double wt = (dx ? w[0] : 1 - w[0]) * (dy ? w[1] : 1 - w[1]) * (dz ? w[2] : 1 - w[2]);
                if (wt == 0.0) continue;
                const int i = std::min(lo[0] + dx, d[0] - 1);
                const int j = std::min(lo[1] + dy, d[1] - 1);
                const int k = std::min(lo[2] + dz, d[2] - 1);
                acc += wt * src.at(i, j, k);
            }
    return store_value(acc, src.dtype);
}

Grid resampled_grid(const Grid& g, const Vec3& spacing) {
    for (double s : spacing)
        if (!(s > 0.0)) throw VolumeError("target spacing must be positive");
    const Vec3 old_sp = g.spacing();
    Index3 dims{};
    Vec3 first{};  // continuous source index of the first output voxel
    for (int a = 0; a < 3; ++a) {
        const double extent = g.dims()[a] * old_sp[a] / spacing[a];
        dims[a] = std::max(1, static_cast<int>(std::ceil(extent - 1e-9)));
        first[a] = 0.5 * spacing[a] / old_sp[a] - 0.5;
    }
    Affine affine = g.affine();
    for (int c = 0; c < 3; ++c)
        for (int r = 0; r < 3; ++r) affine.m[r][c] = affine.m[r][c] / old_sp[c] * spacing[c];
    const Vec3 origin = g.index_to_world(first);
    for (int r = 0; r < 3; ++r) affine.m[r][3] = origin[r];
    return Grid(dims, affine);
}

template <bool Parallel>
VoxelVolume resample_impl(const VoxelVolume& volume, const Vec3& spacing, Interpolation interp) {
    const Grid out_grid = resampled_grid(volume.grid, spacing);
    VoxelVolume out(out_grid, volume.dtype);
    out.meta = volume.meta;
    const Vec3 old_sp = volume.grid.spacing();
    const Vec3 ratio{spacing[0] / old_sp[0], spacing[1] / old_sp[1], spacing[2] / old_sp[2]};
    const auto& d = out_grid.dims();
    const auto& in_dims = volume.grid.dims();
#pragma omp parallel for collapse(2) schedule(static) if (Parallel)
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i) {
                // The ceil rule can put the last centre just past the input
                // extent; those voxels take the edge value.
                Vec3 c{(i + 0.5) * ratio[0] - 0.5, (j + 0.5) * ratio[1] - 0.5, (k + 0.5) * ratio[2] - 0.5};
                for (int a = 0; a < 3; ++a) c[a] = std::clamp(c[a], 0.0, static_cast<double>(in_dims[a] - 1));
                out.data[out_grid.linear(i, j, k)] = sample(volume, c, interp);
            }
    return out;
}

template <bool Parallel>
VoxelVolume apply_affine_impl(const VoxelVolume& source, const Affine& target_to_source, const Grid& target,
                              Interpolation interp) {
    (void)target_to_source.inverse();  // singular transforms are rejected
    // target index -> source index in one affine.
    const Affine index_map = source.grid.affine().inverse().compose(target_to_source.compose(target.affine()));
    VoxelVolume out(target, source.dtype);
    out.meta = source.meta;
    const auto& d = target.dims();
#pragma omp parallel for collapse(2) schedule(static) if (Parallel)
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i) {
                const Vec3 c = index_map.apply({static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)});
                out.data[target.linear(i, j, k)] = sample(source, c, interp);
            }
    return out;
}

template <bool Parallel>
OverlapCounts overlap_impl(const VoxelVolume& a, const VoxelVolume& b) {
    require_same_grid(a.grid, b.grid, "overlap");
    std::uint64_t inter = 0;
    std::uint64_t uni = 0;
    const auto n = static_cast<std::int64_t>(a.data.size());
#pragma omp parallel for reduction(+ : inter, uni) schedule(static) if (Parallel)
    for (std::int64_t q = 0; q < n; ++q) {
        const bool x = a.data[q] != 0.0f;
        const bool y = b.data[q] != 0.0f;
        inter += (x && y);
        uni += (x || y);
    }
    return {inter, uni};
}

template <bool Parallel>
std::map<int, std::uint64_t> histogram_impl(const VoxelVolume& v) {
    std::map<int, std::uint64_t> out;
    if (v.data.empty()) return out;
    const auto [mn, mx] = std::minmax_element(v.data.begin(), v.data.end());
    const int lo = static_cast<int>(std::floor(*mn));
    const int hi = static_cast<int>(std::floor(*mx));
    const std::size_t bins = static_cast<std::size_t>(hi - lo) + 1;
    std::vector<std::uint64_t> counts(bins, 0);
    std::uint64_t* c = counts.data();
    const auto n = static_cast<std::int64_t>(v.data.size());
#pragma omp parallel for reduction(+ : c[:bins]) schedule(static) if (Parallel)
    for (std::int64_t q = 0; q < n; ++q) c[static_cast<int>(std::floor(v.data[q])) - lo] += 1;
    for (std::size_t b = 0; b < bins; ++b)
        if (counts[b]) out[static_cast<int>(b) + lo] = counts[b];
    return out;
}

LabelMask wrap_label(VoxelVolume v, const LabelMask& like) {
    LabelMask out(std::move(v), like.vocabulary);
    return out;
}

}  // namespace

void require_same_grid(const Grid& a, const Grid& b, const char* what) {
    if (!(a == b)) throw GridError(std::string(what) + ": grids differ");
}

VoxelVolume resample(const VoxelVolume& volume, const Vec3& spacing, Interpolation interp) {
    return resample_impl<true>(volume, spacing, interp);
}

LabelMask resample(const LabelMask& mask, const Vec3& spacing, Interpolation interp) {
    if (interp != Interpolation::Nearest) throw InterpolationError("label data supports nearest interpolation only");
    return wrap_label(resample_impl<true>(mask.grid, spacing, interp), mask);
}

VoxelVolume apply_affine(const VoxelVolume& source, const Affine& target_to_source, const Grid& target,
                         Interpolation interp) {
    return apply_affine_impl<true>(source, target_to_source, target, interp);
}

LabelMask apply_affine(const LabelMask& source, const Affine& target_to_source, const Grid& target,
                       Interpolation interp) {
    if (interp != Interpolation::Nearest) throw InterpolationError("label data supports nearest interpolation only");
    return wrap_label(apply_affine_impl<true>(source.grid, target_to_source, target, interp), source);
}

OverlapCounts overlap_counts(const VoxelVolume& a, const VoxelVolume& b) { return overlap_impl<true>(a, b); }

double overlap_iou(const VoxelVolume& a, const VoxelVolume& b) {
    const auto c = overlap_counts(a, b);
    if (c.uni == 0) return 0.0;
    return static_cast<double>(c.intersection) / static_cast<double>(c.uni);
}

std::map<int, std::uint64_t> label_histogram(const VoxelVolume& v) { return histogram_impl<true>(v); }

VoxelVolume mask_multiply(const VoxelVolume& v, const VoxelVolume& mask) {
    require_same_grid(v.grid, mask.grid, "mask_multiply");
    VoxelVolume out = v;
    const auto n = static_cast<std::int64_t>(v.data.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t q = 0; q < n; ++q)
        if (mask.data[q] == 0.0f) out.data[q] = 0.0f;
    return out;
}

namespace serial {

VoxelVolume apply_affine(const VoxelVolume& source, const Affine& target_to_source, const Grid& target,
                         Interpolation interp) {
    return apply_affine_impl<false>(source, target_to_source, target, interp);
}
VoxelVolume resample(const VoxelVolume& volume, const Vec3& spacing, Interpolation interp) {
    return resample_impl<false>(volume, spacing, interp);
}
OverlapCounts overlap_counts(const VoxelVolume& a, const VoxelVolume& b) { return overlap_impl<false>(a, b); }
std::map<int, std::uint64_t> label_histogram(const VoxelVolume& v) { return histogram_impl<false>(v); }

}  // namespace serial

}  // namespace neuroagent::volume
