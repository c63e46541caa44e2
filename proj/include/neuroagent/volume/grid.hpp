#pragma once

#include <array>
#include <cstddef>
#include <string>

namespace neuroagent::volume {

using Vec3 = std::array<double, 3>;
using Index3 = std::array<int, 3>;

// Row-major 3x4 matrix: world = M[:, :3] * p + M[:, 3].
struct Affine {
    std::array<std::array<double, 4>, 3> m{};

    static Affine identity();
    static Affine translation(const Vec3& t);
    // Diagonal spacing with the given world position for index (0,0,0).
    static Affine axis_aligned(const Vec3& spacing, const Vec3& origin);
    // Rotation by quarter turns about the z axis, followed by translation.
    static Affine rotation_z90(int quarter_turns, const Vec3& t);

    Vec3 apply(const Vec3& p) const;
    Vec3 apply_linear(const Vec3& v) const;
    double determinant() const;
    // Throws TransformError when singular.
    Affine inverse() const;
    // (*this) after rhs: x -> this(rhs(x)).
    Affine compose(const Affine& rhs) const;

    bool operator==(const Affine&) const = default;
};

// Geometry of a voxel grid. The affine maps (i, j, k) to world millimetres and
// must be a positive diagonal scale composed with a signed permutation.
class Grid {
public:
    Grid() = default;
    // Throws UnsupportedError for non axis-aligned affines, VolumeError for
    // non-positive dims.
    Grid(Index3 dims, const Affine& affine);

    static Grid axis_aligned(Index3 dims, const Vec3& spacing, const Vec3& origin);

    const Index3& dims() const { return dims_; }
    const Affine& affine() const { return affine_; }
    Vec3 spacing() const { return spacing_; }
    Vec3 origin() const { return {affine_.m[0][3], affine_.m[1][3], affine_.m[2][3]}; }

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
    }
    std::size_t linear(int i, int j, int k) const {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(dims_[0]) *
                   (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims_[1]) * k);
    }
    Index3 unravel(std::size_t n) const;
    bool contains(int i, int j, int k) const {
        return i >= 0 && j >= 0 && k >= 0 && i < dims_[0] && j < dims_[1] && k < dims_[2];
    }
    double voxel_volume() const { return spacing_[0] * spacing_[1] * spacing_[2]; }

    Vec3 index_to_world(const Vec3& ijk) const { return affine_.apply(ijk); }
    Vec3 world_to_index(const Vec3& xyz) const;

    bool operator==(const Grid& o) const { return dims_ == o.dims_ && affine_ == o.affine_; }

private:
    Index3 dims_{1, 1, 1};
    Affine affine_ = Affine::identity();
    Affine inverse_ = Affine::identity();
    Vec3 spacing_{1.0, 1.0, 1.0};
};

std::string to_string(const Vec3& v);

}  // namespace neuroagent::volume
