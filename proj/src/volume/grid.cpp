#include "neuroagent/volume/grid.hpp"

#include <cmath>
#include <sstream>

#include "neuroagent/volume/errors.hpp"

namespace neuroagent::volume {

Affine Affine::identity() {
    Affine a;
    for (int r = 0; r < 3; ++r) a.m[r][r] = 1.0;
    return a;
}

Affine Affine::translation(const Vec3& t) {
    Affine a = identity();
    for (int r = 0; r < 3; ++r) a.m[r][3] = t[r];
    return a;
}

Affine Affine::axis_aligned(const Vec3& spacing, const Vec3& origin) {
    Affine a;
    for (int r = 0; r < 3; ++r) {
        a.m[r][r] = spacing[r];
        a.m[r][3] = origin[r];
    }
    return a;
}

Affine Affine::rotation_z90(int quarter_turns, const Vec3& t) {
    const int q = ((quarter_turns % 4) + 4) % 4;
    static constexpr int kCos[4] = {1, 0, -1, 0};
    static constexpr int kSin[4] = {0, 1, 0, -1};
    Affine a;
    a.m[0][0] = kCos[q];
    a.m[0][1] = -kSin[q];
    a.m[1][0] = kSin[q];
    a.m[1][1] = kCos[q];
    a.m[2][2] = 1.0;
    for (int r = 0; r < 3; ++r) a.m[r][3] = t[r];
    return a;
}

Vec3 Affine::apply(const Vec3& p) const {
    Vec3 out{};
    for (int r = 0; r < 3; ++r) out[r] = m[r][0] * p[0] + m[r][1] * p[1] + m[r][2] * p[2] + m[r][3];
    return out;
}

Vec3 Affine::apply_linear(const Vec3& v) const {
    Vec3 out{};
    for (int r = 0; r < 3; ++r) out[r] = m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2];
    return out;
}

double Affine::determinant() const {
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
           m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

Affine Affine::inverse() const {
    const double det = determinant();
    if (!std::isfinite(det) || std::abs(det) < 1e-12) throw TransformError("singular transform");
    Affine inv;
    auto& a = m;
    auto& b = inv.m;
    b[0][0] = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) / det;
    b[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) / det;
    b[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) / det;
    b[1][0] = (a[1][2] * a[2][0] - a[1][0] * a[2][2]) / det;
    b[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) / det;
    b[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) / det;
    b[2][0] = (a[1][0] * a[2][1] - a[1][1] * a[2][0]) / det;
    b[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) / det;
    b[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) / det;
    for (int r = 0; r < 3; ++r) {
        b[r][3] = -(b[r][0] * a[0][3] + b[r][1] * a[1][3] + b[r][2] * a[2][3]);
    }
    // Exact zeros keep signed-permutation inverses exact.
    for (auto& row : b)
        for (auto& v : row)
            if (v == 0.0) v = 0.0;
    return inv;
}

Affine Affine::compose(const Affine& rhs) const {
    Affine out;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 4; ++c) {
            double v = m[r][0] * rhs.m[0][c] + m[r][1] * rhs.m[1][c] + m[r][2] * rhs.m[2][c];
            if (c == 3) v += m[r][3];
            out.m[r][c] = v;
        }
    }
    return out;
}

Grid::Grid(Index3 dims, const Affine& affine) : dims_(dims), affine_(affine) {
    for (int d : dims_)
        if (d <= 0) throw VolumeError("grid dims must be positive");
    // Each column and each row of the linear part holds exactly one nonzero.
    std::array<int, 3> row_hits{0, 0, 0};
    for (int c = 0; c < 3; ++c) {
        int hits = 0;
        for (int r = 0; r < 3; ++r) {
            const double v = affine_.m[r][c];
            if (!std::isfinite(v)) throw UnsupportedError("non-finite affine");
            if (v != 0.0) {
                ++hits;
                ++row_hits[r];
                spacing_[c] = std::abs(v);
            }
        }
        if (hits != 1) throw UnsupportedError("affine is not axis-aligned");
    }
    for (int h : row_hits)
        if (h != 1) throw UnsupportedError("affine is not axis-aligned");
    inverse_ = affine_.inverse();
}

Grid Grid::axis_aligned(Index3 dims, const Vec3& spacing, const Vec3& origin) {
    for (double s : spacing)
        if (!(s > 0.0)) throw VolumeError("spacing must be positive");
    return Grid(dims, Affine::axis_aligned(spacing, origin));
}

Index3 Grid::unravel(std::size_t n) const {
    const std::size_t nx = static_cast<std::size_t>(dims_[0]);
    const std::size_t ny = static_cast<std::size_t>(dims_[1]);
    return {static_cast<int>(n % nx), static_cast<int>((n / nx) % ny), static_cast<int>(n / (nx * ny))};
}

Vec3 Grid::world_to_index(const Vec3& xyz) const { return inverse_.apply(xyz); }

std::string to_string(const Vec3& v) {
    std::ostringstream os;
    os.precision(17);
    os << "(" << v[0] << ", " << v[1] << ", " << v[2] << ")";
    return os.str();
}

}  // namespace neuroagent::volume
