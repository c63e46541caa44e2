#pragma once

#include <string>
#include <vector>

#include "neuroagent/volume/volume.hpp"

namespace neuroagent::volume {

struct HeaderTolerance {
    double spacing = 1e-3;
    double origin = 1e-3;
    double affine = 1e-3;
};

struct HeaderMismatch {
    std::string field;  // e.g. "dims", "spacing.z", "affine[1][3]"
    std::string value_a;
    std::string value_b;
};

struct HeaderDiff {
    std::vector<HeaderMismatch> mismatches;
    bool equal = true;
};

HeaderDiff compare_headers(const Grid& a, const Grid& b, const HeaderTolerance& tol = {});
inline HeaderDiff compare_headers(const VoxelVolume& a, const VoxelVolume& b, const HeaderTolerance& tol = {}) {
    return compare_headers(a.grid, b.grid, tol);
}

}  // namespace neuroagent::volume
