#include "neuroagent/volume/header.hpp"

#include <cmath>
#include <sstream>

namespace neuroagent::volume {

namespace {

std::string num(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

std::string dims_str(const Index3& d) {
    return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]);
}

}  // namespace

HeaderDiff compare_headers(const Grid& a, const Grid& b, const HeaderTolerance& tol) {
    HeaderDiff diff;
    if (a.dims() != b.dims()) diff.mismatches.push_back({"dims", dims_str(a.dims()), dims_str(b.dims())});
    static constexpr const char* kAxis[3] = {"x", "y", "z"};
    const Vec3 sa = a.spacing(), sb = b.spacing();
    for (int i = 0; i < 3; ++i)
        if (std::abs(sa[i] - sb[i]) > tol.spacing)
            diff.mismatches.push_back({std::string("spacing.") + kAxis[i], num(sa[i]), num(sb[i])});
    const Vec3 oa = a.origin(), ob = b.origin();
    for (int i = 0; i < 3; ++i)
        if (std::abs(oa[i] - ob[i]) > tol.origin)
            diff.mismatches.push_back({std::string("origin.") + kAxis[i], num(oa[i]), num(ob[i])});
    // Translation is already reported through origin.
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            const double x = a.affine().m[r][c], y = b.affine().m[r][c];
            if (std::abs(x - y) > tol.affine)
                diff.mismatches.push_back(
                    {"affine[" + std::to_string(r) + "][" + std::to_string(c) + "]", num(x), num(y)});
        }
    diff.equal = diff.mismatches.empty();
    return diff;
}

}  // namespace neuroagent::volume
