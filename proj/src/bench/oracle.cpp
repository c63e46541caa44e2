#include "neuroagent/bench/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <stdexcept>

#include <Eigen/Dense>

#include "neuroagent/toolbox/atlas.hpp"

namespace neuroagent::bench {

using volume::Index3;

namespace {

struct Key {
    int i, j, k;
    auto operator<=>(const Key&) const = default;
};

Key key_of(const Index3& v) { return {v[0], v[1], v[2]}; }

}  // namespace

Oracle::Oracle(const PhantomSpec& spec, std::shared_ptr<const toolbox::GroundTruth> truth_ptr)
    : spec_(spec), truth_(std::move(truth_ptr)) {
    const toolbox::GroundTruth& truth = *truth_;
    const auto& atlas = toolbox::atlas_by_name(truth.atlas);
    const auto& g = atlas.grid;
    const auto& d = g.dims();
    const double vv = g.spacing()[0] * g.spacing()[1] * g.spacing()[2];
    for (int t = 0; t < spec.timepoints; ++t) {
        const std::string tp = PhantomSpec::timepoint_id(t);
        auto it = truth.instances.find(tp);
        if (it == truth.instances.end()) throw std::invalid_argument("ground truth lacks timepoint " + tp);
        std::map<int, OracleLesion> by_instance;
        for (int k = 0; k < d[2]; ++k)
            for (int j = 0; j < d[1]; ++j)
                for (int i = 0; i < d[0]; ++i) {
                    const int id = static_cast<int>(it->second.at(i, j, k));
                    if (id) by_instance[id].voxels.push_back({i, j, k});
                }
        std::vector<OracleLesion> ls;
        for (auto& [id, l] : by_instance) {
            l.instance = id;
            l.volume_mm3 = static_cast<double>(l.voxels.size()) * vv;
            Vec3 sum{}, lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
            std::map<int, std::size_t> lobe_votes;
            for (const auto& v : l.voxels) {
                const Vec3 w = g.index_to_world({double(v[0]), double(v[1]), double(v[2])});
                for (int a = 0; a < 3; ++a) {
                    sum[a] += w[a];
                    lo[a] = std::min(lo[a], w[a]);
                    hi[a] = std::max(hi[a], w[a]);
                }
                ++lobe_votes[toolbox::lobe_label_at(atlas, w)];
            }
            const double n = static_cast<double>(l.voxels.size());
            for (int a = 0; a < 3; ++a) {
                l.centroid_mm[a] = sum[a] / n;
                // World-axis span of voxel centres plus one voxel.
                const double step = std::abs(g.affine().apply_linear({a == 0 ? 1.0 : 0.0, a == 1 ? 1.0 : 0.0,
                                                                      a == 2 ? 1.0 : 0.0})[a]);
                l.extent_mm[a] = hi[a] - lo[a] + step;
            }
            int best = 0;
            std::size_t best_n = 0;
            for (const auto& [lobe, votes] : lobe_votes)
                if (lobe > 0 && votes > best_n) best = lobe, best_n = votes;
            l.lobe = best ? toolbox::lobe_vocabulary().at(best) : "none";
            ls.push_back(std::move(l));
        }
        std::sort(ls.begin(), ls.end(), [](const OracleLesion& a, const OracleLesion& b) {
            if (a.voxels.size() != b.voxels.size()) return a.voxels.size() > b.voxels.size();
            return a.centroid_mm < b.centroid_mm;
        });
        lesions_[tp] = std::move(ls);
    }
}

const std::vector<OracleLesion>& Oracle::lesions(const std::string& tp) const {
    auto it = lesions_.find(tp);
    if (it == lesions_.end()) throw std::out_of_range("no timepoint " + tp);
    return it->second;
}

double Oracle::total_volume_mm3(const std::string& tp) const {
    double v = 0.0;
    for (const auto& l : lesions(tp)) v += l.volume_mm3;
    return v;
}

double Oracle::label_volume_mm3(const std::string& tp, int label) const {
    const auto& m = truth_->lesions.at(tp).grid;
    std::size_t n = 0;
    for (float x : m.data) n += static_cast<int>(x) == label;
    const auto sp = m.grid.spacing();
    return static_cast<double>(n) * sp[0] * sp[1] * sp[2];
}

OracleShape Oracle::shape(const std::string& tp, int lesion_id) const {
    const auto& ls = lesions(tp);
    if (lesion_id < 1 || static_cast<std::size_t>(lesion_id) > ls.size())
        throw std::out_of_range("no lesion " + std::to_string(lesion_id));
    const OracleLesion& l = ls[static_cast<std::size_t>(lesion_id - 1)];
    const auto& atlas = toolbox::atlas_by_name(truth_->atlas);
    const auto& g = atlas.grid;
    const Vec3 sp = g.spacing();
    std::set<Key> inside;
    for (const auto& v : l.voxels) inside.insert(key_of(v));

    OracleShape s;
    Eigen::MatrixXd pts(static_cast<Eigen::Index>(l.voxels.size()), 3);
    const auto& labels = truth_->lesions.at(tp).grid;
    const LesionSpec& spec_lesion = spec_.lesions.at(static_cast<std::size_t>(l.instance - 1));
    double intensity = 0.0;
    Eigen::Index row = 0;
    for (const auto& v : l.voxels) {
        // Each of the six faces is exposed unless the neighbour is in the lesion.
        const int off[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
        for (const auto& o : off) {
            if (inside.count({v[0] + o[0], v[1] + o[1], v[2] + o[2]})) continue;
            s.surface_area_mm2 += o[0] ? sp[1] * sp[2] : o[1] ? sp[0] * sp[2] : sp[0] * sp[1];
        }
        const Vec3 w = g.index_to_world({double(v[0]), double(v[1]), double(v[2])});
        pts.row(row++) << w[0], w[1], w[2];
        intensity += tissue_intensity("T1ce", toolbox::anatomy_label_at(atlas, w),
                                      static_cast<int>(labels.at(v[0], v[1], v[2])), spec_lesion.intensity);
    }
    s.sphericity = std::cbrt(M_PI) * std::pow(6.0 * l.volume_mm3, 2.0 / 3.0) / s.surface_area_mm2;
    s.mean_intensity = intensity / static_cast<double>(l.voxels.size());
    const Eigen::MatrixXd centred = pts.rowwise() - pts.colwise().mean();
    const Eigen::Matrix3d cov = centred.transpose() * centred / static_cast<double>(pts.rows());
    Eigen::Vector3d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(cov).eigenvalues();
    std::sort(ev.data(), ev.data() + 3, std::greater<>());
    if (ev[0] > 0.0) {
        s.elongation = std::sqrt(std::max(ev[1], 0.0) / ev[0]);
        s.flatness = std::sqrt(std::max(ev[2], 0.0) / ev[0]);
    }
    return s;
}

OracleMatch Oracle::match_sets(const std::vector<std::vector<Index3>>& a, const std::vector<std::vector<Index3>>& b,
                               double threshold) {
    const std::size_t na = a.size(), nb = b.size();
    std::vector<std::vector<double>> iou(na, std::vector<double>(nb, 0.0));
    for (std::size_t i = 0; i < na; ++i) {
        std::set<Key> sa;
        for (const auto& v : a[i]) sa.insert(key_of(v));
        for (std::size_t j = 0; j < nb; ++j) {
            std::size_t inter = 0;
            for (const auto& v : b[j]) inter += sa.count(key_of(v));
            const std::size_t uni = a[i].size() + b[j].size() - inter;
            iou[i][j] = uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
        }
    }
    // Exhaustive search over partial injections a -> b.
    std::vector<int> assign(na, -1), best_assign(na, -1);
    std::vector<bool> used(nb, false);
    int best_pairs = -1;
    double best_sum = -1.0;
    std::function<void(std::size_t, int, double)> go = [&](std::size_t i, int pairs, double sum) {
        if (i == na) {
            // Enumeration order visits lexicographically smaller pairings first, so keep the first maximum.
            if (pairs > best_pairs || (pairs == best_pairs && sum > best_sum + 1e-12)) {
                best_pairs = pairs;
                best_sum = sum;
                best_assign = assign;
            }
            return;
        }
        for (std::size_t j = 0; j < nb; ++j) {
            if (used[j] || iou[i][j] < threshold) continue;
            used[j] = true;
            assign[i] = static_cast<int>(j);
            go(i + 1, pairs + 1, sum + iou[i][j]);
            used[j] = false;
            assign[i] = -1;
        }
        go(i + 1, pairs, sum);
    };
    go(0, 0, 0.0);

    OracleMatch m;
    std::vector<bool> matched_b(nb, false);
    for (std::size_t i = 0; i < na; ++i) {
        if (best_assign[i] < 0) {
            m.resolved_ids.push_back(static_cast<int>(i + 1));
            continue;
        }
        const auto j = static_cast<std::size_t>(best_assign[i]);
        matched_b[j] = true;
        m.pairs.push_back({static_cast<int>(i + 1), static_cast<int>(j + 1), iou[i][j]});
    }
    for (std::size_t j = 0; j < nb; ++j)
        if (!matched_b[j]) m.new_ids.push_back(static_cast<int>(j + 1));
    return m;
}

OracleMatch Oracle::match(const std::string& a, const std::string& b, double threshold) const {
    std::vector<std::vector<Index3>> va, vb;
    for (const auto& l : lesions(a)) va.push_back(l.voxels);
    for (const auto& l : lesions(b)) vb.push_back(l.voxels);
    return match_sets(va, vb, threshold);
}

double Oracle::region_volume_mm3(int region_id) const {
    if (region_cache_.empty()) {
        // One pass counts every region.
        const auto& atlas = toolbox::atlas_by_name(truth_->atlas);
        const auto& g = atlas.grid;
        std::map<int, std::size_t> n;
        double vv = 0.0;
        auto label_at_index = [&](int i, int j, int k) {
            return toolbox::anatomy_label_at(atlas, g.index_to_world({double(i), double(j), double(k)}));
        };
        if (!truth_->native) {
            const auto& d = g.dims();
            for (int k = 0; k < d[2]; ++k)
                for (int j = 0; j < d[1]; ++j)
                    for (int i = 0; i < d[0]; ++i) ++n[label_at_index(i, j, k)];
            vv = g.spacing()[0] * g.spacing()[1] * g.spacing()[2];
        } else {
            // Each scanner voxel takes the region of its nearest atlas voxel.
            const auto& ng = truth_->native->grid;
            const auto& nd = ng.dims();
            for (int k = 0; k < nd[2]; ++k)
                for (int j = 0; j < nd[1]; ++j)
                    for (int i = 0; i < nd[0]; ++i) {
                        const Vec3 c = g.world_to_index(truth_->native->native_to_atlas.apply(
                            ng.index_to_world({double(i), double(j), double(k)})));
                        const int ai = static_cast<int>(std::floor(c[0] + 0.5));
                        const int aj = static_cast<int>(std::floor(c[1] + 0.5));
                        const int ak = static_cast<int>(std::floor(c[2] + 0.5));
                        if (g.contains(ai, aj, ak)) ++n[label_at_index(ai, aj, ak)];
                    }
            vv = ng.voxel_volume();
        }
        for (const auto& [id, name] : toolbox::anatomy_vocabulary())
            region_cache_[id] = static_cast<double>(n.count(id) ? n.at(id) : 0) * vv;
    }
    auto it = region_cache_.find(region_id);
    return it == region_cache_.end() ? 0.0 : it->second;
}

std::string pathology_output_file(const std::string& case_id, const std::string& tp, const std::string& model) {
    return "outputs/" + case_id + "/" + tp + "/seg_" + model + ".nii";
}

std::string anatomy_output_file(const std::string& case_id, const std::string& tp) {
    return "outputs/" + case_id + "/" + tp + "/anatomy_seg.nii";
}

std::string anatomy_volumes_file(const std::string& case_id, const std::string& tp) {
    return "outputs/" + case_id + "/" + tp + "/anatomy_volumes.csv";
}

}  // namespace neuroagent::bench
