#pragma once

// Reference measurements for expected answers. They are computed by brute
// force from the ground-truth instance masks and the phantom spec, never by
// the toolbox, so a toolbox defect cannot leak into the benchmark's answers.

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "neuroagent/bench/phantom.hpp"
#include "neuroagent/toolbox/case.hpp"
#include "neuroagent/volume/grid.hpp"

namespace neuroagent::bench {

struct OracleLesion {
    int instance = 0;  // spec lesion index + 1
    std::vector<volume::Index3> voxels;
    double volume_mm3 = 0.0;
    Vec3 centroid_mm{};
    Vec3 extent_mm{};
    std::string lobe;
};

struct OracleShape {
    double surface_area_mm2 = 0.0;
    double sphericity = 0.0;
    double elongation = 0.0;
    double flatness = 0.0;
    double mean_intensity = 0.0;  // T1ce
};

struct OracleMatch {
    struct Pair {
        int id_t0 = 0, id_t1 = 0;
        double iou = 0.0;
    };
    std::vector<Pair> pairs;              // ascending id_t0
    std::vector<int> new_ids, resolved_ids;  // ascending
};

// Not safe for concurrent use (region volumes are computed lazily).
class Oracle {
public:
    // Throws std::invalid_argument when truth and spec disagree on timepoints.
    Oracle(const PhantomSpec& spec, std::shared_ptr<const toolbox::GroundTruth> truth);

    // Lesions of a timepoint by descending voxel count, ties broken by the
    // lexicographically smaller world centroid; lesion ids are 1-based ranks.
    const std::vector<OracleLesion>& lesions(const std::string& tp) const;
    double total_volume_mm3(const std::string& tp) const;
    // Volume of a tumour sub-region label (0 when absent).
    double label_volume_mm3(const std::string& tp, int label) const;
    OracleShape shape(const std::string& tp, int lesion_id) const;

    // Optimal one-to-one pairing: the most pairs with IoU >= threshold, then
    // the largest IoU sum, then the lexicographically smallest pairing.
    OracleMatch match(const std::string& a, const std::string& b, double threshold = 0.25) const;
    static OracleMatch match_sets(const std::vector<std::vector<volume::Index3>>& a,
                                  const std::vector<std::vector<volume::Index3>>& b, double threshold);

    // Anatomy region volume as measured on the image the segmentation runs on:
    // the atlas grid for preprocessed cases, the scanner grid otherwise.
    double region_volume_mm3(int region_id) const;

    const PhantomSpec& spec() const { return spec_; }

private:
    PhantomSpec spec_;
    std::shared_ptr<const toolbox::GroundTruth> truth_;
    std::map<std::string, std::vector<OracleLesion>> lesions_;
    mutable std::map<int, double> region_cache_;
};

// Names of output files the toolbox reports for a timepoint.
std::string pathology_output_file(const std::string& case_id, const std::string& tp, const std::string& model);
std::string anatomy_output_file(const std::string& case_id, const std::string& tp);
std::string anatomy_volumes_file(const std::string& case_id, const std::string& tp);

}  // namespace neuroagent::bench
