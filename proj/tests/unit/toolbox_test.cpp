#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <random>

#include "case_fixture.hpp"
#include "neuroagent/toolbox/atlas.hpp"
#include "neuroagent/toolbox/toolbox.hpp"
#include "neuroagent/volume/header.hpp"
#include "oracles.hpp"

using namespace neuroagent;
using namespace neuroagent::toolbox;
using neuroagent::testing::Ball;
using neuroagent::testing::FixtureCase;
using neuroagent::testing::make_fixture;
using volume::DType;
using volume::Grid;
using volume::LabelMask;
using volume::VoxelVolume;

namespace {

struct Session {
    FixtureCase fc;
    HandleStore store;
    std::unique_ptr<Toolbox> tb;
    explicit Session(FixtureCase f, ToolboxConfig cfg = {}) : fc(std::move(f)) {
        tb = std::make_unique<Toolbox>(fc.ctx, store, cfg);
    }
    std::string load(const std::string& tp, const std::string& modality) {
        auto r = tb->load_image(fc.ctx.bundle.timepoint(tp)->files.at(modality));
        EXPECT_TRUE(r.ok()) << r.to_json().dump();
        return r.handles.at(0).id;
    }
    std::string put_mask(VoxelVolume v, std::map<int, std::string> vocab = {{1, "lesion"}}) {
        return store.put_mask(std::make_shared<LabelMask>(std::move(v), std::move(vocab)), "test").id;
    }
    const StoredObject& get(const std::string& id) { return *store.find(id); }
};

const std::vector<Ball> kTwoLesions{{{-6.0, 8.0, 4.0}, 4.0}, {{7.0, -8.0, -2.0}, 2.5}};

Session glioma_session(bool preprocessed, ToolboxConfig cfg = {}, int quarter_turns = 1) {
    return Session(make_fixture(preprocessed ? "gl_pre" : "gl_raw" + std::to_string(quarter_turns), "glioma",
                                preprocessed, {kTwoLesions}, quarter_turns),
                   cfg);
}

std::size_t oracle_brain_voxels(const AtlasTemplate& a) {
    std::size_t n = 0;
    const auto& d = a.grid.dims();
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i) {
                const double x = (a.grid.origin()[0] + i) / a.brain_radii[0];
                const double y = (a.grid.origin()[1] + j) / a.brain_radii[1];
                const double z = (a.grid.origin()[2] + k) / a.brain_radii[2];
                n += x * x + y * y + z * z <= 1.0;
            }
    return n;
}

PathologyInputs four(const std::vector<std::string>& h) { return {h[0], h[1], h[2], h[3]}; }

std::vector<std::string> load_all(Session& s, const std::string& tp = "t0") {
    std::vector<std::string> out;
    for (const auto& m : modality_names()) out.push_back(s.load(tp, m));
    return out;
}

// Strip then register every modality of a raw case into its atlas.
std::vector<std::string> preprocess_all(Session& s, const std::string& tp = "t0") {
    std::vector<std::string> out;
    for (const auto& h : load_all(s, tp)) {
        auto st = s.tb->skull_strip(h);
        auto rg = s.tb->register_image(st.handles.at(0).id, "atlas:" + s.fc.ctx.bundle.atlas);
        EXPECT_TRUE(rg.ok());
        out.push_back(rg.handles.at(0).id);
    }
    return out;
}

}  // namespace

TEST(AtlasTest, VocabulariesHaveExpectedSizes) {
    EXPECT_EQ(anatomy_vocabulary().size(), 32u);
    EXPECT_EQ(lobe_vocabulary().size(), 6u);
    EXPECT_EQ(lobe_vocabulary().at(1), "Left Frontal");
    EXPECT_EQ(model_atlas("postop-glioma"), "MNI152");
    EXPECT_EQ(model_atlas("metastasis"), "SRI24");
    EXPECT_EQ(slug("Left Mid-Anterior Upper"), "left_mid_anterior_upper");
}

TEST(AtlasTest, AnatomyAndLobesPartitionTheBrain) {
    for (const char* name : {"SRI24", "MNI152"}) {
        const auto av = atlas_volumes(name);
        std::set<int> regions;
        for (std::size_t n = 0; n < av->brain.data.size(); ++n) {
            const bool brain = av->brain.data[n] != 0.0f;
            EXPECT_EQ(brain, av->anatomy.grid.data[n] != 0.0f);
            EXPECT_EQ(brain, av->lobes.grid.data[n] != 0.0f);
            if (brain) regions.insert(static_cast<int>(av->anatomy.grid.data[n]));
        }
        EXPECT_EQ(regions.size(), 32u) << name;  // every region is non-empty
        EXPECT_EQ(volume::count_nonzero(av->brain), oracle_brain_voxels(atlas_by_name(name)));
    }
}

TEST(AtlasTest, NativeFrameCoversAtlasOnLattice) {
    for (int q : {1, 2, 3}) {
        const auto nf = make_native_frame(sri24(), q, {6.0, -4.0, 2.0});
        const auto inv = nf.native_to_atlas.inverse();
        const auto& d = sri24().grid.dims();
        for (int k = 0; k < d[2]; k += 5)
            for (int j = 0; j < d[1]; j += 5)
                for (int i = 0; i < d[0]; i += 5) {
                    const auto c = nf.grid.world_to_index(inv.apply(sri24().grid.index_to_world({double(i), double(j), double(k)})));
                    for (int a = 0; a < 3; ++a) {
                        EXPECT_DOUBLE_EQ(c[a], std::round(c[a]));
                        EXPECT_GE(c[a], 0.0);
                        EXPECT_LE(c[a], nf.grid.dims()[a] - 1.0);
                    }
                }
    }
}

TEST(HandleStoreTest, SequentialIdsAndDanglingLookup) {
    HandleStore s;
    auto a = s.put_report("x", "", "t");
    auto b = s.put_report("y", "", "t");
    EXPECT_EQ(a.id, "obj_1");
    EXPECT_EQ(b.id, "obj_2");
    EXPECT_EQ(s.peek_next_id(), "obj_3");
    EXPECT_EQ(s.find("obj_3"), nullptr);
    EXPECT_EQ(s.find("obj_01"), nullptr);
    EXPECT_EQ(s.find("obj_0"), nullptr);
    EXPECT_EQ(s.find("banana"), nullptr);
    EXPECT_EQ(s.find("obj_2")->report, "y");
}

TEST(ToolResultTest, StatusMirrorsErrorKind) {
    auto ok = ToolResult::success({{"a", 1}});
    auto bad = ToolResult::failure(errc::kNotFound, "gone");
    EXPECT_EQ(ok.to_json()["status"], "ok");
    EXPECT_FALSE(ok.to_json().contains("error_kind"));
    EXPECT_EQ(bad.to_json()["status"], "error");
    EXPECT_EQ(bad.to_json()["error_kind"], "not_found");
    EXPECT_EQ(bad.payload["message"], "gone");
}

TEST(LoadImageTest, ValidMissingAndDistinct) {
    auto s = glioma_session(true);
    auto r = s.tb->load_image(s.fc.ctx.bundle.timepoints[0].files.at("T1"));
    ASSERT_TRUE(r.ok());
    ASSERT_EQ(r.handles.size(), 1u);
    EXPECT_EQ(r.handles[0].kind, ObjectKind::Image);
    EXPECT_EQ(r.payload["modality"], "T1");
    EXPECT_EQ(s.tb->load_image("gl_pre/t0/T1x.nii").error_kind, errc::kNotFound);
    auto hs = load_all(s);
    std::set<std::string> ids(hs.begin(), hs.end());
    ids.insert(r.handles[0].id);
    EXPECT_EQ(ids.size(), 5u);
    // repeated loads give distinct handles to equal volumes
    EXPECT_TRUE(s.get(hs[0]).image->same_content(*s.get(r.handles[0].id).image));
}

TEST(SkullStripTest, BrainVolumeMatchesAnalyticCount) {
    auto s = glioma_session(true);
    auto r = s.tb->skull_strip(s.load("t0", "T1"));
    ASSERT_TRUE(r.ok());
    EXPECT_DOUBLE_EQ(r.payload["brain_volume_mm3"].get<double>(), double(oracle_brain_voxels(sri24())));
}

TEST(SkullStripTest, NativeBrainVolumeIsPreserved) {
    // 0.5 mm native voxels: two per atlas voxel, so the volume is exact.
    auto s = glioma_session(false);
    auto r = s.tb->skull_strip(s.load("t0", "T1"));
    ASSERT_TRUE(r.ok());
    EXPECT_DOUBLE_EQ(r.payload["brain_volume_mm3"].get<double>(), double(oracle_brain_voxels(sri24())));
}

TEST(SkullStripTest, IdempotentAndKindChecked) {
    auto s = glioma_session(false);
    auto a = s.tb->skull_strip(s.load("t0", "T1"));
    auto b = s.tb->skull_strip(a.handles[0].id);
    EXPECT_TRUE(s.get(a.handles[0].id).image->same_content(*s.get(b.handles[0].id).image));
    EXPECT_EQ(s.get(a.handles[0].id).image->meta_or("skull_stripped"), "true");
    auto m = s.put_mask(VoxelVolume(sri24().grid, DType::UInt8));
    EXPECT_EQ(s.tb->skull_strip(m).error_kind, errc::kWrongKind);
    EXPECT_EQ(s.tb->skull_strip("obj_99").error_kind, errc::kBadHandle);
}

TEST(RegisterTest, NativeToAtlasLandsOnTemplateGrid) {
    auto s = glioma_session(false);
    auto r = s.tb->register_image(s.load("t0", "T1"), "atlas:SRI24");
    ASSERT_TRUE(r.ok());
    const auto& out = *s.get(r.handles[0].id).image;
    EXPECT_TRUE(out.grid == sri24().grid);
    EXPECT_EQ(out.meta_or("space"), "SRI24");
    auto v = s.tb->verify_registration(r.handles[0].id, "atlas:SRI24");
    EXPECT_TRUE(v.payload["equal"].get<bool>());
}

TEST(RegisterTest, AtlasInputIsUnchanged) {
    auto s = glioma_session(true);
    const auto h = s.load("t0", "T2");
    auto r = s.tb->register_image(h, "atlas:SRI24");
    EXPECT_TRUE(s.get(h).image->same_content(*s.get(r.handles[0].id).image));
}

TEST(RegisterTest, BadTargets) {
    auto s = glioma_session(true);
    const auto h = s.load("t0", "T1");
    EXPECT_EQ(s.tb->register_image(h, "atlas:Talairach").error_kind, errc::kBadArgument);
    EXPECT_EQ(s.tb->register_image(h, "obj_42").error_kind, errc::kBadHandle);
    EXPECT_EQ(s.tb->register_image("obj_42", "atlas:SRI24").error_kind, errc::kBadHandle);
}

TEST(RegisterTest, StripRegisterRecoversPreprocessedImagesExactly) {
    for (int q : {1, 2, 3}) {
        auto s = glioma_session(false, {}, q);
        const auto hs = preprocess_all(s);
        for (std::size_t m = 0; m < hs.size(); ++m) {
            const auto& got = *s.get(hs[m]).image;
            const auto& want = s.fc.atlas_images.at("t0").at(modality_names()[m]);
            EXPECT_TRUE(got.same_content(want)) << "turns " << q << " modality " << modality_names()[m];
        }
    }
}

TEST(RegisterTest, ToImageHandleTarget) {
    auto s = glioma_session(false);
    auto t1 = preprocess_all(s)[0];
    auto raw_t2 = s.tb->skull_strip(s.load("t0", "T2")).handles[0].id;
    auto r = s.tb->register_image(raw_t2, t1);
    ASSERT_TRUE(r.ok());
    EXPECT_TRUE(s.tb->verify_registration(r.handles[0].id, t1).payload["equal"].get<bool>());
}

TEST(ResampleToolTest, IdentityAndDoubleResolution) {
    auto s = glioma_session(true);
    const auto h = s.load("t0", "T1");
    auto same = s.tb->resample(h, {1.0, 1.0, 1.0});
    EXPECT_TRUE(s.get(same.handles[0].id).image->same_content(*s.get(h).image));
    auto half = s.tb->resample(h, {0.5, 0.5, 0.5});
    EXPECT_EQ(half.payload["dims"], nlohmann::json::array({80, 96, 72}));
    EXPECT_EQ(s.tb->resample(h, {0.0, 1.0, 1.0}).error_kind, errc::kBadArgument);
    // masks are forced to nearest and stay masks
    auto m = s.put_mask(s.fc.truth->lesions.at("t0").grid, model_vocabulary("glioma"));
    auto rm = s.tb->resample(m, {2.0, 2.0, 2.0});
    ASSERT_TRUE(rm.ok());
    EXPECT_EQ(rm.handles[0].kind, ObjectKind::Mask);
    EXPECT_FALSE(s.tb->verify_registration(rm.handles[0].id, "SRI24").payload["equal"].get<bool>());
}

TEST(VerifyRegistrationTest, NativeDiffersFromAtlas) {
    auto s = glioma_session(false);
    auto v = s.tb->verify_registration(s.load("t0", "T1"), "atlas:SRI24");
    ASSERT_TRUE(v.ok());
    EXPECT_FALSE(v.payload["equal"].get<bool>());
    std::set<std::string> fields;
    for (const auto& m : v.payload["mismatches"]) fields.insert(m["field"].get<std::string>());
    EXPECT_TRUE(fields.count("spacing.x"));
    EXPECT_TRUE(fields.count("origin.x"));
    EXPECT_TRUE(fields.count("dims"));
}

TEST(VerifyRegistrationTest, CoRegisteredModalitiesMatch) {
    auto s = glioma_session(true);
    auto hs = load_all(s);
    EXPECT_TRUE(s.tb->verify_registration(hs[0], hs[3]).payload["equal"].get<bool>());
    EXPECT_EQ(s.tb->verify_registration(hs[0], "Atlas9").error_kind, errc::kBadArgument);
}

TEST(SegmentPathologyTest, MatchingModelReturnsGroundTruth) {
    auto s = glioma_session(true);
    auto r = s.tb->segment_pathology(four(load_all(s)), "glioma");
    ASSERT_TRUE(r.ok()) << r.to_json().dump();
    const auto& m = *s.get(r.handles[0].id).mask;
    EXPECT_TRUE(m.grid.same_content(s.fc.truth->lesions.at("t0").grid));
    EXPECT_EQ(r.payload["labels"].size(), 3u);
    EXPECT_EQ(r.payload["segmentation_file"], "outputs/gl_pre/t0/seg_glioma.nii");
}

TEST(SegmentPathologyTest, NativeInputFailsSpaceCheck) {
    auto s = glioma_session(false);
    auto hs = load_all(s);
    auto r = s.tb->segment_pathology(four(hs), "glioma");
    EXPECT_EQ(r.error_kind, errc::kPreconditionFailed);
    EXPECT_EQ(r.payload["failed_checks"][0], "space");
    // registered but unstripped
    std::vector<std::string> reg;
    for (const auto& h : hs) reg.push_back(s.tb->register_image(h, "atlas:SRI24").handles[0].id);
    auto r2 = s.tb->segment_pathology(four(reg), "glioma");
    EXPECT_EQ(r2.error_kind, errc::kPreconditionFailed);
    EXPECT_EQ(r2.payload["failed_checks"], nlohmann::json::array({"skull_strip"}));
    // fully preprocessed succeeds and equals ground truth
    auto r3 = s.tb->segment_pathology(four(preprocess_all(s)), "glioma");
    ASSERT_TRUE(r3.ok());
    EXPECT_TRUE(s.get(r3.handles[0].id).mask->grid.same_content(s.fc.truth->lesions.at("t0").grid));
}

TEST(SegmentPathologyTest, WrongModelGivesEmptyMask) {
    Session s(make_fixture("met", "metastasis", true, {kTwoLesions}));
    auto r = s.tb->segment_pathology(four(load_all(s)), "glioma");
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(volume::count_nonzero(s.get(r.handles[0].id).mask->grid), 0u);
    EXPECT_EQ(s.tb->enumerate_lesions(r.handles[0].id).payload["lesion_count"], 0);
    // postop model needs MNI152 inputs
    EXPECT_EQ(s.tb->segment_pathology(four(load_all(s)), "postop-glioma").error_kind, errc::kPreconditionFailed);
}

TEST(SegmentPathologyTest, ArgumentErrors) {
    auto s = glioma_session(true);
    auto hs = load_all(s);
    PathologyInputs in = four(hs);
    in.flair.reset();
    auto r = s.tb->segment_pathology(in, "glioma");
    EXPECT_EQ(r.error_kind, errc::kMissingInput);
    EXPECT_EQ(r.payload["missing"], nlohmann::json::array({"flair"}));
    EXPECT_EQ(s.tb->segment_pathology(four(hs), "lymphoma").error_kind, errc::kBadArgument);
    EXPECT_EQ(s.tb->segment_pathology({hs[1], hs[0], hs[2], hs[3]}, "glioma").error_kind, errc::kBadArgument);
}

TEST(SegmentAnatomyTest, TwoHandlesAndConservation) {
    for (bool pre : {true, false}) {
        auto s = glioma_session(pre);
        auto strip = s.tb->skull_strip(s.load("t0", "T1"));
        auto r = s.tb->segment_anatomy(strip.handles[0].id);
        ASSERT_TRUE(r.ok());
        ASSERT_EQ(r.handles.size(), 2u);
        EXPECT_EQ(r.handles[0].kind, ObjectKind::Mask);
        EXPECT_EQ(r.handles[1].kind, ObjectKind::Report);
        EXPECT_EQ(r.payload["region_count"], 32);
        double sum = 0.0;
        for (const auto& v : r.payload["volumes_mm3"]) sum += v["volume_mm3"].get<double>();
        EXPECT_DOUBLE_EQ(sum, strip.payload["brain_volume_mm3"].get<double>());
        const std::string& csv = s.get(r.handles[1].id).report;
        EXPECT_EQ(csv.rfind("label_id,region_name,volume_mm3\n", 0), 0u);
        EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 33);
    }
}

TEST(SegmentAnatomyTest, MaskInputRejected) {
    auto s = glioma_session(true);
    auto m = s.put_mask(VoxelVolume(sri24().grid, DType::UInt8));
    EXPECT_EQ(s.tb->segment_anatomy(m).error_kind, errc::kWrongKind);
}

TEST(ListLabelsTest, Scopes) {
    auto s = glioma_session(true);
    EXPECT_EQ(s.tb->list_labels("anatomy").payload["labels"].size(), 32u);
    EXPECT_EQ(s.tb->list_labels("lobes").payload["labels"].size(), 6u);
    EXPECT_EQ(s.tb->list_labels("postop-glioma").payload["labels"].size(), 4u);
    EXPECT_EQ(s.tb->list_labels("spine").error_kind, errc::kBadArgument);
    const auto labels = s.tb->list_labels("anatomy").payload["labels"];
    for (std::size_t i = 0; i < labels.size(); ++i) EXPECT_EQ(labels[i]["id"], static_cast<int>(i) + 1);
}

TEST(EnumerateTest, EmptyTwoBallsAndSpacing) {
    auto s = glioma_session(true);
    EXPECT_EQ(s.tb->enumerate_lesions(s.put_mask(VoxelVolume(sri24().grid, DType::UInt8))).payload["lesion_count"], 0);

    const auto& gt = s.fc.truth->lesions.at("t0").grid;
    auto r = s.tb->enumerate_lesions(s.put_mask(gt, model_vocabulary("glioma")));
    const auto parts = neuroagent::testing::flood_fill_partition(gt, 26);
    ASSERT_EQ(r.payload["lesion_count"], parts.size());
    std::multiset<double> want, got;
    for (const auto& p : parts) want.insert(double(p.size()));
    for (const auto& l : r.payload["lesions"]) got.insert(l["volume_mm3"].get<double>());
    EXPECT_EQ(want, got);
    EXPECT_EQ(s.tb->enumerate_lesions(s.load("t0", "T1")).error_kind, errc::kWrongKind);

    VoxelVolume coarse(Grid::axis_aligned({6, 6, 6}, {2.0, 2.0, 2.0}, {0, 0, 0}), DType::UInt8);
    for (int i = 0; i < 5; ++i) coarse.at(i, 1, 1) = coarse.at(i, 2, 1) = 1.0f;
    auto c = s.tb->enumerate_lesions(s.put_mask(coarse));
    EXPECT_EQ(c.payload["lesions"][0]["volume_mm3"], 80.0);
}

namespace {
VoxelVolume box_mask(const Grid& g, volume::Index3 lo, volume::Index3 hi) {
    VoxelVolume v(g, DType::UInt8);
    for (int k = lo[2]; k <= hi[2]; ++k)
        for (int j = lo[1]; j <= hi[1]; ++j)
            for (int i = lo[0]; i <= hi[0]; ++i) v.at(i, j, k) = 1.0f;
    return v;
}
VoxelVolume add(VoxelVolume a, const VoxelVolume& b) {
    for (std::size_t n = 0; n < a.data.size(); ++n) a.data[n] = std::max(a.data[n], b.data[n]);
    return a;
}
}  // namespace

TEST(MatchTest, IdenticalNewAndOffset) {
    auto s = glioma_session(true);
    const Grid g = Grid::axis_aligned({20, 20, 20}, {1, 1, 1}, {0, 0, 0});
    const auto a = box_mask(g, {2, 2, 2}, {5, 5, 5});
    const auto b = box_mask(g, {12, 12, 12}, {14, 14, 14});
    auto same = s.tb->match_lesions(s.put_mask(add(a, b)), s.put_mask(add(a, b)));
    ASSERT_EQ(same.payload["pairs"].size(), 2u);
    for (const auto& p : same.payload["pairs"]) EXPECT_EQ(p["iou"], 1.0);
    EXPECT_TRUE(same.payload["new"].empty());
    EXPECT_TRUE(same.payload["resolved"].empty());

    auto grown = s.tb->match_lesions(s.put_mask(a), s.put_mask(add(a, b)));
    ASSERT_EQ(grown.payload["new"].size(), 1u);
    EXPECT_EQ(grown.payload["pairs"].size(), 1u);
    EXPECT_EQ(grown.payload["new"][0]["volume_mm3"], 27.0);

    // 3-voxel slabs offset by one along x: IoU = 2/4
    const auto x0 = box_mask(g, {2, 2, 2}, {4, 5, 5});
    const auto x1 = box_mask(g, {3, 2, 2}, {5, 5, 5});
    ASSERT_DOUBLE_EQ(neuroagent::testing::set_iou(neuroagent::testing::voxel_set(x0),
                                                  neuroagent::testing::voxel_set(x1)), 0.5);
    auto off = s.tb->match_lesions(s.put_mask(x0), s.put_mask(x1), 0.25);
    ASSERT_EQ(off.payload["pairs"].size(), 1u);
    EXPECT_EQ(off.payload["pairs"][0]["iou"], 0.5);
    auto strict = s.tb->match_lesions(s.put_mask(x0), s.put_mask(x1), 0.6);
    EXPECT_EQ(strict.payload["pairs"].size(), 0u);
    EXPECT_EQ(strict.payload["resolved"].size(), 1u);

    auto other = s.put_mask(VoxelVolume(Grid::axis_aligned({20, 20, 21}, {1, 1, 1}, {0, 0, 0}), DType::UInt8));
    EXPECT_EQ(s.tb->match_lesions(s.put_mask(a), other).error_kind, errc::kGridError);
}

TEST(MatchTest, GreedyEachIdAtMostOnce) {
    // Random box pairs: matched ids unique, all pairs above threshold.
    auto s = glioma_session(true);
    const Grid g = Grid::axis_aligned({24, 24, 8}, {1, 1, 1}, {0, 0, 0});
    std::mt19937 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        VoxelVolume m0(g, DType::UInt8), m1(g, DType::UInt8);
        for (int n = 0; n < 4; ++n) {
            const int x = 6 * (n % 4) + 1, y = static_cast<int>(rng() % 16);
            m0 = add(m0, box_mask(g, {x, y, 1}, {x + 3, y + 3, 4}));
            const int dy = static_cast<int>(rng() % 5) - 2;
            if (rng() % 4) m1 = add(m1, box_mask(g, {x, std::max(0, y + dy), 1}, {x + 3, std::min(23, y + dy + 3), 4}));
        }
        auto r = s.tb->match_lesions(s.put_mask(m0), s.put_mask(m1));
        std::set<int> s0, s1;
        for (const auto& p : r.payload["pairs"]) {
            EXPECT_TRUE(s0.insert(p["id_t0"].get<int>()).second);
            EXPECT_TRUE(s1.insert(p["id_t1"].get<int>()).second);
            EXPECT_GE(p["iou"].get<double>(), 0.25);
        }
        EXPECT_EQ(s0.size() + r.payload["resolved"].size(), r.payload["lesion_count_t0"].get<std::size_t>());
        EXPECT_EQ(s1.size() + r.payload["new"].size(), r.payload["lesion_count_t1"].get<std::size_t>());
    }
}

TEST(GeometryTest, BoxExtentAndCentroid) {
    auto s = glioma_session(true);
    const Grid g = Grid::axis_aligned({10, 10, 10}, {2.0, 1.0, 1.0}, {0, 0, 0});
    auto r = s.tb->lesion_geometry(s.put_mask(box_mask(g, {1, 2, 3}, {2, 5, 3})), 1);
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r.payload["extent_mm"], nlohmann::json::array({4.0, 4.0, 1.0}));
    EXPECT_EQ(r.payload["centroid_mm"], nlohmann::json::array({3.0, 3.5, 3.0}));
    EXPECT_EQ(r.payload["bbox_min"], nlohmann::json::array({1, 2, 3}));
    EXPECT_EQ(s.tb->lesion_geometry(s.put_mask(box_mask(g, {1, 2, 3}, {2, 5, 3})), 2).error_kind, errc::kNotFound);
}

TEST(FeaturesTest, SingleVoxelSphericity) {
    auto s = glioma_session(true);
    const Grid g = Grid::axis_aligned({5, 5, 5}, {1, 1, 1}, {0, 0, 0});
    VoxelVolume img(g, DType::Float32);
    std::fill(img.data.begin(), img.data.end(), 42.0f);
    const auto img_h = s.store.put_image(std::make_shared<VoxelVolume>(img), "test").id;
    auto r = s.tb->lesion_features(s.put_mask(box_mask(g, {2, 2, 2}, {2, 2, 2})), img_h, 1);
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r.payload["volume_mm3"], 1.0);
    EXPECT_EQ(r.payload["surface_area_mm2"], 6.0);
    EXPECT_NEAR(r.payload["sphericity"].get<double>(), std::cbrt(M_PI) * std::pow(6.0, 2.0 / 3.0) / 6.0, 1e-4);
    EXPECT_EQ(r.payload["mean_intensity"], 42.0);
    EXPECT_EQ(r.payload["max_intensity"], 42.0);
    EXPECT_EQ(s.tb->lesion_features(s.put_mask(box_mask(g, {2, 2, 2}, {2, 2, 2})), img_h, 99).error_kind,
              errc::kNotFound);
}

TEST(FeaturesTest, SurfaceAreaMatchesFaceOracle) {
    auto s = glioma_session(true);
    const auto& gt = s.fc.truth->lesions.at("t0").grid;
    const auto cs = volume::connected_components(gt);
    for (std::size_t id = 1; id <= cs.count; ++id) {
        std::set<neuroagent::testing::Voxel> vox;
        const auto& d = gt.grid.dims();
        for (int k = 0; k < d[2]; ++k)
            for (int j = 0; j < d[1]; ++j)
                for (int i = 0; i < d[0]; ++i)
                    if (cs.labeling.at(i, j, k) == float(id)) vox.insert({i, j, k});
        const auto faces = neuroagent::testing::exposed_faces(vox);
        const auto f = shape_features(cs.labeling, static_cast<int>(id));
        EXPECT_DOUBLE_EQ(f.surface_area_mm2, double(faces[0] + faces[1] + faces[2]));
        EXPECT_GT(f.sphericity, 0.0);
        EXPECT_LE(f.sphericity, 1.1);
        EXPECT_NEAR(f.elongation, 1.0, 0.05);  // balls
    }
}

TEST(FeaturesTest, ElongationOfRod) {
    const Grid g = Grid::axis_aligned({12, 5, 5}, {1, 1, 1}, {0, 0, 0});
    auto rod = box_mask(g, {0, 1, 1}, {11, 2, 2});
    const auto f = shape_features(rod, 1);
    // Uniform discrete variances: (n^2 - 1) / 12 per axis.
    EXPECT_NEAR(f.elongation, std::sqrt((4.0 - 1) / (144.0 - 1)), 1e-9);
    EXPECT_NEAR(f.flatness, std::sqrt((4.0 - 1) / (144.0 - 1)), 1e-9);
}

TEST(LocalizeTest, InsideAndStraddling) {
    auto s = glioma_session(true);
    const auto& a = sri24();
    auto mask_from = [&](auto pred) {
        VoxelVolume v(a.grid, DType::UInt8);
        v.meta["space"] = "SRI24";
        const auto& d = a.grid.dims();
        for (int k = 0; k < d[2]; ++k)
            for (int j = 0; j < d[1]; ++j)
                for (int i = 0; i < d[0]; ++i)
                    if (pred(a.grid.index_to_world({double(i), double(j), double(k)}))) v.at(i, j, k) = 1.0f;
        return v;
    };
    // Left is -x; frontal is the anterior half (y >= 0 for a centred brain).
    auto inside = s.tb->localize(s.put_mask(mask_from([](const volume::Vec3& w) {
        return std::hypot(w[0] + 6, w[1] - 8, w[2] - 2) <= 3.0;
    })), 1);
    ASSERT_TRUE(inside.ok()) << inside.to_json().dump();
    EXPECT_EQ(inside.payload["lobe"], "Left Frontal");
    EXPECT_EQ(inside.payload["overlap_fraction"], 1.0);

    // Box spanning y = -2..2 (2 rows posterior, 3 anterior): 60/40.
    auto straddle = s.tb->localize(s.put_mask(mask_from([](const volume::Vec3& w) {
        return w[0] >= -8 && w[0] <= -5 && w[1] >= -2 && w[1] <= 2 && w[2] >= 3 && w[2] <= 5;
    })), 1);
    ASSERT_TRUE(straddle.ok());
    EXPECT_EQ(straddle.payload["lobe"], "Left Frontal");
    EXPECT_DOUBLE_EQ(straddle.payload["overlap_fraction"].get<double>(), 0.6);
}

TEST(LocalizeTest, NativeMaskRejected) {
    auto s = glioma_session(false);
    VoxelVolume v(s.fc.truth->native->grid, DType::UInt8);
    v.data[100] = 1.0f;
    v.meta["space"] = "native";
    EXPECT_EQ(s.tb->localize(s.put_mask(v), 1).error_kind, errc::kPreconditionFailed);
    auto gt = s.put_mask(s.fc.truth->lesions.at("t0").grid, model_vocabulary("glioma"));
    EXPECT_EQ(s.tb->localize(gt, 7).error_kind, errc::kNotFound);
}

TEST(VisualizeTest, MidSliceAndOverlay) {
    auto s = glioma_session(true);
    const Grid g = Grid::axis_aligned({4, 4, 4}, {1, 1, 1}, {0, 0, 0});
    VoxelVolume img(g, DType::Float32);
    for (std::size_t n = 0; n < img.data.size(); ++n) img.data[n] = float(n);
    const auto h = s.store.put_image(std::make_shared<VoxelVolume>(img), "test").id;
    auto r = s.tb->visualize(h, std::nullopt);
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r.payload["slice"], 2);
    std::ifstream in(r.payload["path"].get<std::string>(), std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    ASSERT_EQ(bytes.rfind("P5\n4 4\n255\n", 0), 0u);
    EXPECT_EQ(bytes.size(), 11u + 16u);
    EXPECT_EQ(static_cast<unsigned char>(bytes[11]), 0);
    EXPECT_EQ(static_cast<unsigned char>(bytes.back()), 254);

    const auto m = s.put_mask(box_mask(g, {1, 1, 2}, {1, 1, 2}));
    auto r2 = s.tb->visualize(h, m);
    std::ifstream in2(r2.payload["path"].get<std::string>(), std::ios::binary);
    std::string b2((std::istreambuf_iterator<char>(in2)), {});
    EXPECT_EQ(static_cast<unsigned char>(b2[11 + 1 * 4 + 1]), 255);
    EXPECT_EQ(s.tb->visualize("obj_77", std::nullopt).error_kind, errc::kBadHandle);
}

TEST(NoiseTest, KeepsCountAndStaysWithinOneVoxel) {
    for (double level : {0.0, 0.5, 1.0}) {
        ToolboxConfig cfg;
        cfg.noise = level;
        auto s = glioma_session(true, cfg);
        auto r = s.tb->segment_pathology(four(load_all(s)), "glioma");
        ASSERT_TRUE(r.ok());
        EXPECT_EQ(s.tb->enumerate_lesions(r.handles[0].id).payload["lesion_count"], 2) << level;
        const auto& got = s.get(r.handles[0].id).mask->grid;
        const auto& gt = s.fc.truth->lesions.at("t0").grid;
        if (level == 0.0) EXPECT_TRUE(got.same_content(gt));
        const auto& d = gt.grid.dims();
        for (int k = 1; k + 1 < d[2]; ++k)
            for (int j = 1; j + 1 < d[1]; ++j)
                for (int i = 1; i + 1 < d[0]; ++i) {
                    if ((got.at(i, j, k) != 0) == (gt.at(i, j, k) != 0)) continue;
                    // every changed voxel touches the other state's boundary
                    const float ref = got.at(i, j, k) != 0 ? 0.0f : 1.0f;
                    bool touches = false;
                    for (auto [di, dj, dk] : {std::array{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}})
                        touches |= (gt.at(i + di, j + dj, k + dk) != 0.0f) == (ref == 1.0f);
                    EXPECT_TRUE(touches);
                }
        // determinism
        auto again = s.tb->segment_pathology(four(load_all(s)), "glioma");
        EXPECT_TRUE(s.get(again.handles[0].id).mask->grid.same_content(got));
    }
}

TEST(DeterminismTest, IdenticalSequencesGiveIdenticalResults) {
    auto run = [] {
        auto s = glioma_session(false);
        std::vector<std::string> out;
        auto hs = preprocess_all(s);
        auto seg = s.tb->segment_pathology(four(hs), "glioma");
        out.push_back(seg.to_json().dump());
        out.push_back(s.tb->enumerate_lesions(seg.handles[0].id).to_json().dump());
        out.push_back(s.tb->lesion_features(seg.handles[0].id, hs[1], 1).to_json().dump());
        out.push_back(s.tb->localize(seg.handles[0].id, 2).to_json().dump());
        return out;
    };
    EXPECT_EQ(run(), run());
}
