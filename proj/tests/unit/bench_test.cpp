#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "case_fixture.hpp"
#include "neuroagent/agent/kernel.hpp"
#include "neuroagent/backend/planner.hpp"
#include "neuroagent/backend/scripted.hpp"
#include "neuroagent/bench/dataset.hpp"
#include "neuroagent/toolbox/atlas.hpp"
#include "neuroagent/volume/header.hpp"
#include "neuroagent/volume/nifti.hpp"

using namespace neuroagent;
using namespace neuroagent::bench;
using agent::EventKind;
using agent::Topology;
using backend::Plan;
using backend::PlanStep;

namespace {

PhantomSpec glioma_spec(bool preprocessed = true) {
    PhantomSpec s;
    s.case_id = "g1";
    s.pathology = "glioma";
    s.preprocessed = preprocessed;
    s.seed = 11;
    s.lesions.push_back({{4.0, 5.0, 2.0}, {4.5, 5.0, 4.0}, 1.0, {1.0}});
    return s;
}

// Two metastases at t0; at t1 the first grows, the second resolves and a third appears.
PhantomSpec metastasis_spec() {
    PhantomSpec s;
    s.case_id = "m1";
    s.pathology = "metastasis";
    s.timepoints = 2;
    s.seed = 5;
    s.lesions.push_back({{6.0, 8.0, 2.0}, {3.0, 3.0, 3.0}, 1.1, {1.0, 1.15}});
    s.lesions.push_back({{-7.0, -9.0, -2.0}, {2.5, 2.5, 2.5}, 0.9, {1.0, 0.0}});
    s.lesions.push_back({{-6.0, 10.0, 4.0}, {2.2, 2.2, 2.2}, 1.0, {0.0, 1.0}});
    return s;
}

// A mid-sized suite exercising every template, both case kinds and all pathologies.
const Dataset& small_suite() {
    static const Dataset ds = [] {
        SuiteConfig c = SuiteConfig::default_profile(99);
        c.profile = "small";
        c.tiers = {{1, {6, 8}}, {2, {12, 40}}, {3, {5, 30}}};
        c.raw_fraction = {{1, 0.0}, {2, 0.4}, {3, 0.4}};
        return generate_suite(c);
    }();
    return ds;
}

const std::filesystem::path& small_suite_root() {
    static const std::filesystem::path root = [] {
        auto p = neuroagent::testing::scratch_dir("bench_small");
        write_dataset(small_suite(), p);
        return p;
    }();
    return root;
}

std::string step_key(const PlanStep& s) {
    std::string k = agent::to_string(s.kind) + "|" + s.agent + "|" + s.name;
    for (const auto& a : s.key_args) k += "|" + a + "=" + (s.args.contains(a) ? agent::canonical_dump(s.args[a]) : "-");
    return k;
}

Plan actions_of(const agent::Trace& trace) {
    Plan p;
    for (const auto& e : trace.events) {
        if (!e.is_action()) continue;
        PlanStep s;
        s.kind = e.kind;
        s.agent = e.agent;
        s.name = e.name;
        s.args = e.args;
        if (e.kind == EventKind::ToolCall) s.key_args = backend::tool_key_args(e.name);
        if (e.kind == EventKind::SubagentRequest) s.key_args = {"task"};
        p.push_back(s);
    }
    return p;
}

std::vector<std::string> keys(const Plan& p) {
    std::vector<std::string> out;
    for (const auto& s : p) out.push_back(step_key(s));
    return out;
}

std::map<std::string, std::string> answer_lines(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto colon = line.find(": ");
        if (colon != std::string::npos) out[line.substr(0, colon)] = line.substr(colon + 2);
    }
    return out;
}

std::vector<double> numbers(const std::string& s) {
    std::vector<double> out;
    std::string cur;
    for (char c : s + " ") {
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '.' || c == 'e') {
            cur += c;
        } else if (!cur.empty()) {
            out.push_back(std::stod(cur));
            cur.clear();
        }
    }
    return out;
}

// Independent check of one reported value against an expected field.
::testing::AssertionResult agrees(const ExpectedField& f, const std::string& got) {
    auto within = [&](double g, double w) { return std::abs(g - w) <= std::max(f.abs_tol, f.rel_tol * std::abs(w)) + 5e-4; };
    switch (f.comparison) {
        case Comparison::ExactString:
            if (got == f.value.get<std::string>()) return ::testing::AssertionSuccess();
            break;
        case Comparison::Numeric: {
            const auto n = numbers(got);
            if (n.size() == 1 && within(n[0], f.value.get<double>())) return ::testing::AssertionSuccess();
            break;
        }
        case Comparison::Vector: {
            const auto n = numbers(got);
            bool ok = n.size() == 3;
            for (std::size_t i = 0; ok && i < 3; ++i) ok = within(n[i], f.value[i].get<double>());
            if (ok) return ::testing::AssertionSuccess();
            break;
        }
        case Comparison::StringSet: {
            std::set<std::string> want, have;
            for (const auto& v : f.value) want.insert(v.get<std::string>());
            std::istringstream in(got);
            std::string part;
            while (std::getline(in, part, ',')) {
                part.erase(0, part.find_first_not_of(' '));
                if (part != "none") have.insert(part);
            }
            if (want == have) return ::testing::AssertionSuccess();
            break;
        }
    }
    return ::testing::AssertionFailure() << f.name << ": got '" << got << "', want " << f.value.dump();
}

}  // namespace

// ------------------------------------------------------------------ phantoms

TEST(Phantom, PreprocessedGliomaWritesFourFilesAndOneLesion) {
    const auto root = neuroagent::testing::scratch_dir("bench_g1");
    const Phantom p = generate_phantom(glioma_spec(), root);
    ASSERT_EQ(p.bundle.timepoints.size(), 1u);
    EXPECT_EQ(p.bundle.timepoints[0].files.size(), 4u);
    for (const auto& [m, rel] : p.bundle.timepoints[0].files) EXPECT_TRUE(std::filesystem::exists(root / rel)) << m;
    const Oracle o(glioma_spec(), p.truth);
    EXPECT_EQ(o.lesions("t0").size(), 1u);
}

TEST(Phantom, NewMetastasisRaisesFollowUpCount) {
    const auto s = metastasis_spec();
    const Oracle o(s, build_ground_truth(s));
    // One resolves, one appears: the count stays, so drop the resolution to see +1.
    auto grown = s;
    grown.lesions[1].scales = {1.0, 1.0};
    const Oracle g(grown, build_ground_truth(grown));
    EXPECT_EQ(g.lesions("t1").size(), g.lesions("t0").size() + 1);
    EXPECT_EQ(o.lesions("t1").size(), o.lesions("t0").size());
}

TEST(Phantom, UnprocessedHeadersDifferFromTheAtlas) {
    const auto root = neuroagent::testing::scratch_dir("bench_raw");
    const Phantom p = generate_phantom(glioma_spec(false), root);
    const auto v = volume::read_volume(root / p.bundle.timepoints[0].files.at("T1"));
    EXPECT_FALSE(volume::compare_headers(v.grid, toolbox::sri24().grid).equal);
    // The skull shell is present only in scanner-space scans.
    bool skull = false;
    for (float x : v.data) skull = skull || x == static_cast<float>(kSkullIntensity);
    EXPECT_TRUE(skull);
}

TEST(Phantom, PreprocessedImagesMatchTheIntensityModel) {
    const auto root = neuroagent::testing::scratch_dir("bench_int");
    const auto spec = glioma_spec();
    const Phantom p = generate_phantom(spec, root);
    const auto& atlas = toolbox::sri24();
    for (const auto& m : toolbox::modality_names()) {
        const auto v = volume::read_volume(root / p.bundle.timepoints[0].files.at(m));
        const auto& labels = p.truth->lesions.at("t0").grid;
        const auto& d = v.grid.dims();
        for (int k = 0; k < d[2]; k += 3)
            for (int j = 0; j < d[1]; j += 3)
                for (int i = 0; i < d[0]; i += 3) {
                    const auto w = v.grid.index_to_world({double(i), double(j), double(k)});
                    const int want = tissue_intensity(m, toolbox::anatomy_label_at(atlas, w),
                                                      static_cast<int>(labels.at(i, j, k)), 1.0);
                    ASSERT_EQ(v.at(i, j, k), static_cast<float>(want)) << m << " " << i << "," << j << "," << k;
                }
    }
}

TEST(Phantom, LesionOutsideBrainIsSpecError) {
    auto s = glioma_spec();
    s.lesions[0].center = {14.0, 0.0, 0.0};
    EXPECT_THROW(s.validate(), SpecError);
    EXPECT_THROW(generate_phantom(s, neuroagent::testing::scratch_dir("bench_bad")), SpecError);
}

TEST(Phantom, InvariantViolationsAreSpecErrors) {
    auto two = glioma_spec();
    two.lesions.push_back({{-5.0, -5.0, 0.0}, {2.0, 2.0, 2.0}, 1.0, {1.0}});
    EXPECT_THROW(two.validate(), SpecError);  // glioma: exactly one lesion
    auto absent = glioma_spec();
    absent.lesions[0].scales = {0.0};
    EXPECT_THROW(absent.validate(), SpecError);
    auto touching = metastasis_spec();
    touching.lesions[1].center = {6.0, 8.0, -2.5};
    EXPECT_THROW(touching.validate(), SpecError);
    EXPECT_NO_THROW(metastasis_spec().validate());
}

TEST(Phantom, SpecJsonRoundTrip) {
    const auto s = metastasis_spec();
    EXPECT_EQ(PhantomSpec::from_json(s.to_json()), s);
    json bad = s.to_json();
    bad["grid"]["dims"] = {1, 2, 3};
    EXPECT_THROW(PhantomSpec::from_json(bad), std::invalid_argument);
}

TEST(Phantom, GenerationIsDeterministic) {
    const auto a = neuroagent::testing::scratch_dir("bench_det_a");
    const auto b = neuroagent::testing::scratch_dir("bench_det_b");
    generate_phantom(metastasis_spec(), a);
    generate_phantom(metastasis_spec(), b);
    for (const auto& tp : phantom_bundle(metastasis_spec()).timepoints)
        for (const auto& [m, rel] : tp.files) {
            std::ifstream fa(a / rel, std::ios::binary), fb(b / rel, std::ios::binary);
            std::stringstream sa, sb;
            sa << fa.rdbuf();
            sb << fb.rdbuf();
            EXPECT_EQ(sa.str(), sb.str()) << rel;
        }
}

// ------------------------------------------------------------------ oracle

TEST(Oracle, VolumesAreVoxelCountsTimesSpacing) {
    const auto s = metastasis_spec();
    const auto truth = build_ground_truth(s);
    const Oracle o(s, truth);
    for (const std::string tp : {"t0", "t1"}) {
        std::size_t n = 0;
        for (float x : truth->lesions.at(tp).grid.data) n += x != 0.0f;
        EXPECT_DOUBLE_EQ(o.total_volume_mm3(tp), static_cast<double>(n) * 1.0);
        double by_label = 0.0;
        for (int l = 1; l <= 3; ++l) by_label += o.label_volume_mm3(tp, l);
        EXPECT_DOUBLE_EQ(by_label, o.total_volume_mm3(tp));
    }
}

TEST(Oracle, LesionsOrderedBySize) {
    const auto s = metastasis_spec();
    const Oracle o(s, build_ground_truth(s));
    const auto& ls = o.lesions("t0");
    ASSERT_EQ(ls.size(), 2u);
    EXPECT_GT(ls[0].voxels.size(), ls[1].voxels.size());
    EXPECT_EQ(ls[0].instance, 1);
}

TEST(Oracle, MatchPairsPersistingLesions) {
    const auto s = metastasis_spec();
    const Oracle o(s, build_ground_truth(s));
    const OracleMatch m = o.match("t0", "t1");
    ASSERT_EQ(m.pairs.size(), 1u);
    EXPECT_EQ(m.pairs[0].id_t0, 1);
    EXPECT_EQ(m.new_ids.size(), 1u);
    EXPECT_EQ(m.resolved_ids, std::vector<int>{2});
}

TEST(Oracle, OffsetCubesPairAtExactlyHalf) {
    std::vector<volume::Index3> a, b;
    for (int k = 0; k < 6; ++k)
        for (int j = 0; j < 6; ++j)
            for (int i = 0; i < 6; ++i) {
                a.push_back({i, j, k});
                b.push_back({i + 2, j, k});
            }
    // |a ∩ b| = 4*6*6 = 144, |a ∪ b| = 8*6*6 = 288.
    const OracleMatch m = Oracle::match_sets({a}, {b}, 0.5);
    ASSERT_EQ(m.pairs.size(), 1u);
    EXPECT_DOUBLE_EQ(m.pairs[0].iou, 0.5);
    EXPECT_TRUE(Oracle::match_sets({a}, {b}, 0.5000001).pairs.empty());
}

TEST(Oracle, OptimalPairingBeatsGreedy) {
    auto run = [](int x0, int w) {
        std::vector<volume::Index3> v;
        for (int i = x0; i < x0 + w; ++i) v.push_back({i, 0, 0});
        return v;
    };
    // IoU(a1,b1) = 8/12 is the best single pair, but taking it leaves a2 with
    // nothing. The optimum pairs a1-b2 (0.4) and a2-b1 (2/12).
    const OracleMatch m = Oracle::match_sets({run(0, 10), run(10, 4)}, {run(2, 10), run(0, 4)}, 0.15);
    ASSERT_EQ(m.pairs.size(), 2u);
    EXPECT_EQ(m.pairs[0].id_t0, 1);
    EXPECT_EQ(m.pairs[0].id_t1, 2);
    EXPECT_EQ(m.pairs[1].id_t1, 1);
    EXPECT_TRUE(m.new_ids.empty());
}

TEST(Oracle, NativeAnatomyMatchesToolboxSegmentation) {
    const auto root = neuroagent::testing::scratch_dir("bench_anat");
    for (int turns : {1, 2, 3}) {
        auto spec = glioma_spec(false);
        spec.quarter_turns = turns;
        spec.translation = {static_cast<double>(turns) - 2.0, 3.0, -1.0};
        const Phantom p = generate_phantom(spec, root);
        const Oracle o(spec, p.truth);
        toolbox::CaseContext ctx{p.bundle, p.truth, root, nullptr};
        toolbox::HandleStore store;
        toolbox::Toolbox tb(ctx, store);
        const auto loaded = tb.load_image(p.bundle.timepoints[0].files.at("T1"));
        ASSERT_TRUE(loaded.ok());
        const auto seg = tb.segment_anatomy(loaded.handles[0].id);
        ASSERT_TRUE(seg.ok());
        for (const auto& v : seg.payload["volumes_mm3"])
            EXPECT_DOUBLE_EQ(v["volume_mm3"].get<double>(), o.region_volume_mm3(v["id"].get<int>()))
                << "turns " << turns << " region " << v["id"];
    }
}

// ------------------------------------------------------------------ items

TEST(Items, TierOneSinglePlanIsSegmentThenAnswer) {
    const auto s = glioma_spec();
    const Oracle o(s, build_ground_truth(s));
    const Intent in{Template::SegPathology, "g1", "glioma", {"t0"}, ""};
    const BenchmarkItem item = build_item("x", in, s, o);
    const Plan& single = item.expected_plans.at(Topology::Single);
    ASSERT_EQ(single.size(), 2u);
    EXPECT_EQ(single[0].name, "tool_segment_pathology");
    EXPECT_EQ(single[1].kind, EventKind::FinalAnswer);
    EXPECT_GE(item.expected_plans.at(Topology::Orchestrator).size(), single.size() + 2);
    ASSERT_EQ(item.expected_answer.size(), 1u);
    EXPECT_EQ(item.expected_answer[0].value, "outputs/g1/t0/seg_glioma.nii");
}

TEST(Items, VolumeAnswerIsBruteForceCount) {
    const auto s = glioma_spec();
    const auto truth = build_ground_truth(s);
    const Oracle o(s, truth);
    const auto f = expected_answer({Template::TotalVolume, "g1", "glioma", {"t0"}, ""}, o);
    std::size_t n = 0;
    for (float x : truth->instances.at("t0").data) n += x != 0.0f;
    ASSERT_EQ(f.size(), 1u);
    EXPECT_DOUBLE_EQ(f[0].value.get<double>(), static_cast<double>(n));
    EXPECT_DOUBLE_EQ(f[0].rel_tol, kVolumeRelTol);
}

TEST(Items, IncompatibleTemplatesAreRejected) {
    const auto s = glioma_spec();
    const Oracle o(s, build_ground_truth(s));
    EXPECT_THROW(build_item("x", {Template::VolumeChange, "g1", "glioma", {"t0", "t1"}, ""}, s, o), TemplateError);
    EXPECT_THROW(build_item("x", {Template::LesionCount, "g1", "metastasis", {"t0"}, ""}, s, o), TemplateError);
    EXPECT_THROW(build_item("x", {Template::RegionVolume, "g1", "", {"t0"}, "Nowhere"}, s, o), TemplateError);
    EXPECT_THROW(build_item("x", {Template::LesionCount, "other", "glioma", {"t0"}, ""}, s, o), TemplateError);
}

TEST(Items, RawCasesGainPreprocessingSteps) {
    const auto pre = glioma_spec(true), raw = glioma_spec(false);
    const Intent in{Template::LesionCount, "g1", "glioma", {"t0"}, ""};
    const auto a = expected_plans(in, pre), b = expected_plans(in, raw);
    EXPECT_EQ(b.at(Topology::Single).size(), a.at(Topology::Single).size() + 8);
    int strips = 0;
    for (const auto& s : b.at(Topology::Single)) strips += s.name == "tool_skull_strip";
    EXPECT_EQ(strips, 4);
}

// ------------------------------------------------------------------ suites

TEST(Suite, TinyProfileHasThreeValidItems) {
    const Dataset ds = generate_suite(SuiteConfig::tiny_profile());
    ASSERT_EQ(ds.items.size(), 3u);
    EXPECT_EQ(ds.cases.size(), 3u);
    for (const auto& it : ds.items) {
        EXPECT_EQ(it.expected_plans.size(), 4u);
        for (const auto& [t, p] : it.expected_plans) EXPECT_EQ(p.back().kind, EventKind::FinalAnswer);
        EXPECT_FALSE(it.expected_answer.empty());
        if (it.tier == 3) EXPECT_GE(it.timepoints.size(), 2u);
    }
}

TEST(Suite, SameSeedGivesIdenticalFiles) {
    const std::string a = to_jsonl(generate_suite(SuiteConfig::tiny_profile(7)));
    const std::string b = to_jsonl(generate_suite(SuiteConfig::tiny_profile(7)));
    EXPECT_EQ(a, b);
    EXPECT_NE(a, to_jsonl(generate_suite(SuiteConfig::tiny_profile(8))));
}

TEST(Suite, CountsFollowTheConfig) {
    const Dataset& ds = small_suite();
    std::map<int, int> per_tier;
    for (const auto& it : ds.items) ++per_tier[it.tier];
    EXPECT_EQ(per_tier[1], 8);
    EXPECT_EQ(per_tier[2], 40);
    EXPECT_EQ(per_tier[3], 30);
    EXPECT_EQ(ds.cases.size(), 23u);
    std::set<std::string> ids;
    for (const auto& it : ds.items) EXPECT_TRUE(ids.insert(it.id).second);
    EXPECT_TRUE(std::is_sorted(ds.items.begin(), ds.items.end(),
                               [](const auto& a, const auto& b) { return a.id < b.id; }));
}

TEST(Suite, PlanLengthOrderingPerItem) {
    for (const auto& it : small_suite().items) {
        const auto n = [&](Topology t) { return it.expected_plans.at(t).size(); };
        EXPECT_LE(n(Topology::Single), n(Topology::AgentsAsTools)) << it.id;
        EXPECT_EQ(n(Topology::AgentsAsTools), n(Topology::Handoffs)) << it.id;
        EXPECT_LE(n(Topology::AgentsAsTools), n(Topology::Orchestrator)) << it.id;
        if (it.tier > 1) {
            EXPECT_LT(n(Topology::Single), n(Topology::AgentsAsTools)) << it.id;
            EXPECT_LT(n(Topology::AgentsAsTools), n(Topology::Orchestrator)) << it.id;
        } else if (it.tmpl == Template::SegPathology) {
            EXPECT_EQ(n(Topology::Single), 2u) << it.id;
        }
        for (const auto& [t, p] : it.expected_plans) EXPECT_LE(p.size(), static_cast<std::size_t>(agent::kDefaultBudget));
    }
}

TEST(Suite, MeanPlanLengthGrowsWithTier) {
    // Holds for the reference mix; small suites with many raw cases can invert tiers 2 and 3.
    const auto means = mean_plan_lengths(generate_suite(SuiteConfig::default_profile()).items);
    for (Topology t : agent::all_topologies()) {
        EXPECT_LT(means.at(1).at(t), means.at(2).at(t)) << agent::to_string(t);
        EXPECT_LT(means.at(2).at(t), means.at(3).at(t)) << agent::to_string(t);
    }
}

// ------------------------------------------------------------------ format

TEST(Format, SaveLoadIsIdentity) {
    const Dataset& ds = small_suite();
    const std::string text = to_jsonl(ds);
    const Dataset back = from_jsonl(text);
    EXPECT_EQ(back, ds);
    EXPECT_EQ(to_jsonl(back), text);
    const auto file = neuroagent::testing::scratch_dir("bench_fmt") / "d.jsonl";
    save_dataset(ds, file);
    EXPECT_EQ(load_dataset(file), ds);
}

TEST(Format, MissingExpectedAnswerNamesLineAndField) {
    const Dataset ds = generate_suite(SuiteConfig::tiny_profile());
    std::vector<std::string> lines;
    std::istringstream in(to_jsonl(ds));
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    json rec = json::parse(lines.back());
    rec.erase("expected_answer");
    lines.back() = rec.dump();
    std::string text;
    for (const auto& l : lines) text += l + "\n";
    try {
        from_jsonl(text);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_EQ(e.line(), lines.size());
        EXPECT_EQ(e.field(), "expected_answer");
    }
}

TEST(Format, UnknownFieldsArePreserved) {
    const Dataset ds = generate_suite(SuiteConfig::tiny_profile());
    std::vector<std::string> lines;
    std::istringstream in(to_jsonl(ds));
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    json item = json::parse(lines.back());
    item["notes"] = "checked by hand";
    item.erase("record");  // external files may omit the record type on items
    lines.back() = item.dump();
    json manifest = json::parse(lines.front());
    manifest["source"] = {{"release", 2}};
    lines.front() = manifest.dump();
    std::string text;
    for (const auto& l : lines) text += l + "\n";
    const Dataset back = from_jsonl(text);
    EXPECT_EQ(back.items.back().extra["notes"], "checked by hand");
    EXPECT_EQ(back.manifest.extra["source"]["release"], 2);
    EXPECT_NE(to_jsonl(back).find("\"notes\":\"checked by hand\""), std::string::npos);
}

TEST(Format, RejectsBadRecords) {
    EXPECT_THROW(from_jsonl(""), FormatError);
    EXPECT_THROW(from_jsonl("{\"record\":\"item\"}\n"), FormatError);
    EXPECT_THROW(from_jsonl("{\"record\":\"manifest\",\"schema_version\":9,\"seed\":1}\n"), FormatError);
    EXPECT_THROW(from_jsonl("{\"record\":\"manifest\",\"schema_version\":1,\"seed\":1}\nnot json\n"), FormatError);
}

// ------------------------------------------------------------------ replay

TEST(Replay, ScriptedReplayReproducesEveryPlan) {
    const Dataset& ds = small_suite();
    CaseLibrary lib(ds, small_suite_root());
    for (const auto& it : ds.items) {
        const auto ctx = lib.context(it.case_id);
        for (const auto& [t, plan] : it.expected_plans) {
            backend::ScriptedBackend sb(plan);
            const auto r = agent::run_episode(it.question, ctx, t, sb);
            EXPECT_EQ(r.trace.error_count(), 0u) << it.id << " " << agent::to_string(t);
            EXPECT_EQ(keys(actions_of(r.trace)), keys(plan)) << it.id << " " << agent::to_string(t);
            const auto lines = answer_lines(r.final_text);
            for (const auto& f : it.expected_answer) {
                auto got = lines.find(f.name);
                ASSERT_NE(got, lines.end()) << it.id << " " << agent::to_string(t) << " lacks " << f.name;
                EXPECT_TRUE(agrees(f, got->second)) << it.id << " " << agent::to_string(t);
            }
        }
    }
}

TEST(Replay, PlannerFollowsTheExpectedPlans) {
    const Dataset& ds = small_suite();
    CaseLibrary lib(ds, small_suite_root());
    for (const auto& it : ds.items) {
        const auto ctx = lib.context(it.case_id);
        for (const auto& [t, plan] : it.expected_plans) {
            backend::RuleBasedPlanner planner;
            const auto r = agent::run_episode(it.question, ctx, t, planner);
            EXPECT_EQ(keys(actions_of(r.trace)), keys(plan)) << it.id << " " << agent::to_string(t);
        }
    }
}
