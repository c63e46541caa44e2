#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "case_fixture.hpp"
#include "neuroagent/agent/kernel.hpp"
#include "neuroagent/backend/scripted.hpp"
#include "neuroagent/bench/dataset.hpp"
#include "neuroagent/eval/eval.hpp"
#include "neuroagent/eval/perturb.hpp"

using namespace neuroagent;
using namespace neuroagent::eval;
using agent::EventKind;
using agent::Topology;
using agent::Trace;
using agent::TraceEvent;
using backend::Plan;
using backend::PlanStep;

namespace {

PlanStep tool(const std::string& name, json args = json::object()) {
    PlanStep s;
    s.agent = "generalist";
    s.name = name;
    s.args = std::move(args);
    s.key_args = backend::tool_key_args(name);
    return s;
}

PlanStep final_step() {
    PlanStep s;
    s.kind = EventKind::FinalAnswer;
    s.agent = "generalist";
    return s;
}

TraceEvent event(EventKind kind, const std::string& name, json args = json::object(), std::string text = "") {
    TraceEvent e;
    e.agent = "generalist";
    e.kind = kind;
    e.name = name;
    e.args = std::move(args);
    e.text = std::move(text);
    return e;
}

Trace trace_of(const Plan& plan, const std::string& answer = "") {
    Trace t;
    for (const auto& s : plan) t.events.push_back(event(s.kind, s.name, s.args, s.kind == EventKind::FinalAnswer ? answer : ""));
    return t;
}

bench::ExpectedField numeric(const std::string& name, double v, double rel = 0.0, double abs = 0.0) {
    bench::ExpectedField f;
    f.name = name;
    f.value = v;
    f.comparison = bench::Comparison::Numeric;
    f.rel_tol = rel;
    f.abs_tol = abs;
    f.aliases = bench::default_aliases(name);
    return f;
}

bench::ExpectedField text_field(const std::string& name, const std::string& v) {
    bench::ExpectedField f;
    f.name = name;
    f.value = v;
    f.aliases = bench::default_aliases(name);
    return f;
}

// Small suite on disk, shared by the run-level tests.
struct Suite {
    bench::Dataset ds;
    std::filesystem::path root;
    std::unique_ptr<bench::CaseLibrary> lib;
};

Suite& suite() {
    static Suite s = [] {
        Suite out;
        bench::SuiteConfig c = bench::SuiteConfig::default_profile(4242);
        c.profile = "eval";
        c.tiers = {{1, {3, 4}}, {2, {6, 20}}, {3, {3, 10}}};
        c.raw_fraction = {{1, 0.0}, {2, 0.3}, {3, 0.3}};
        out.ds = bench::generate_suite(c);
        out.root = neuroagent::testing::scratch_dir("eval_suite");
        bench::write_dataset(out.ds, out.root);
        out.lib = std::make_unique<bench::CaseLibrary>(out.ds, out.root);
        return out;
    }();
    return s;
}

Trace replay(const bench::BenchmarkItem& item, Topology t, const Plan& plan) {
    backend::ScriptedBackend sb(plan);
    return agent::run_episode(item.question, suite().lib->context(item.case_id), t, sb).trace;
}

}  // namespace

// ------------------------------------------------------------------ fidelity

TEST(Fidelity, IdenticalTraceScoresOne) {
    const Plan p{tool("tool_skull_strip", {{"image", "obj_1"}}), tool("tool_segment_pathology", {{"model", "glioma"}}),
                 final_step()};
    const auto f = plan_fidelity(trace_of(p), p);
    EXPECT_DOUBLE_EQ(f.precision, 1.0);
    EXPECT_DOUBLE_EQ(f.recall, 1.0);
    EXPECT_EQ(f.predicted, 2u);  // final answer not scored
}

TEST(Fidelity, ExtraListLabelsCall) {
    const Plan expected{tool("tool_skull_strip"), tool("tool_register", {{"target", "atlas:SRI24"}}),
                        tool("tool_segment_pathology", {{"model", "glioma"}}), final_step()};
    Plan predicted = expected;
    predicted.insert(predicted.end() - 1, tool("tool_list_labels", {{"scope", "glioma"}}));
    const auto f = plan_fidelity(trace_of(predicted), expected);
    EXPECT_DOUBLE_EQ(f.precision, 0.75);
    EXPECT_DOUBLE_EQ(f.recall, 1.0);
    ASSERT_EQ(f.extra.size(), 1u);
    EXPECT_NE(f.extra[0].find("tool_list_labels"), std::string::npos);
}

TEST(Fidelity, HandleIdsNeverDecideAMatch) {
    const Plan expected{tool("tool_skull_strip", {{"image", "obj_1"}}), final_step()};
    const Plan predicted{tool("tool_skull_strip", {{"image", "obj_7"}}), final_step()};
    EXPECT_DOUBLE_EQ(plan_fidelity(predicted, expected).precision, 1.0);
    const Plan wrong_model{tool("tool_segment_pathology", {{"model", "meningioma"}}), final_step()};
    const Plan want_model{tool("tool_segment_pathology", {{"model", "glioma"}}), final_step()};
    const auto f = plan_fidelity(wrong_model, want_model);
    EXPECT_DOUBLE_EQ(f.precision, 0.0);
    EXPECT_DOUBLE_EQ(f.recall, 0.0);
}

TEST(Fidelity, EmptyPredictionConvention) {
    const Plan expected{tool("tool_skull_strip"), final_step()};
    EXPECT_DOUBLE_EQ(plan_fidelity(Plan{}, expected).precision, 0.0);
    EXPECT_DOUBLE_EQ(plan_fidelity(Plan{}, expected).recall, 0.0);
    EXPECT_DOUBLE_EQ(plan_fidelity(Plan{final_step()}, Plan{final_step()}).precision, 1.0);
    EXPECT_DOUBLE_EQ(plan_fidelity(Plan{final_step()}, Plan{final_step()}).recall, 1.0);
}

TEST(Fidelity, DelegationStepsMatchOnTask) {
    PlanStep req;
    req.kind = EventKind::SubagentRequest;
    req.agent = "orchestrator";
    req.name = "segmentation";
    req.args = {{"task", "segment_pathology"}, {"params", {{"timepoint", "t0"}}}};
    req.key_args = {"task"};
    PlanStep other = req;
    other.args["params"]["timepoint"] = "t1";
    EXPECT_DOUBLE_EQ(plan_fidelity(Plan{other}, Plan{req}).precision, 1.0);
    other.args["task"] = "preprocess";
    EXPECT_DOUBLE_EQ(plan_fidelity(Plan{other}, Plan{req}).precision, 0.0);
}

// Multiset intersection counted independently of the scorer.
TEST(Fidelity, RandomMultisetsAgreeWithCounting) {
    std::mt19937 rng(17);
    const std::vector<std::string> names{"tool_skull_strip", "tool_register", "tool_localize", "tool_list_labels"};
    for (int trial = 0; trial < 300; ++trial) {
        auto draw = [&](int n) {
            Plan p;
            for (int i = 0; i < n; ++i) {
                const auto& nm = names[rng() % names.size()];
                json args = json::object();
                if (nm == "tool_register") args["target"] = rng() % 2 ? "atlas:SRI24" : "atlas:MNI152";
                if (nm == "tool_localize") args["lesion_id"] = static_cast<int>(rng() % 3) + 1;
                if (nm == "tool_list_labels") args["scope"] = "anatomy";
                p.push_back(tool(nm, args));
            }
            return p;
        };
        Plan expected = draw(static_cast<int>(rng() % 7));
        Plan predicted = draw(static_cast<int>(rng() % 7));
        std::map<std::string, int> ce, cp;
        for (const auto& s : expected) ++ce[s.name + s.args.dump()];
        for (const auto& s : predicted) ++cp[s.name + s.args.dump()];
        std::size_t common = 0;
        for (const auto& [k, n] : ce) common += static_cast<std::size_t>(std::min(n, cp[k]));
        const auto f = plan_fidelity(predicted, expected);
        ASSERT_EQ(f.matched.size(), common);
        EXPECT_DOUBLE_EQ(f.precision, predicted.empty() ? (expected.empty() ? 1.0 : 0.0)
                                                         : double(common) / double(predicted.size()));
        EXPECT_DOUBLE_EQ(f.recall, expected.empty() ? 1.0 : double(common) / double(expected.size()));
        // Order invariance on both sides.
        std::shuffle(predicted.begin(), predicted.end(), rng);
        std::shuffle(expected.begin(), expected.end(), rng);
        const auto g = plan_fidelity(predicted, expected);
        EXPECT_EQ(g.precision, f.precision);
        EXPECT_EQ(g.recall, f.recall);
        EXPECT_EQ(g.matched, f.matched);
        // Monotone degradation.
        Plan more = predicted;
        more.push_back(tool("tool_visualize"));
        const auto h = plan_fidelity(more, expected);
        EXPECT_LT(h.precision, std::max(f.precision, 1e-12));
        EXPECT_EQ(h.recall, f.recall);
    }
}

TEST(Errors, CountsEveryToolError) {
    Trace clean = trace_of({tool("tool_skull_strip"), final_step()});
    EXPECT_EQ(count_errors(clean), 0u);
    Trace typo;
    typo.events = {event(EventKind::ToolCall, "tool_skul_strip"), event(EventKind::ToolError, "tool_skul_strip"),
                   event(EventKind::ToolCall, "tool_skull_strip"), event(EventKind::FinalAnswer, "")};
    EXPECT_EQ(count_errors(typo), 1u);
}

TEST(Errors, PreconditionRetriesCountPerOccurrence) {
    bench::PhantomSpec s;
    s.case_id = "raw1";
    s.pathology = "glioma";
    s.preprocessed = false;
    s.seed = 3;
    s.lesions.push_back({{3.0, 4.0, 1.0}, {4.5, 4.5, 4.0}, 1.0, {1.0}});
    const auto root = neuroagent::testing::scratch_dir("eval_raw");
    const auto ph = bench::generate_phantom(s, root);
    toolbox::CaseContext ctx{ph.bundle, ph.truth, root, nullptr};
    const json seg{{"t1", "obj_1"}, {"t1ce", "obj_2"}, {"t2", "obj_3"}, {"flair", "obj_4"}, {"model", "glioma"}};
    Plan p{tool("tool_segment_pathology", seg), tool("tool_segment_pathology", seg),
           tool("tool_segment_pathology", seg), final_step()};
    backend::ScriptedBackend sb(p);
    const auto r = agent::run_episode("Segment the glioma in case raw1.", ctx, Topology::Single, sb);
    EXPECT_EQ(count_errors(r.trace), 3u);
    for (const auto& e : r.trace.events)
        if (e.kind == EventKind::ToolError) EXPECT_EQ(e.error_kind, "precondition_failed");
}

// ------------------------------------------------------------------ judge

TEST(Judge, ThreeOfFourFields) {
    const std::vector<bench::ExpectedField> fields{numeric("lesion_count", 2), numeric("total_volume_mm3", 812.0, 0.01),
                                                   numeric("enhancing_volume_mm3", 100.0, 0.01),
                                                   numeric("edema_volume_mm3", 300.0, 0.01)};
    const std::string answer = "lesion_count: 2\ntotal_volume_mm3: 815\nenhancing_volume_mm3: 100.4\n";
    const auto v = judge_answer(answer, fields);
    EXPECT_DOUBLE_EQ(v.inclusion_rate(), 0.75);
    EXPECT_DOUBLE_EQ(v.accuracy(), 0.75);
}

TEST(Judge, AbstentionIsIncludedButWrong) {
    const std::vector<bench::ExpectedField> fields{numeric("lesion_count", 2)};
    for (const std::string a : {"lesion_count: cannot find", "Lesion count: not applicable."}) {
        const auto v = judge_answer(a, fields);
        EXPECT_TRUE(v.fields[0].included) << a;
        EXPECT_FALSE(v.fields[0].correct) << a;
    }
}

TEST(Judge, EchoOfExpectedScoresOne) {
    bench::ExpectedField vec;
    vec.name = "centroid_mm";
    vec.value = {1.5, -2.0, 3.25};
    vec.comparison = bench::Comparison::Vector;
    vec.abs_tol = bench::kCentroidAbsTol;
    vec.aliases = bench::default_aliases(vec.name);
    bench::ExpectedField set;
    set.name = "new_lesion_lobes";
    set.value = {"Left frontal", "Right occipital"};
    set.comparison = bench::Comparison::StringSet;
    set.aliases = bench::default_aliases(set.name);
    const std::vector<bench::ExpectedField> fields{numeric("total_volume_mm3", 812.5, 0.01), vec, set,
                                                   text_field("segmentation_file", "outputs/c/t0/seg_glioma.nii")};
    const std::string answer =
        "total_volume_mm3: 812.5\ncentroid_mm: (1.5, -2, 3.25)\nnew_lesion_lobes: Left frontal, Right occipital\n"
        "segmentation_file: outputs/c/t0/seg_glioma.nii\n";
    const auto v = judge_answer(answer, fields);
    EXPECT_DOUBLE_EQ(v.inclusion_rate(), 1.0);
    EXPECT_DOUBLE_EQ(v.accuracy(), 1.0);
}

TEST(Judge, FreeTextForms) {
    const std::vector<bench::ExpectedField> fields{numeric("total_volume_mm3", 812.0, 0.01),
                                                   numeric("lesion_count", 3)};
    const auto v = judge_answer(
        "After segmentation, the total volume is 810.2 mm3. The **Lesion Count** is 3; nothing else was found.",
        fields);
    EXPECT_TRUE(v.fields[0].correct);
    EXPECT_EQ(v.fields[0].reported, "810.2 mm3");
    EXPECT_TRUE(v.fields[1].correct);
    const auto w = judge_answer("- **Total volume (mm3)**: 900", fields);
    EXPECT_FALSE(w.fields[0].included);  // "(mm3)" is not part of any alias
    const auto u = judge_answer("* Total-Volume: 900", fields);
    EXPECT_TRUE(u.fields[0].included);
    EXPECT_FALSE(u.fields[0].correct);
}

TEST(Judge, UnparseableAnswerIncludesNothing) {
    const auto v = judge_answer("I could not complete the analysis", {numeric("lesion_count", 1)});
    EXPECT_DOUBLE_EQ(v.inclusion_rate(), 0.0);
    EXPECT_DOUBLE_EQ(v.accuracy(), 0.0);
}

TEST(Judge, TolerancesArePinnedAtTheBoundary) {
    const auto f = numeric("total_volume_mm3", 1000.0, bench::kVolumeRelTol);
    EXPECT_TRUE(value_matches(f, "1010"));
    EXPECT_TRUE(value_matches(f, "990.0"));
    EXPECT_FALSE(value_matches(f, "1010.6"));
    const auto count = numeric("lesion_count", 3);
    EXPECT_FALSE(value_matches(count, "4"));
    EXPECT_FALSE(value_matches(count, "2.99"));
    EXPECT_EQ(extract_numbers("812 mm3"), std::vector<double>{812.0});
    EXPECT_EQ(extract_numbers("(1, -2.5, .5)"), (std::vector<double>{1.0, -2.5, 0.5}));
}

TEST(Judge, SetsIgnoreOrderAndCase) {
    bench::ExpectedField set;
    set.name = "new_lesion_lobes";
    set.value = json::array({"Left frontal", "Right parietal"});
    set.comparison = bench::Comparison::StringSet;
    EXPECT_TRUE(value_matches(set, "right parietal and Left Frontal"));
    EXPECT_FALSE(value_matches(set, "Left frontal"));
    set.value = json::array();
    EXPECT_TRUE(value_matches(set, "none"));
}

TEST(Judge, DeterministicAndCorrectImpliesIncluded) {
    std::mt19937 rng(5);
    const std::vector<bench::ExpectedField> fields{numeric("lesion_count", 2), numeric("total_volume_mm3", 50.0, 0.01),
                                                   text_field("segmentation_file", "a.nii")};
    const std::vector<std::string> pieces{"lesion_count: 2\n", "lesion count is 3. ", "total_volume_mm3: 50.2\n",
                                          "total volume: cannot find\n", "segmentation_file: a.nii\n", "noise: 1\n",
                                          "Segmentation file is b.nii\n"};
    for (int trial = 0; trial < 200; ++trial) {
        std::string a;
        for (int k = 0; k < 4; ++k) a += pieces[rng() % pieces.size()];
        const auto v1 = judge_answer(a, fields), v2 = judge_answer(a, fields);
        EXPECT_EQ(v1.to_json(), v2.to_json());
        std::size_t inc = 0, cor = 0;
        for (const auto& f : v1.fields) {
            EXPECT_TRUE(!f.correct || f.included);
            inc += f.included;
            cor += f.correct;
        }
        EXPECT_EQ(inc, v1.included);
        EXPECT_EQ(cor, v1.correct);
    }
}

// ------------------------------------------------------------------ runs

TEST(Run, MissingPlanIsConfigError) {
    auto item = suite().ds.items.front();
    item.expected_plans.erase(Topology::Orchestrator);
    EXPECT_THROW(evaluate_run(Trace{}, item, Topology::Orchestrator, "scripted", backend::PriceTable::defaults()),
                 ConfigError);
    EXPECT_THROW(evaluate_run(Trace{}, item, Topology::Single, "remote:unknown", backend::PriceTable::defaults()),
                 ConfigError);
}

TEST(Run, ScriptedReplayIsPerfect) {
    for (const auto& item : suite().ds.items)
        for (const auto& [t, plan] : item.expected_plans) {
            const auto r = evaluate_run(replay(item, t, plan), item, t, "scripted", backend::PriceTable::defaults());
            EXPECT_DOUBLE_EQ(r.fidelity.precision, 1.0) << item.id;
            EXPECT_DOUBLE_EQ(r.fidelity.recall, 1.0) << item.id;
            EXPECT_EQ(r.metrics.errors, 0u) << item.id;
            EXPECT_DOUBLE_EQ(r.metrics.inclusion_rate, 1.0) << item.id;
            EXPECT_DOUBLE_EQ(r.metrics.accuracy, 1.0) << item.id << "\n" << r.verdict.to_json().dump();
            EXPECT_EQ(r.metrics.actions, plan.size());
            EXPECT_EQ(r.metrics.cost_cents, 0.0);
        }
}

TEST(Run, CostFollowsThePriceTable) {
    const auto& item = suite().ds.items.front();
    const Trace t = replay(item, Topology::Single, item.expected_plans.at(Topology::Single));
    backend::PriceTable prices;
    prices.set("m", {100.0, 1000.0});
    const auto r = evaluate_run(t, item, Topology::Single, "remote:m", prices);
    EXPECT_GT(r.metrics.tokens_in, 0);
    EXPECT_NEAR(r.metrics.cost_cents, (100.0 * r.metrics.tokens_in + 1000.0 * r.metrics.tokens_out) / 1e6, 1e-12);
}

TEST(Run, DegradationHarness) {
    int extra = 0, deleted = 0, wrong = 0;
    for (const auto& item : suite().ds.items)
        for (const auto& [t, plan] : item.expected_plans) {
            const auto prices = backend::PriceTable::defaults();
            const double n = static_cast<double>(scored_steps(plan));

            const auto a = evaluate_run(replay(item, t, with_extra_call(plan)), item, t, "scripted", prices);
            EXPECT_DOUBLE_EQ(a.fidelity.precision, n / (n + 1.0)) << item.id;
            EXPECT_DOUBLE_EQ(a.fidelity.recall, 1.0) << item.id;
            EXPECT_DOUBLE_EQ(a.metrics.accuracy, 1.0) << item.id;
            ++extra;

            if (const auto del = without_step(plan)) {
                const auto b = evaluate_run(replay(item, t, *del), item, t, "scripted", prices);
                EXPECT_DOUBLE_EQ(b.fidelity.precision, 1.0) << item.id;
                EXPECT_DOUBLE_EQ(b.fidelity.recall, (n - 1.0) / n) << item.id;
                ++deleted;
            }
            bool degraded = false, any = false;
            for (std::size_t k = 0; k < segmentation_steps(plan); ++k) {
                const auto wm = with_wrong_model(plan, k);
                if (!wm) continue;
                const auto c = evaluate_run(replay(item, t, *wm), item, t, "scripted", prices);
                EXPECT_DOUBLE_EQ(c.fidelity.precision, (n - 1.0) / n) << item.id;
                EXPECT_DOUBLE_EQ(c.fidelity.recall, (n - 1.0) / n) << item.id;
                degraded = degraded || c.metrics.accuracy < 1.0;
                any = true;
                ++wrong;
            }
            if (any) EXPECT_TRUE(degraded) << item.id << " " << agent::to_string(t);
        }
    EXPECT_GT(deleted, 0);
    EXPECT_GT(wrong, 0);
    EXPECT_GT(extra, 0);
}

// ------------------------------------------------------------------ reports

namespace {
RunReport report(const std::string& id, int tier, Topology t, double precision, std::size_t errors = 0) {
    RunReport r;
    r.item_id = id;
    r.tier = tier;
    r.topology = t;
    r.backend = "planner";
    r.fidelity.precision = precision;
    r.fidelity.recall = 1.0;
    r.metrics.errors = errors;
    r.metrics.actions = 4;
    r.metrics.tokens_in = 1000;
    r.metrics.tokens_out = 100;
    r.metrics.cost_cents = 0.5;
    r.metrics.inclusion_rate = 1.0;
    r.metrics.accuracy = 0.5;
    return r;
}
}  // namespace

TEST(Report, SingleRunIsItsOwnMean) {
    const auto t = aggregate({report("a", 1, Topology::Single, 0.8, 2)});
    ASSERT_EQ(t.rows.size(), 1u);
    EXPECT_DOUBLE_EQ(t.rows[0].precision, 0.8);
    EXPECT_DOUBLE_EQ(t.rows[0].errors, 2.0);
    EXPECT_DOUBLE_EQ(t.rows[0].tokens_in, 1000.0);
    EXPECT_DOUBLE_EQ(t.rows[0].accuracy, 0.5);
}

TEST(Report, MeansWithinGroups) {
    const auto t = aggregate({report("b", 2, Topology::Single, 0.5), report("a", 2, Topology::Single, 1.0),
                              report("c", 2, Topology::Handoffs, 0.2), report("d", 3, Topology::Single, 0.9)});
    ASSERT_EQ(t.rows.size(), 3u);
    EXPECT_EQ(t.rows[0].runs, 2u);
    EXPECT_DOUBLE_EQ(t.rows[0].precision, 0.75);
    EXPECT_EQ(t.rows[1].key.topology, Topology::Handoffs);
    EXPECT_EQ(t.rows[2].key.tier, 3);
    EXPECT_THROW(aggregate({}), std::invalid_argument);
}

TEST(Report, ColumnOrder) {
    const std::vector<std::string> want{"Errors", "Prec.", "Rec.", "Actions", "Tokens In", "Out", "Cost", "Incl.", "Acc."};
    EXPECT_EQ(metric_columns(), want);
    const auto t = aggregate({report("a", 1, Topology::Single, 1.0)});
    const std::string csv = t.to_csv();
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "Tier,Topology,Backend,Runs,Errors,Prec.,Rec.,Actions,Tokens In,Out,Cost,Incl.,Acc.");
    const std::string text = t.to_text();
    std::size_t last = 0;
    for (const auto& c : want) {
        const auto pos = text.find(c, last);
        ASSERT_NE(pos, std::string::npos) << c;
        last = pos;
    }
}

TEST(Report, VerdictExportHasOneLinePerRun) {
    const std::string jl = verdicts_jsonl({report("a", 1, Topology::Single, 1.0), report("b", 1, Topology::Single, 1.0)});
    EXPECT_EQ(std::count(jl.begin(), jl.end(), '\n'), 2);
    EXPECT_EQ(json::parse(jl.substr(0, jl.find('\n')))["item"], "a");
}
