#include "neuroagent/bench/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "neuroagent/agent/kernel.hpp"
#include "neuroagent/toolbox/atlas.hpp"
#include "neuroagent/volume/errors.hpp"

namespace neuroagent::bench {

using agent::Topology;

FormatError::FormatError(std::size_t line, std::string field, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": field '" + field + "': " + what),
      line_(line),
      field_(std::move(field)) {}

const CaseRecord* Dataset::find_case(const std::string& case_id) const {
    for (const auto& c : cases)
        if (c.spec.case_id == case_id) return &c;
    return nullptr;
}

const BenchmarkItem* Dataset::find_item(const std::string& item_id) const {
    auto it = std::lower_bound(items.begin(), items.end(), item_id,
                               [](const BenchmarkItem& i, const std::string& id) { return i.id < id; });
    if (it != items.end() && it->id == item_id) return &*it;
    for (const auto& i : items)  // files from elsewhere need not be sorted
        if (i.id == item_id) return &i;
    return nullptr;
}

// ---------------------------------------------------------------- format

namespace {

json with_extra(const json& extra, json known) {
    json out = extra.is_object() ? extra : json::object();
    for (auto it = known.begin(); it != known.end(); ++it) out[it.key()] = it.value();
    return out;
}

json extra_of(const json& rec, const std::set<std::string>& known) {
    json extra = json::object();
    for (auto it = rec.begin(); it != rec.end(); ++it)
        if (!known.count(it.key())) extra[it.key()] = it.value();
    return extra;
}

json manifest_json(const Manifest& m) {
    return with_extra(m.extra, {{"record", "manifest"},
                                {"schema_version", m.schema_version},
                                {"seed", m.seed},
                                {"profile", m.profile}});
}

json case_json(const CaseRecord& c) {
    json tps = json::array();
    for (const auto& tp : c.bundle.timepoints) tps.push_back({{"id", tp.id}, {"files", tp.files}});
    return with_extra(c.extra, {{"record", "case"},
                                {"case_id", c.spec.case_id},
                                {"pathology", c.bundle.pathology},
                                {"preprocessed", c.bundle.preprocessed},
                                {"atlas", c.bundle.atlas},
                                {"timepoints", tps},
                                {"phantom", c.spec.to_json()}});
}

json item_json(const BenchmarkItem& it) {
    json plans = json::object();
    for (const auto& [t, p] : it.expected_plans) plans[agent::to_string(t)] = backend::plan_to_json(p);
    json answer = json::array();
    for (const auto& f : it.expected_answer) answer.push_back(f.to_json());
    return with_extra(it.extra, {{"record", "item"},
                                 {"id", it.id},
                                 {"tier", it.tier},
                                 {"template", backend::to_string(it.tmpl)},
                                 {"question", it.question},
                                 {"case", it.case_id},
                                 {"timepoints", it.timepoints},
                                 {"expected_plans", plans},
                                 {"expected_answer", answer}});
}

template <class T>
T need(const json& rec, const char* key, std::size_t line) {
    if (!rec.contains(key)) throw FormatError(line, key, "missing");
    try {
        return rec.at(key).get<T>();
    } catch (const json::exception&) {
        throw FormatError(line, key, "wrong type");
    }
}

Manifest parse_manifest(const json& rec, std::size_t line) {
    Manifest m;
    m.schema_version = need<int>(rec, "schema_version", line);
    if (m.schema_version != kSchemaVersion)
        throw FormatError(line, "schema_version", "unsupported version " + std::to_string(m.schema_version));
    m.seed = need<std::uint64_t>(rec, "seed", line);
    m.profile = rec.contains("profile") ? need<std::string>(rec, "profile", line) : std::string();
    m.extra = extra_of(rec, {"record", "schema_version", "seed", "profile"});
    return m;
}

CaseRecord parse_case(const json& rec, std::size_t line) {
    CaseRecord c;
    if (!rec.contains("phantom")) throw FormatError(line, "phantom", "missing");
    try {
        c.spec = PhantomSpec::from_json(rec["phantom"]);
    } catch (const std::invalid_argument& e) {
        throw FormatError(line, "phantom", e.what());
    }
    const std::string id = need<std::string>(rec, "case_id", line);
    if (id != c.spec.case_id) throw FormatError(line, "case_id", "differs from phantom.case_id");
    c.bundle = phantom_bundle(c.spec);
    if (rec.contains("timepoints")) {
        const json& tps = rec["timepoints"];
        if (!tps.is_array() || tps.size() != c.bundle.timepoints.size())
            throw FormatError(line, "timepoints", "expected one entry per phantom timepoint");
        for (std::size_t t = 0; t < tps.size(); ++t) {
            try {
                c.bundle.timepoints[t].id = tps[t].at("id").get<std::string>();
                c.bundle.timepoints[t].files = tps[t].at("files").get<std::map<std::string, std::string>>();
            } catch (const json::exception&) {
                throw FormatError(line, "timepoints", "entries need id and files");
            }
            for (const auto& m : toolbox::modality_names())
                if (!c.bundle.timepoints[t].files.count(m))
                    throw FormatError(line, "timepoints", "missing " + m + " file");
        }
    }
    if (rec.contains("preprocessed") && need<bool>(rec, "preprocessed", line) != c.spec.preprocessed)
        throw FormatError(line, "preprocessed", "differs from the phantom");
    if (rec.contains("pathology") && need<std::string>(rec, "pathology", line) != c.spec.pathology)
        throw FormatError(line, "pathology", "differs from the phantom");
    c.extra = extra_of(rec, {"record", "case_id", "pathology", "preprocessed", "atlas", "timepoints", "phantom"});
    return c;
}

BenchmarkItem parse_item(const json& rec, std::size_t line, const std::set<std::string>& case_ids) {
    BenchmarkItem it;
    it.id = need<std::string>(rec, "id", line);
    it.tier = need<int>(rec, "tier", line);
    if (it.tier < 1 || it.tier > 3) throw FormatError(line, "tier", "must be 1, 2 or 3");
    try {
        it.tmpl = backend::parse_template(need<std::string>(rec, "template", line));
    } catch (const std::invalid_argument& e) {
        throw FormatError(line, "template", e.what());
    }
    it.question = need<std::string>(rec, "question", line);
    it.case_id = need<std::string>(rec, "case", line);
    if (!case_ids.count(it.case_id)) throw FormatError(line, "case", "unknown case '" + it.case_id + "'");
    it.timepoints = need<std::vector<std::string>>(rec, "timepoints", line);
    if (it.timepoints.empty()) throw FormatError(line, "timepoints", "empty");
    if (it.tier == 3 && it.timepoints.size() < 2) throw FormatError(line, "timepoints", "tier 3 needs two timepoints");

    if (!rec.contains("expected_plans")) throw FormatError(line, "expected_plans", "missing");
    const json& plans = rec["expected_plans"];
    if (!plans.is_object() || plans.empty()) throw FormatError(line, "expected_plans", "expected a nonempty object");
    for (auto p = plans.begin(); p != plans.end(); ++p) {
        const std::string field = "expected_plans." + p.key();
        try {
            it.expected_plans[agent::parse_topology(p.key())] = backend::plan_from_json(p.value());
        } catch (const std::invalid_argument& e) {
            throw FormatError(line, field, e.what());
        }
    }

    if (!rec.contains("expected_answer")) throw FormatError(line, "expected_answer", "missing");
    const json& answer = rec["expected_answer"];
    if (!answer.is_array() || answer.empty()) throw FormatError(line, "expected_answer", "expected a nonempty list");
    for (const auto& f : answer) {
        try {
            it.expected_answer.push_back(ExpectedField::from_json(f));
        } catch (const std::invalid_argument& e) {
            throw FormatError(line, "expected_answer", e.what());
        }
    }
    it.extra = extra_of(rec, {"record", "id", "tier", "template", "question", "case", "timepoints", "expected_plans",
                              "expected_answer"});
    return it;
}

}  // namespace

std::string to_jsonl(const Dataset& ds) {
    std::string out = manifest_json(ds.manifest).dump() + "\n";
    for (const auto& c : ds.cases) out += case_json(c).dump() + "\n";
    for (const auto& i : ds.items) out += item_json(i).dump() + "\n";
    return out;
}

Dataset from_jsonl(const std::string& text) {
    Dataset ds;
    std::set<std::string> case_ids;
    std::istringstream in(text);
    std::string raw;
    std::size_t line = 0;
    bool have_manifest = false;
    while (std::getline(in, raw)) {
        ++line;
        if (raw.find_first_not_of(" \t\r") == std::string::npos) continue;
        const json rec = json::parse(raw, nullptr, false);
        if (rec.is_discarded() || !rec.is_object()) throw FormatError(line, "record", "not a JSON object");
        const std::string kind = rec.contains("record") ? need<std::string>(rec, "record", line) : "item";
        if (!have_manifest) {
            if (kind != "manifest") throw FormatError(line, "record", "the first record must be the manifest");
            ds.manifest = parse_manifest(rec, line);
            have_manifest = true;
        } else if (kind == "case") {
            CaseRecord c = parse_case(rec, line);
            if (!case_ids.insert(c.spec.case_id).second)
                throw FormatError(line, "case_id", "duplicate case '" + c.spec.case_id + "'");
            ds.cases.push_back(std::move(c));
        } else if (kind == "item") {
            ds.items.push_back(parse_item(rec, line, case_ids));
        } else {
            throw FormatError(line, "record", "unknown record type '" + kind + "'");
        }
    }
    if (!have_manifest) throw FormatError(1, "record", "empty dataset file");
    return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& file) {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::binary);
    if (!out) throw volume::IoError("cannot write " + file.string());
    out << to_jsonl(ds);
    if (!out) throw volume::IoError("cannot write " + file.string());
}

Dataset load_dataset(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw volume::IoError("cannot read " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_jsonl(ss.str());
}

// ---------------------------------------------------------------- generation

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// mt19937_64's output sequence is fixed by the standard; the library's
// distributions are not, so values are mapped by hand for portable datasets.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : g_(seed) {}
    double unit() { return static_cast<double>(g_() >> 11) * 0x1.0p-53; }
    double uniform(double a, double b) { return a + (b - a) * unit(); }
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(g_() % n); }
    bool chance(double p) { return unit() < p; }
    std::uint64_t next() { return g_(); }
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }
    template <class T>
    const T& pick(const std::vector<std::pair<T, double>>& weighted) {
        double total = 0.0;
        for (const auto& [v, w] : weighted) total += w;
        double x = uniform(0.0, total);
        for (const auto& [v, w] : weighted) {
            if (x < w) return v;
            x -= w;
        }
        return weighted.back().first;
    }

private:
    std::mt19937_64 g_;
};

double round_to(double v, double step) { return std::round(v / step) * step + 0.0; }

struct PathologyShape {
    double r_min, r_max;
};

PathologyShape shape_of(const std::string& pathology) {
    if (pathology == "metastasis") return {1.8, 3.2};
    if (pathology == "meningioma") return {3.0, 5.0};
    return {4.0, 6.0};
}

// Scale factors for timepoints 1.. of a lesion present at baseline: each in
// [0.9, 1.2] and at least 0.05 from every earlier one, so volumes change but
// any two timepoints overlap with IoU around (0.9/1.2)^3 ~ 0.42 or more.
std::vector<double> evolving_scales(Rng& rng, int timepoints, int first) {
    std::vector<double> s(static_cast<std::size_t>(timepoints), 0.0);
    s[static_cast<std::size_t>(first)] = 1.0;
    for (int t = first + 1; t < timepoints; ++t) {
        double v = 1.0;
        for (int tries = 0; tries < 100; ++tries) {
            v = round_to(rng.uniform(0.9, 1.2), 0.01);
            bool far = true;
            for (int u = first; u < t; ++u) far = far && std::abs(v - s[static_cast<std::size_t>(u)]) >= 0.05;
            if (far) break;
        }
        s[static_cast<std::size_t>(t)] = v;
    }
    return s;
}

LesionSpec sample_lesion(Rng& rng, const toolbox::AtlasTemplate& atlas, const PathologyShape& shape,
                         std::vector<double> scales) {
    LesionSpec l;
    const double r = rng.uniform(shape.r_min, shape.r_max);
    for (int a = 0; a < 3; ++a) l.radii[a] = round_to(r * rng.uniform(0.85, 1.15), 0.1);
    l.intensity = round_to(rng.uniform(0.8, 1.2), 0.01);
    const double smax = *std::max_element(scales.begin(), scales.end());
    const double reach = *std::max_element(l.radii.begin(), l.radii.end()) * smax + 1.0;
    Vec3 u{};
    do {
        for (int a = 0; a < 3; ++a) u[a] = rng.uniform(-1.0, 1.0);
    } while (u[0] * u[0] + u[1] * u[1] + u[2] * u[2] > 1.0);
    for (int a = 0; a < 3; ++a)
        l.center[a] = round_to(atlas.brain_center[a] + u[a] * std::max(0.0, atlas.brain_radii[a] - reach), 0.1);
    l.scales = std::move(scales);
    return l;
}

// Checks the measured case: lesions of useful size, no size ties within a
// timepoint, and matching decided far from the IoU threshold.
bool well_formed(const PhantomSpec& spec, const Oracle& oracle) {
    for (int t = 0; t < spec.timepoints; ++t) {
        std::set<std::size_t> sizes;
        for (const auto& l : oracle.lesions(PhantomSpec::timepoint_id(t))) {
            if (l.voxels.size() < 7) return false;
            if (!sizes.insert(l.voxels.size()).second) return false;
        }
    }
    for (int a = 0; a < spec.timepoints; ++a)
        for (int b = a + 1; b < spec.timepoints; ++b) {
            const std::string ta = PhantomSpec::timepoint_id(a), tb = PhantomSpec::timepoint_id(b);
            const OracleMatch m = oracle.match(ta, tb);
            for (const auto& p : m.pairs) {
                if (p.iou < 0.35) return false;
                const int ia = oracle.lesions(ta)[static_cast<std::size_t>(p.id_t0 - 1)].instance;
                const int ib = oracle.lesions(tb)[static_cast<std::size_t>(p.id_t1 - 1)].instance;
                if (ia != ib) return false;
            }
            std::size_t persisting = 0;
            for (const auto& l : spec.lesions)
                persisting += l.scales[static_cast<std::size_t>(a)] > 0.0 && l.scales[static_cast<std::size_t>(b)] > 0.0;
            if (persisting != m.pairs.size()) return false;
        }
    return true;
}

PhantomSpec sample_case(Rng& rng, const std::string& case_id, const std::string& pathology, bool preprocessed,
                        int timepoints) {
    const toolbox::AtlasTemplate& atlas = toolbox::atlas_by_name(toolbox::model_atlas(pathology));
    const PathologyShape shape = shape_of(pathology);
    for (int attempt = 0; attempt < 500; ++attempt) {
        PhantomSpec s;
        s.case_id = case_id;
        s.pathology = pathology;
        s.timepoints = timepoints;
        s.preprocessed = preprocessed;
        s.seed = rng.next();
        s.quarter_turns = 1 + static_cast<int>(rng.below(3));
        for (int a = 0; a < 3; ++a) s.translation[a] = static_cast<double>(rng.below(9)) - 4.0;
        if (pathology == "metastasis") {
            const std::size_t baseline = 1 + rng.below(5);
            for (std::size_t n = 0; n < baseline; ++n) {
                std::vector<double> sc = evolving_scales(rng, timepoints, 0);
                // Some metastases resolve under treatment.
                for (int t = 1; t < timepoints; ++t)
                    if (rng.chance(0.2)) {
                        for (int u = t; u < timepoints; ++u) sc[static_cast<std::size_t>(u)] = 0.0;
                        break;
                    }
                s.lesions.push_back(sample_lesion(rng, atlas, shape, sc));
            }
            for (int t = 1; t < timepoints; ++t)
                if (rng.chance(t == 1 ? 0.5 : 0.35))
                    s.lesions.push_back(sample_lesion(rng, atlas, shape, evolving_scales(rng, timepoints, t)));
        } else {
            s.lesions.push_back(sample_lesion(rng, atlas, shape, evolving_scales(rng, timepoints, 0)));
        }
        try {
            s.validate();
        } catch (const SpecError&) {
            continue;
        }
        const Oracle oracle(s, build_ground_truth(s));
        if (well_formed(s, oracle)) return s;
    }
    throw std::logic_error("could not sample a valid phantom for " + case_id);
}

const std::vector<std::pair<std::string, double>>& pathology_mix(int tier) {
    static const std::vector<std::pair<std::string, double>> single{
        {"glioma", 0.35}, {"postop-glioma", 0.2}, {"metastasis", 0.3}, {"meningioma", 0.15}};
    static const std::vector<std::pair<std::string, double>> longitudinal{
        {"glioma", 0.35}, {"postop-glioma", 0.25}, {"metastasis", 0.4}};
    return tier == 3 ? longitudinal : single;
}

// Regions large enough to measure robustly, by atlas-grid volume.
std::vector<std::string> measurable_regions(const std::string& atlas_name) {
    const auto& atlas = toolbox::atlas_by_name(atlas_name);
    const auto& g = atlas.grid;
    const auto& d = g.dims();
    std::map<int, int> n;
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i)
                ++n[toolbox::anatomy_label_at(atlas, g.index_to_world({double(i), double(j), double(k)}))];
    std::vector<std::string> out;
    for (const auto& [id, name] : toolbox::anatomy_vocabulary())
        if (n[id] >= 200) out.push_back(name);
    return out;
}

std::vector<Intent> candidates(Rng& rng, const PhantomSpec& spec, int tier, const Oracle& oracle) {
    std::vector<Intent> out;
    auto add = [&](Template t, std::vector<std::string> tps, std::string region = {}) {
        Intent in{t, spec.case_id, backend::uses_pathology(t) ? spec.pathology : std::string(), std::move(tps),
                  std::move(region)};
        try {
            (void)expected_answer(in, oracle);
        } catch (const TemplateError&) {
            return;
        }
        out.push_back(std::move(in));
    };
    const std::string t0 = PhantomSpec::timepoint_id(0);
    if (tier == 1) {
        add(Template::SegPathology, {t0});
        add(Template::SegAnatomy, {t0});
    } else if (tier == 2) {
        for (Template t : backend::all_templates())
            if (backend::template_tier(t) == 2 && t != Template::RegionVolume) add(t, {t0});
        std::vector<std::string> regions = measurable_regions(spec.atlas());
        rng.shuffle(regions);
        for (std::size_t r = 0; r < std::min<std::size_t>(2, regions.size()); ++r)
            add(Template::RegionVolume, {t0}, regions[r]);
    } else {
        for (int a = 0; a < spec.timepoints; ++a)
            for (int b = a + 1; b < spec.timepoints; ++b)
                for (Template t : backend::all_templates())
                    if (backend::template_tier(t) == 3)
                        add(t, {PhantomSpec::timepoint_id(a), PhantomSpec::timepoint_id(b)});
    }
    rng.shuffle(out);
    return out;
}

std::string pad(int n, int width) {
    std::string s = std::to_string(n);
    return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

}  // namespace

SuiteConfig SuiteConfig::default_profile(std::uint64_t seed) {
    SuiteConfig c;
    c.profile = "default";
    c.seed = seed;
    c.tiers = {{1, {29, 43}}, {2, {150, 565}}, {3, {36, 267}}};
    c.raw_fraction = {{1, 0.0}, {2, 0.2}, {3, 0.15}};
    return c;
}

SuiteConfig SuiteConfig::tiny_profile(std::uint64_t seed) {
    SuiteConfig c = default_profile(seed);
    c.profile = "tiny";
    c.tiers = {{1, {1, 1}}, {2, {1, 1}}, {3, {1, 1}}};
    return c;
}

SuiteConfig SuiteConfig::named(const std::string& profile, std::uint64_t seed) {
    if (profile == "default") return default_profile(seed);
    if (profile == "tiny") return tiny_profile(seed);
    throw std::invalid_argument("unknown profile '" + profile + "' (expected default or tiny)");
}

Dataset generate_suite(const SuiteConfig& cfg) {
    Dataset ds;
    ds.manifest.seed = cfg.seed;
    ds.manifest.profile = cfg.profile;
    int case_no = 0;
    for (const auto& [tier, counts] : cfg.tiers) {
        if (tier < 1 || tier > 3) throw std::invalid_argument("tiers are 1..3");
        if (counts.cases < 1 || counts.items < 1) throw std::invalid_argument("counts must be >= 1");
        const double raw_share = cfg.raw_fraction.count(tier) ? cfg.raw_fraction.at(tier) : 0.0;

        struct Pending {
            PhantomSpec spec;
            std::unique_ptr<Oracle> oracle;
            std::vector<Intent> cands;
        };
        std::vector<Pending> pending;
        for (int c = 0; c < counts.cases; ++c) {
            const std::string case_id = "case_" + pad(++case_no, 4);
            Rng rng(splitmix(cfg.seed ^ splitmix(static_cast<std::uint64_t>(case_no))));
            const std::string pathology = rng.pick(pathology_mix(tier));
            // Only the in-house style pathologies arrive unprocessed.
            const bool raw_ok = pathology == "glioma" || pathology == "metastasis";
            const bool preprocessed = !(raw_ok && rng.chance(raw_share));
            // Longitudinal cases mostly span three visits, which gives three timepoint pairs.
            const int timepoints = tier < 3 ? 1 : (c % 4 == 3 ? 2 : 3);
            Pending p;
            p.spec = sample_case(rng, case_id, pathology, preprocessed, timepoints);
            p.oracle = std::make_unique<Oracle>(p.spec, build_ground_truth(p.spec));
            p.cands = candidates(rng, p.spec, tier, *p.oracle);
            if (p.cands.empty()) throw std::logic_error("no template fits " + case_id);
            pending.push_back(std::move(p));
        }

        // Round-robin over cases, each taking its next candidate; wraps only
        // when the cases cannot supply enough distinct questions.
        int made = 0;
        for (std::size_t round = 0; made < counts.items; ++round) {
            bool any = false;
            for (auto& p : pending) {
                if (made >= counts.items) break;
                std::size_t capacity = 0;
                for (const auto& q : pending) capacity = std::max(capacity, q.cands.size());
                const std::size_t pick = round % capacity;
                if (pick >= p.cands.size()) continue;
                any = true;
                const std::string id = "t" + std::to_string(tier) + "-" + pad(++made, 4);
                ds.items.push_back(build_item(id, p.cands[pick], p.spec, *p.oracle));
            }
            if (!any) break;
        }
        for (auto& p : pending) {
            CaseRecord rec;
            rec.spec = p.spec;
            rec.bundle = phantom_bundle(p.spec);
            ds.cases.push_back(std::move(rec));
        }
    }
    std::sort(ds.items.begin(), ds.items.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& root) {
    for (const auto& c : ds.cases) generate_phantom(c.spec, root);
    save_dataset(ds, root / kDatasetFile);
}

std::map<int, std::map<Topology, double>> mean_plan_lengths(const std::vector<BenchmarkItem>& items) {
    std::map<int, std::map<Topology, double>> sum;
    std::map<int, std::map<Topology, int>> n;
    for (const auto& it : items)
        for (const auto& [t, p] : it.expected_plans) {
            sum[it.tier][t] += static_cast<double>(p.size());
            ++n[it.tier][t];
        }
    for (auto& [tier, by_topology] : sum)
        for (auto& [t, s] : by_topology) s /= n[tier][t];
    return sum;
}

CaseLibrary::CaseLibrary(const Dataset& ds, std::filesystem::path root, std::uint64_t noise_seed)
    : ds_(ds), root_(std::move(root)), cache_(std::make_shared<toolbox::VolumeCache>()), noise_seed_(noise_seed) {}

toolbox::CaseContext CaseLibrary::context(const std::string& case_id) {
    const CaseRecord* rec = ds_.find_case(case_id);
    if (!rec) throw std::out_of_range("unknown case '" + case_id + "'");
    std::shared_ptr<const toolbox::GroundTruth> truth;
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = truths_.find(case_id);
        if (it != truths_.end()) truth = it->second;
    }
    if (!truth) {
        // Built outside the lock; a concurrent duplicate build is harmless.
        auto built = build_ground_truth(rec->spec);
        if (noise_seed_ != 0) built->seed = splitmix(built->seed ^ splitmix(noise_seed_));
        std::lock_guard<std::mutex> lock(mu_);
        truth = truths_.emplace(case_id, std::move(built)).first->second;
    }
    toolbox::CaseContext ctx;
    ctx.bundle = rec->bundle;
    ctx.truth = truth;
    ctx.root = root_;
    ctx.cache = cache_;
    return ctx;
}

}  // namespace neuroagent::bench
