#include "neuroagent/eval/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>

namespace neuroagent::eval {

using agent::EventKind;
using backend::Plan;
using backend::PlanStep;

namespace {

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string trim(const std::string& s, const char* chars = " \t\r\n") {
    const auto b = s.find_first_not_of(chars);
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(chars) - b + 1);
}

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

}  // namespace

// ------------------------------------------------------------------ fidelity

json FidelityScore::to_json() const {
    return {{"precision", precision}, {"recall", recall},   {"predicted", predicted}, {"expected", expected},
            {"matched", matched},     {"extra", extra},     {"missing", missing}};
}

std::string action_key(EventKind kind, const std::string& name, const json& args,
                       const std::vector<std::string>& key_args) {
    std::string k = agent::to_string(kind) + ":" + name;
    for (const auto& a : key_args) {
        k += " " + a + "=";
        k += args.is_object() && args.contains(a) ? agent::canonical_dump(args.at(a)) : "-";
    }
    return k;
}

Plan trace_actions(const agent::Trace& trace) {
    Plan out;
    for (const auto& e : trace.events) {
        if (!e.is_action()) continue;
        PlanStep s;
        s.kind = e.kind;
        s.agent = e.agent;
        s.name = e.name;
        s.args = e.args;
        out.push_back(std::move(s));
    }
    return out;
}

FidelityScore plan_fidelity(const Plan& predicted, const Plan& expected) {
    // The plan decides which arguments identify an action of a given kind and name.
    std::map<std::pair<EventKind, std::string>, std::vector<std::string>> named;
    std::multiset<std::string> want;
    for (const auto& s : expected) {
        if (s.kind == EventKind::FinalAnswer) continue;
        named.emplace(std::make_pair(s.kind, s.name), s.key_args);
        want.insert(action_key(s.kind, s.name, s.args, s.key_args));
    }
    std::vector<std::string> got;
    for (const auto& s : predicted) {
        if (s.kind == EventKind::FinalAnswer) continue;
        const auto it = named.find({s.kind, s.name});
        got.push_back(action_key(s.kind, s.name, s.args, it == named.end() ? std::vector<std::string>{} : it->second));
    }
    std::sort(got.begin(), got.end());

    FidelityScore f;
    f.predicted = got.size();
    f.expected = want.size();
    std::multiset<std::string> left = want;
    for (const auto& k : got) {
        const auto it = left.find(k);
        if (it == left.end()) {
            f.extra.push_back(k);
        } else {
            f.matched.push_back(k);
            left.erase(it);
        }
    }
    f.missing.assign(left.begin(), left.end());
    if (f.predicted == 0) {
        f.precision = f.expected == 0 ? 1.0 : 0.0;
    } else {
        f.precision = ratio(f.matched.size(), f.predicted);
    }
    f.recall = f.expected == 0 ? 1.0 : ratio(f.matched.size(), f.expected);
    return f;
}

FidelityScore plan_fidelity(const agent::Trace& trace, const Plan& expected) {
    return plan_fidelity(trace_actions(trace), expected);
}

std::size_t count_errors(const agent::Trace& trace) { return trace.error_count(); }

// ------------------------------------------------------------------ judge

json FieldVerdict::to_json() const {
    return {{"name", name}, {"included", included}, {"correct", correct}, {"reported", reported}};
}

double JudgeVerdict::inclusion_rate() const { return ratio(included, queried()); }
double JudgeVerdict::accuracy() const { return ratio(correct, queried()); }

json JudgeVerdict::to_json() const {
    json fs = json::array();
    for (const auto& f : fields) fs.push_back(f.to_json());
    return {{"fields", fs},
            {"queried", queried()},
            {"included", included},
            {"correct", correct},
            {"inclusion_rate", inclusion_rate()},
            {"accuracy", accuracy()}};
}

std::string normalize_key(const std::string& s) {
    std::string out;
    bool space = false;
    for (char c : trim(lower(s), " \t\r\n*`_-\"'#")) {
        if (c == '_' || c == '-' || std::isspace(static_cast<unsigned char>(c))) {
            space = true;
            continue;
        }
        if (space && !out.empty()) out += ' ';
        space = false;
        out += c;
    }
    return out;
}

namespace {

// Value text with quoting, emphasis and a sentence-final period removed.
std::string clean_value(const std::string& v) {
    std::string s = trim(v, " \t\r\n*`\"'");
    while (!s.empty() && s.back() == '.') s = trim(s.substr(0, s.size() - 1), " \t\r\n*`\"'");
    return s;
}

std::string strip_bullet(const std::string& line) {
    std::string s = trim(line);
    if (s.rfind("- ", 0) == 0 || s.rfind("* ", 0) == 0 || s.rfind("• ", 0) == 0) s = trim(s.substr(s.find(' ')));
    return s;
}

// "<alias> is <value>" anywhere in the text; the value runs to the end of
// the clause.
std::optional<std::string> inline_value(const std::string& lowered, const std::string& alias) {
    const std::string needle = alias + " is ";
    std::size_t pos = 0;
    while ((pos = lowered.find(needle, pos)) != std::string::npos) {
        const bool boundary = pos == 0 || !std::isalnum(static_cast<unsigned char>(lowered[pos - 1]));
        if (boundary) {
            std::size_t start = pos + needle.size();
            std::size_t end = lowered.find_first_of("\n;", start);
            std::string v = lowered.substr(start, end == std::string::npos ? std::string::npos : end - start);
            const auto stop = v.find(". ");
            if (stop != std::string::npos) v = v.substr(0, stop);
            v = clean_value(v);
            if (!v.empty()) return v;
        }
        pos += needle.size();
    }
    return std::nullopt;
}

std::vector<std::string> split_set(const std::string& v) {
    std::string s = lower(v);
    for (std::size_t p; (p = s.find(" and ")) != std::string::npos;) s.replace(p, 5, ",");
    std::vector<std::string> out;
    std::string part;
    std::istringstream in(s);
    while (std::getline(in, part, ',')) {
        for (char& c : part)
            if (c == ';') c = ' ';
        part = clean_value(part);
        if (!part.empty() && part != "none") out.push_back(part);
    }
    return out;
}

}  // namespace

std::map<std::string, std::string> extract_pairs(const std::string& answer) {
    std::map<std::string, std::string> out;
    std::istringstream in(answer);
    for (std::string line; std::getline(in, line);) {
        line = strip_bullet(line);
        const auto colon = line.find(':');
        if (colon == std::string::npos || colon == 0) continue;
        const std::string key = normalize_key(line.substr(0, colon));
        const std::string value = clean_value(line.substr(colon + 1));
        if (key.empty() || value.empty()) continue;
        out.emplace(key, value);
    }
    return out;
}

std::vector<double> extract_numbers(const std::string& value) {
    static const std::regex number(R"((^|[^A-Za-z0-9_.])([-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?))");
    std::vector<double> out;
    for (auto it = std::sregex_iterator(value.begin(), value.end(), number); it != std::sregex_iterator(); ++it) {
        try {
            out.push_back(std::stod((*it)[2].str()));
        } catch (const std::exception&) {
        }
    }
    return out;
}

bool is_abstention(const std::string& value) {
    const std::string v = lower(value);
    return v.find("cannot find") != std::string::npos || v.find("can't find") != std::string::npos ||
           v.find("not applicable") != std::string::npos || v == "n/a";
}

bool value_matches(const bench::ExpectedField& field, const std::string& reported) {
    if (is_abstention(reported)) return false;
    const auto within = [&](double got, double want) {
        return std::abs(got - want) <= std::max(field.abs_tol, field.rel_tol * std::abs(want)) + kDisplayRounding;
    };
    switch (field.comparison) {
        case bench::Comparison::ExactString:
            return field.value.is_string() && lower(clean_value(reported)) == lower(field.value.get<std::string>());
        case bench::Comparison::Numeric: {
            const auto n = extract_numbers(reported);
            return !n.empty() && field.value.is_number() && within(n[0], field.value.get<double>());
        }
        case bench::Comparison::Vector: {
            const auto n = extract_numbers(reported);
            if (!field.value.is_array() || n.size() < field.value.size()) return false;
            for (std::size_t i = 0; i < field.value.size(); ++i)
                if (!within(n[i], field.value[i].get<double>())) return false;
            return true;
        }
        case bench::Comparison::StringSet: {
            std::set<std::string> want, got;
            for (const auto& v : field.value) want.insert(lower(v.get<std::string>()));
            for (const auto& v : split_set(reported)) got.insert(v);
            return want == got;
        }
    }
    return false;
}

JudgeVerdict DeterministicJudge::judge(const std::string& answer,
                                       const std::vector<bench::ExpectedField>& fields) const {
    const auto pairs = extract_pairs(answer);
    // Inline phrases are searched with emphasis dropped and underscores as spaces.
    std::string lowered;
    for (char c : lower(answer)) {
        if (c == '*' || c == '`') continue;
        lowered += c == '_' ? ' ' : c;
    }
    JudgeVerdict v;
    for (const auto& f : fields) {
        std::vector<std::string> names{normalize_key(f.name)};
        for (const auto& a : f.aliases) names.push_back(normalize_key(a));
        FieldVerdict fv;
        fv.name = f.name;
        for (const auto& n : names) {
            const auto it = pairs.find(n);
            if (it != pairs.end()) {
                fv.included = true;
                fv.reported = it->second;
                break;
            }
        }
        for (std::size_t i = 0; !fv.included && i < names.size(); ++i) {
            if (names[i].empty()) continue;
            if (auto iv = inline_value(lowered, names[i])) {
                fv.included = true;
                fv.reported = *iv;
            }
        }
        fv.correct = fv.included && value_matches(f, fv.reported);
        v.included += fv.included;
        v.correct += fv.correct;
        v.fields.push_back(std::move(fv));
    }
    return v;
}

JudgeVerdict judge_answer(const std::string& answer, const std::vector<bench::ExpectedField>& fields) {
    return DeterministicJudge{}.judge(answer, fields);
}

// ------------------------------------------------------------------ runs

json RunMetrics::to_json() const {
    return {{"errors", errors},         {"actions", actions},       {"tokens_in", tokens_in},
            {"tokens_out", tokens_out}, {"cost_cents", cost_cents}, {"inclusion_rate", inclusion_rate},
            {"accuracy", accuracy},     {"budget_exceeded", budget_exceeded}};
}

json RunReport::to_json() const {
    return {{"item", item_id},
            {"tier", tier},
            {"topology", agent::to_string(topology)},
            {"backend", backend},
            {"metrics", metrics.to_json()},
            {"fidelity", fidelity.to_json()},
            {"verdict", verdict.to_json()}};
}

std::string price_key(const std::string& backend) {
    const std::string prefix = "remote:";
    return backend.rfind(prefix, 0) == 0 ? backend.substr(prefix.size()) : backend;
}

RunReport evaluate_run(const agent::Trace& trace, const bench::BenchmarkItem& item, agent::Topology topology,
                       const std::string& backend, const backend::PriceTable& prices, const Judge& judge) {
    const auto plan = item.expected_plans.find(topology);
    if (plan == item.expected_plans.end())
        throw ConfigError("item " + item.id + " has no expected plan for topology " + agent::to_string(topology));
    RunReport r;
    r.item_id = item.id;
    r.tier = item.tier;
    r.topology = topology;
    r.backend = backend;
    r.fidelity = plan_fidelity(trace, plan->second);
    r.verdict = judge.judge(trace.final_answer(), item.expected_answer);
    r.metrics.errors = count_errors(trace);
    r.metrics.actions = trace.action_count();
    r.metrics.tokens_in = trace.tokens_in();
    r.metrics.tokens_out = trace.tokens_out();
    r.metrics.cost_cents = backend::cost_cents(r.metrics.tokens_in, r.metrics.tokens_out, price_key(backend), prices);
    r.metrics.inclusion_rate = r.verdict.inclusion_rate();
    r.metrics.accuracy = r.verdict.accuracy();
    r.metrics.budget_exceeded = std::any_of(trace.events.begin(), trace.events.end(),
                                            [](const agent::TraceEvent& e) { return e.synthetic; });
    return r;
}

std::string verdicts_jsonl(const std::vector<RunReport>& reports) {
    std::string out;
    for (const auto& r : reports) out += r.to_json().dump() + "\n";
    return out;
}

// ------------------------------------------------------------------ reports

const std::vector<std::string>& metric_columns() {
    static const std::vector<std::string> cols{"Errors",    "Prec.", "Rec.", "Actions", "Tokens In",
                                               "Out",       "Cost",  "Incl.", "Acc."};
    return cols;
}

ReportTable aggregate(std::vector<RunReport> reports) {
    if (reports.empty()) throw std::invalid_argument("aggregate: no runs");
    // Fixed fold order keeps floating sums reproducible across schedules.
    std::stable_sort(reports.begin(), reports.end(), [](const RunReport& a, const RunReport& b) {
        return std::tie(a.item_id, a.topology, a.backend) < std::tie(b.item_id, b.topology, b.backend);
    });
    std::map<GroupKey, GroupRow> groups;
    for (const auto& r : reports) {
        GroupKey key{r.tier, r.topology, r.backend};
        GroupRow& g = groups[key];
        g.key = key;
        ++g.runs;
        g.errors += static_cast<double>(r.metrics.errors);
        g.precision += r.fidelity.precision;
        g.recall += r.fidelity.recall;
        g.actions += static_cast<double>(r.metrics.actions);
        g.tokens_in += static_cast<double>(r.metrics.tokens_in);
        g.tokens_out += static_cast<double>(r.metrics.tokens_out);
        g.cost_cents += r.metrics.cost_cents;
        g.inclusion_rate += r.metrics.inclusion_rate;
        g.accuracy += r.metrics.accuracy;
    }
    ReportTable t;
    for (auto& [k, g] : groups) {
        const double n = static_cast<double>(g.runs);
        for (double* m : {&g.errors, &g.precision, &g.recall, &g.actions, &g.tokens_in, &g.tokens_out,
                          &g.cost_cents, &g.inclusion_rate, &g.accuracy})
            *m /= n;
        t.rows.push_back(g);
    }
    return t;
}

namespace {

std::vector<std::string> row_cells(const GroupRow& g) {
    return {fixed(g.errors, 2),     fixed(g.precision, 3),  fixed(g.recall, 3),
            fixed(g.actions, 2),    fixed(g.tokens_in, 1),  fixed(g.tokens_out, 1),
            fixed(g.cost_cents, 4), fixed(g.inclusion_rate, 3), fixed(g.accuracy, 3)};
}

}  // namespace

std::string ReportTable::to_text() const {
    std::vector<std::vector<std::string>> cells;
    std::vector<std::string> header{"Tier", "Topology", "Backend", "Runs"};
    for (const auto& c : metric_columns()) header.push_back(c);
    cells.push_back(header);
    for (const auto& g : rows) {
        std::vector<std::string> r{std::to_string(g.key.tier), agent::to_string(g.key.topology), g.key.backend,
                                   std::to_string(g.runs)};
        for (auto& c : row_cells(g)) r.push_back(std::move(c));
        cells.push_back(std::move(r));
    }
    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& r : cells)
        for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
    std::string out;
    for (const auto& r : cells) {
        std::string line;
        for (std::size_t i = 0; i < r.size(); ++i) {
            const std::string pad(width[i] - r[i].size(), ' ');
            // Labels left-aligned, numbers right-aligned.
            line += i < 3 ? r[i] + pad : pad + r[i];
            if (i + 1 < r.size()) line += "  ";
        }
        out += trim(line, " ") + "\n";
    }
    return out;
}

std::string ReportTable::to_csv() const {
    std::string out = "Tier,Topology,Backend,Runs";
    for (const auto& c : metric_columns()) out += "," + c;
    out += "\n";
    for (const auto& g : rows) {
        out += std::to_string(g.key.tier) + "," + agent::to_string(g.key.topology) + "," + g.key.backend + "," +
               std::to_string(g.runs);
        for (double v : {g.errors, g.precision, g.recall, g.actions, g.tokens_in, g.tokens_out, g.cost_cents,
                         g.inclusion_rate, g.accuracy})
            out += "," + fixed(v, 6);
        out += "\n";
    }
    return out;
}

}  // namespace neuroagent::eval
