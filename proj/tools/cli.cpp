#include "neuroagent/cli/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "neuroagent/backend/pricing.hpp"
#include "neuroagent/bench/dataset.hpp"
#include "neuroagent/eval/eval.hpp"
#include "neuroagent/harness/runner.hpp"
#include "neuroagent/volume/errors.hpp"

namespace neuroagent::cli {

namespace fs = std::filesystem;
using agent::Topology;

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw volume::IoError("cannot read " + p.string());
    std::stringstream b;
    b << in.rdbuf();
    return b.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw volume::IoError("cannot write " + p.string());
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    for (std::string part; std::getline(in, part, ',');)
        if (!trim(part).empty()) out.push_back(trim(part));
    return out;
}

struct Flags {
    std::string config;
    std::string dataset;
    std::string out;
    std::string traces;
    std::string profile = "default";
    std::vector<std::string> topologies;
    std::string backend = "scripted";
    std::string model;
    int budget = agent::kDefaultBudget;
    double noise = 0.0;
    std::uint64_t seed = 0;                               // run: noise seed
    std::uint64_t suite_seed = bench::SuiteConfig{}.seed;  // generate
    int parallel = 1;
    double delay_seconds = 0.0;
    std::string prices;
    std::map<std::string, std::string> entries;  // config file contents
};

// Config values fill every flag the command line left unset.
void apply_config(CLI::App& cmd, Flags& f) {
    if (f.config.empty()) return;
    f.entries = parse_config(read_file(f.config));
    for (const auto& [raw, value] : f.entries) {
        std::string key = raw;
        for (char& c : key)
            if (c == '_') c = '-';
        if (key == "config") continue;
        CLI::Option* opt = cmd.get_option_no_throw("--" + key);
        if (opt == nullptr || opt->count() > 0) continue;
        if (key == "topology") {
            for (const auto& t : split_list(value)) opt->add_result(t);
        } else {
            opt->add_result(value);
        }
        opt->run_callback();
    }
}

struct DatasetLocation {
    fs::path file;
    fs::path root;
};

DatasetLocation locate(const std::string& dataset) {
    const fs::path p(dataset);
    if (fs::is_directory(p)) return {p / bench::kDatasetFile, p};
    return {p, p.has_parent_path() ? p.parent_path() : fs::path(".")};
}

backend::PriceTable load_prices(const Flags& f) {
    backend::PriceTable t = backend::PriceTable::defaults();
    auto overlay = [&t](const backend::PriceTable& o) {
        for (const auto& [m, p] : o.entries()) t.set(m, p);
    };
    if (!f.config.empty()) overlay(backend::PriceTable::parse(read_file(f.config)));
    if (!f.prices.empty()) overlay(backend::PriceTable::load(f.prices));
    return t;
}

std::vector<Topology> topologies_of(const Flags& f) {
    if (f.topologies.empty()) return agent::all_topologies();
    std::vector<Topology> out;
    for (const auto& s : f.topologies)
        for (const auto& t : split_list(s)) {
            const Topology top = agent::parse_topology(t);
            if (std::find(out.begin(), out.end(), top) == out.end()) out.push_back(top);
        }
    return out;
}

std::string fmt(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

// ------------------------------------------------------------------ generate

int cmd_generate(const Flags& f, std::ostream& out) {
    const auto cfg = bench::SuiteConfig::named(f.profile, f.suite_seed);
    const bench::Dataset ds = bench::generate_suite(cfg);
    bench::write_dataset(ds, f.out);

    std::map<int, std::size_t> per_tier;
    for (const auto& it : ds.items) ++per_tier[it.tier];
    out << "generated " << ds.items.size() << " items over " << ds.cases.size() << " cases (profile " << cfg.profile
        << ", seed " << cfg.seed << ") in " << f.out << "\n";
    for (const auto& [tier, n] : per_tier) out << "  tier " << tier << ": " << n << " items\n";
    out << "mean expected plan length:\n";
    out << "  tier";
    for (Topology t : agent::all_topologies()) out << "  " << agent::to_string(t);
    out << "\n";
    for (const auto& [tier, means] : bench::mean_plan_lengths(ds.items)) {
        out << "  " << tier << "   ";
        for (Topology t : agent::all_topologies()) {
            const std::string name = agent::to_string(t);
            const std::string v = fmt(means.at(t), 2);
            out << "  " << std::string(name.size() > v.size() ? name.size() - v.size() : 0, ' ') << v;
        }
        out << "\n";
    }
    return kExitOk;
}

// ------------------------------------------------------------------ eval

struct EvalOutcome {
    std::size_t scored = 0;
    std::size_t errors = 0;
};

// Scores every indexed run of `traces` against the dataset and writes
// metrics.jsonl, report.csv, report.txt and, when needed, errors.csv to `dest`.
EvalOutcome evaluate_dir(const bench::Dataset& ds, const fs::path& traces, const fs::path& dest,
                         const backend::PriceTable& prices, std::ostream& out, std::ostream& err) {
    EvalOutcome o;
    std::vector<eval::RunReport> reports;
    std::string error_rows;
    for (const auto& run : harness::load_runs(traces)) {
        const auto& r = run.record;
        std::string problem;
        if (r.status == harness::RunStatus::Failed) {
            problem = "run failed: " + r.error;
        } else if (const auto* item = ds.find_item(r.item_id); item == nullptr) {
            problem = "item not in dataset";
        } else {
            try {
                reports.push_back(eval::evaluate_run(r.trace, *item, r.topology, r.backend, prices));
            } catch (const std::exception& e) {
                problem = e.what();
            }
        }
        if (!problem.empty()) {
            ++o.errors;
            err << "error: " << r.item_id << " [" << agent::to_string(r.topology) << "]: " << problem << "\n";
            std::string quoted = problem;
            for (char& c : quoted)
                if (c == '"' || c == '\n') c = '\'';
            error_rows += r.item_id + "," + agent::to_string(r.topology) + "," + r.backend + ",\"" + quoted + "\"\n";
        }
    }
    o.scored = reports.size();
    fs::create_directories(dest);
    if (!error_rows.empty()) {
        write_file(dest / "errors.csv", "item,topology,backend,error\n" + error_rows);
    } else {
        std::error_code ec;
        fs::remove(dest / "errors.csv", ec);
    }
    if (reports.empty()) return o;
    write_file(dest / "metrics.jsonl", eval::verdicts_jsonl(reports));
    const auto table = eval::aggregate(reports);
    write_file(dest / "report.csv", table.to_csv());
    write_file(dest / "report.txt", table.to_text());
    out << table.to_text();
    return o;
}

int cmd_eval(const Flags& f, std::ostream& out, std::ostream& err) {
    const auto loc = locate(f.dataset);
    const bench::Dataset ds = bench::load_dataset(loc.file);
    const fs::path traces = f.traces.empty() ? fs::path(f.out) : fs::path(f.traces);
    const fs::path dest = f.out.empty() ? traces : fs::path(f.out);
    if (harness::load_runs(traces).empty()) {
        err << "no runs found in " << traces.string() << "\n";
        return kExitFailure;
    }
    const auto o = evaluate_dir(ds, traces, dest, load_prices(f), out, err);
    if (o.scored == 0) return kExitFailure;
    return o.errors > 0 ? kExitPartial : kExitOk;
}

// ------------------------------------------------------------------ run

int cmd_run(const Flags& f, std::ostream& out, std::ostream& err) {
    if (f.budget < 1) throw CLI::ValidationError("--budget", "must be at least 1");
    if (f.delay_seconds < 0.0) throw CLI::ValidationError("--delay-seconds", "must be >= 0");
    if (f.parallel < 1) throw CLI::ValidationError("--parallel", "must be at least 1");
    if (f.noise < 0.0 || f.noise > 1.0) throw CLI::ValidationError("--noise", "must lie in [0, 1]");

    std::string kind = f.backend, model = f.model;
    if (kind.rfind("remote:", 0) == 0) {
        if (model.empty()) model = kind.substr(7);
        kind = "remote";
    }
    const auto factory = harness::make_backend_factory(kind, model, f.entries);
    const auto prices = load_prices(f);
    const auto loc = locate(f.dataset);
    const bench::Dataset ds = bench::load_dataset(loc.file);
    bench::CaseLibrary library(ds, loc.root, f.seed);

    harness::SuiteOptions o;
    o.run.budget = f.budget;
    o.run.noise = f.noise;
    o.parallel = f.parallel;
    o.delay_seconds = f.delay_seconds;
    o.backend = harness::backend_label(kind, model);
    o.log = [&err](const std::string& m) { err << "run failed: " << m << "\n"; };
    const auto jobs = harness::make_jobs(ds, topologies_of(f));
    const auto s = harness::run_suite(jobs, library, factory, f.out, o);
    out << "ran " << s.completed + s.failed << " of " << jobs.size() << " episodes (" << s.skipped
        << " already complete, " << s.budget_exceeded << " over budget, " << s.failed << " failed)\n";

    const auto e = evaluate_dir(ds, f.out, f.out, prices, out, err);
    if (s.failed > 0 || e.errors > 0) return e.scored == 0 ? kExitFailure : kExitPartial;
    return kExitOk;
}

}  // namespace

std::map<std::string, std::string> parse_config(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) {
        ++n;
        const std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw backend::ConfigError("config line " + std::to_string(n) + ": expected key = value");
        out[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
    }
    return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Agent workbench for 3D neuro-imaging questions"};
    app.name("neuroagent");
    app.require_subcommand(1, 1);
    Flags f;

    auto common = [&f](CLI::App* cmd) {
        cmd->add_option("--config", f.config, "Flat key = value file; command-line flags win")
            ->check(CLI::ExistingFile);
    };

    CLI::App* gen = app.add_subcommand("generate", "Generate a benchmark dataset with its phantom volumes");
    common(gen);
    gen->add_option("--out", f.out, "Output directory")->required();
    gen->add_option("--profile", f.profile, "Suite profile: default or tiny");
    gen->add_option("--seed", f.suite_seed, "Suite seed");

    CLI::App* run = app.add_subcommand("run", "Run episodes of a dataset and score them");
    common(run);
    run->add_option("--dataset", f.dataset, "Dataset directory or dataset.jsonl")->required();
    run->add_option("--out", f.out, "Run directory (traces, index, reports)")->required();
    run->add_option("--topology", f.topologies, "Topology (repeatable, or comma separated); default all");
    run->add_option("--backend", f.backend, "scripted, planner, remote or remote:<model>");
    run->add_option("--model", f.model, "Model of the remote backend");
    run->add_option("--budget", f.budget, "Action budget per episode");
    run->add_option("--noise", f.noise, "Boundary-noise level of segmentation tools");
    run->add_option("--seed", f.seed, "Noise seed (0 keeps each case's own)");
    run->add_option("--parallel", f.parallel, "Concurrent episodes");
    run->add_option("--delay-seconds", f.delay_seconds, "Minimum spacing between case starts");
    run->add_option("--prices", f.prices, "Price table file (price.<model> = <in>, <out> cents per 1M tokens)");

    CLI::App* ev = app.add_subcommand("eval", "Score the runs of a run directory");
    common(ev);
    ev->add_option("--dataset", f.dataset, "Dataset directory or dataset.jsonl")->required();
    ev->add_option("--out", f.out, "Run directory; reports are written here");
    ev->add_option("--traces", f.traces, "Run directory to read, when different from --out");
    ev->add_option("--prices", f.prices, "Price table file");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
        CLI::App* cmd = app.get_subcommands().front();
        apply_config(*cmd, f);
        if (cmd == ev && f.out.empty() && f.traces.empty())
            throw CLI::RequiredError("--out or --traces");
        if (cmd == gen) return cmd_generate(f, out);
        if (cmd == run) return cmd_run(f, out, err);
        return cmd_eval(f, out, err);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

}  // namespace neuroagent::cli
