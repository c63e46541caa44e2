#include "neuroagent/harness/runner.hpp"

#include <omp.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>

#include "neuroagent/backend/planner.hpp"
#include "neuroagent/backend/pricing.hpp"
#include "neuroagent/backend/scripted.hpp"
#include "neuroagent/volume/errors.hpp"

namespace neuroagent::harness {

namespace fs = std::filesystem;
using agent::Topology;

std::vector<Job> make_jobs(const bench::Dataset& ds, const std::vector<Topology>& topologies) {
    std::vector<const bench::BenchmarkItem*> items;
    for (const auto& it : ds.items) items.push_back(&it);
    std::stable_sort(items.begin(), items.end(), [](auto* a, auto* b) { return a->id < b->id; });
    std::vector<Job> jobs;
    for (const auto* it : items)
        for (Topology t : topologies) jobs.push_back({it, t});
    return jobs;
}

std::string backend_label(const std::string& kind, const std::string& model) {
    return kind == "remote" ? "remote:" + model : kind;
}

BackendFactory make_backend_factory(const std::string& kind, const std::string& model,
                                    const std::map<std::string, std::string>& entries) {
    if (kind == "scripted") {
        return [](const Job& job) -> std::unique_ptr<agent::Backend> {
            const auto plan = job.item->expected_plans.find(job.topology);
            if (plan == job.item->expected_plans.end())
                throw backend::ConfigError("item " + job.item->id + " has no plan for " +
                                           agent::to_string(job.topology));
            return std::make_unique<backend::ScriptedBackend>(plan->second);
        };
    }
    if (kind == "planner") {
        return [](const Job&) -> std::unique_ptr<agent::Backend> {
            return std::make_unique<backend::RuleBasedPlanner>();
        };
    }
    if (kind == "remote") {
        const auto config = backend::RemoteConfig::from_entries(entries, model);
        auto limiter = std::make_shared<backend::RateLimiter>(config.min_request_interval_seconds);
        return [config, limiter](const Job&) -> std::unique_ptr<agent::Backend> {
            return std::make_unique<backend::RemoteBackend>(config, limiter);
        };
    }
    throw backend::ConfigError("unknown backend '" + kind + "' (expected scripted, planner or remote)");
}

std::string to_string(RunStatus s) {
    switch (s) {
        case RunStatus::Ok: return "ok";
        case RunStatus::BudgetExceeded: return "budget_exceeded";
        case RunStatus::Failed: return "failed";
    }
    return "failed";
}

RunStatus parse_run_status(const std::string& s) {
    if (s == "ok") return RunStatus::Ok;
    if (s == "budget_exceeded") return RunStatus::BudgetExceeded;
    if (s == "failed") return RunStatus::Failed;
    throw std::invalid_argument("unknown run status '" + s + "'");
}

json RunRecord::summary() const {
    json j{{"item", item_id},
           {"topology", agent::to_string(topology)},
           {"backend", backend},
           {"status", to_string(status)}};
    if (status == RunStatus::Failed) {
        j["error"] = error;
    } else {
        j["actions"] = trace.action_count();
        j["errors"] = trace.error_count();
        j["tokens_in"] = trace.tokens_in();
        j["tokens_out"] = trace.tokens_out();
        j["final_answer"] = trace.final_answer();
        j["trace"] = (fs::path("traces") / agent::to_string(topology) / (item_id + ".jsonl")).generic_string();
    }
    return j;
}

bool RunRecord::operator==(const RunRecord& o) const {
    return item_id == o.item_id && topology == o.topology && backend == o.backend && status == o.status &&
           error == o.error && trace.events == o.trace.events;
}

RunRecord run_job(const Job& job, bench::CaseLibrary& library, const BackendFactory& factory,
                  const RunOptions& options) {
    RunRecord r;
    r.item_id = job.item->id;
    r.topology = job.topology;
    try {
        auto backend = factory(job);
        r.backend = backend->name();
        agent::EpisodeOptions eo;
        eo.budget = options.budget;
        eo.toolbox.noise = options.noise;
        eo.toolbox.output_dir = options.tool_output_dir;
        auto result = agent::run_episode(job.item->question, library.context(job.item->case_id), job.topology,
                                         *backend, agent::standard_registry(), eo);
        r.trace = std::move(result.trace);
        r.status = result.budget_exceeded ? RunStatus::BudgetExceeded : RunStatus::Ok;
    } catch (const std::exception& e) {
        r.status = RunStatus::Failed;
        r.error = e.what();
        r.trace = {};
    }
    return r;
}

std::vector<RunRecord> run_jobs_serial(const std::vector<Job>& jobs, bench::CaseLibrary& library,
                                       const BackendFactory& factory, const RunOptions& options) {
    std::vector<RunRecord> out;
    out.reserve(jobs.size());
    for (const auto& j : jobs) out.push_back(run_job(j, library, factory, options));
    return out;
}

std::vector<RunRecord> run_jobs_parallel(const std::vector<Job>& jobs, bench::CaseLibrary& library,
                                         const BackendFactory& factory, const RunOptions& options, int threads) {
    std::vector<RunRecord> out(jobs.size());
    const long n = static_cast<long>(jobs.size());
    const int nt = threads > 0 ? threads : omp_get_max_threads();
    // Episodes differ in length by an order of magnitude; hand them out one at a time.
#pragma omp parallel for schedule(dynamic, 1) num_threads(nt)
    for (long i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = run_job(jobs[static_cast<std::size_t>(i)], library, factory, options);
    return out;
}

// ------------------------------------------------------------------ suites

fs::path trace_path(const fs::path& run_dir, const std::string& item_id, Topology topology) {
    return run_dir / "traces" / agent::to_string(topology) / (item_id + ".jsonl");
}

namespace {

void write_atomic(const fs::path& path, const std::string& text) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << text;
        if (!out) throw volume::IoError("cannot write " + tmp.string());
    }
    fs::rename(tmp, path, ec);
    if (ec) throw volume::IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

using RunKey = std::pair<std::string, Topology>;

RunKey key_of(const json& summary) {
    return {summary.at("item").get<std::string>(), agent::parse_topology(summary.at("topology").get<std::string>())};
}

std::vector<json> read_index(const fs::path& file) {
    std::vector<json> out;
    std::ifstream in(file, std::ios::binary);
    if (!in) return out;
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) {
        ++n;
        if (line.empty()) continue;
        try {
            json j = json::parse(line);
            key_of(j);
            out.push_back(std::move(j));
        } catch (const std::exception& e) {
            // A torn final line is what an interrupted append leaves behind.
            if (in.peek() == EOF) break;
            throw std::invalid_argument(file.string() + " line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

// Latest record per run, sorted by item id then topology.
std::string render_index(const std::vector<json>& records) {
    std::map<RunKey, json> latest;
    for (const auto& r : records) latest[key_of(r)] = r;
    std::string text;
    for (const auto& [k, r] : latest) text += r.dump() + "\n";
    return text;
}

}  // namespace

SuiteSummary run_suite(const std::vector<Job>& jobs, bench::CaseLibrary& library, const BackendFactory& factory,
                       const fs::path& run_dir, const SuiteOptions& options) {
    if (options.delay_seconds < 0.0) throw std::invalid_argument("delay must be >= 0");
    if (options.parallel < 1) throw std::invalid_argument("parallel must be >= 1");
    std::error_code ec;
    fs::create_directories(run_dir, ec);
    if (ec) throw volume::IoError("cannot create " + run_dir.string() + ": " + ec.message());
    const fs::path index = run_dir / kRunIndexFile;

    std::set<RunKey> done;
    for (const auto& r : read_index(index))
        if (r.value("status", "failed") != "failed") done.insert(key_of(r));
    // Drop a torn tail before appending to the file again.
    write_atomic(index, render_index(read_index(index)));

    SuiteSummary summary;
    std::vector<Job> pending;
    for (const auto& j : jobs) {
        if (done.count({j.item->id, j.topology})) {
            ++summary.skipped;
        } else {
            pending.push_back(j);
        }
    }

    std::ofstream appender(index, std::ios::binary | std::ios::app);
    if (!appender) throw volume::IoError("cannot append to " + index.string());
    std::mutex write_mu;
    std::mutex gate_mu;
    std::set<std::string> started_cases;
    backend::RateLimiter case_gate(options.delay_seconds);
    std::string io_failure;

    const long n = static_cast<long>(pending.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(options.parallel)
    for (long i = 0; i < n; ++i) {
        const Job& job = pending[static_cast<std::size_t>(i)];
        if (options.delay_seconds > 0.0) {
            std::lock_guard<std::mutex> lock(gate_mu);
            if (started_cases.insert(job.item->case_id).second) case_gate.acquire();
        }
        RunRecord r = run_job(job, library, factory, options.run);
        if (r.backend.empty()) r.backend = options.backend;
        std::lock_guard<std::mutex> lock(write_mu);
        try {
            if (r.status != RunStatus::Failed)
                write_atomic(trace_path(run_dir, r.item_id, r.topology), r.trace.to_jsonl());
            appender << r.summary().dump() << "\n";
            appender.flush();
            if (!appender) throw volume::IoError("cannot append to " + index.string());
        } catch (const std::exception& e) {
            if (io_failure.empty()) io_failure = e.what();
            continue;
        }
        switch (r.status) {
            case RunStatus::Ok: ++summary.completed; break;
            case RunStatus::BudgetExceeded: ++summary.completed; ++summary.budget_exceeded; break;
            case RunStatus::Failed:
                ++summary.failed;
                if (options.log) options.log(r.item_id + " [" + agent::to_string(r.topology) + "]: " + r.error);
                break;
        }
    }
    appender.close();
    if (!io_failure.empty()) throw volume::IoError(io_failure);
    write_atomic(index, render_index(read_index(index)));
    return summary;
}

std::vector<IndexedRun> load_runs(const fs::path& run_dir) {
    std::vector<IndexedRun> out;
    const fs::path index = run_dir / kRunIndexFile;
    if (!fs::exists(index)) return out;
    std::map<RunKey, json> latest;
    for (const auto& r : read_index(index)) latest[key_of(r)] = r;
    for (const auto& [k, s] : latest) {
        IndexedRun run;
        run.summary = s;
        run.record.item_id = k.first;
        run.record.topology = k.second;
        run.record.backend = s.value("backend", "");
        run.record.status = parse_run_status(s.value("status", "failed"));
        run.record.error = s.value("error", "");
        if (run.record.status != RunStatus::Failed) {
            const fs::path file = run_dir / s.at("trace").get<std::string>();
            std::ifstream in(file, std::ios::binary);
            if (!in) throw volume::IoError("missing trace file " + file.string());
            std::stringstream buf;
            buf << in.rdbuf();
            run.record.trace = agent::Trace::from_jsonl(buf.str());
        }
        out.push_back(std::move(run));
    }
    return out;
}

}  // namespace neuroagent::harness
