#pragma once

// Batch execution of benchmark episodes.
//
// A job is one (item, topology) pair. run_jobs_serial is the reference;
// run_jobs_parallel spreads whole episodes over OpenMP threads and returns the
// same records in job order. run_suite adds durable output and resume on top.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "neuroagent/agent/backend.hpp"
#include "neuroagent/agent/kernel.hpp"
#include "neuroagent/backend/pricing.hpp"
#include "neuroagent/backend/remote.hpp"
#include "neuroagent/bench/dataset.hpp"

namespace neuroagent::harness {

using nlohmann::json;

struct Job {
    const bench::BenchmarkItem* item = nullptr;
    agent::Topology topology = agent::Topology::Single;
};

// Jobs of every item under each topology, ordered by item id, then topology
// in the order given.
std::vector<Job> make_jobs(const bench::Dataset& ds, const std::vector<agent::Topology>& topologies);

// A fresh backend per episode.
using BackendFactory = std::function<std::unique_ptr<agent::Backend>(const Job&)>;

// "scripted" and "planner" need nothing else; "remote" needs a model and
// reads its settings from `entries` (flat config keys) and the environment.
// Remote episodes share one rate limiter. Throws backend::ConfigError.
BackendFactory make_backend_factory(const std::string& kind, const std::string& model = "",
                                    const std::map<std::string, std::string>& entries = {});
// Name recorded for runs of a factory's backends ("scripted", "remote:<model>").
std::string backend_label(const std::string& kind, const std::string& model = "");

enum class RunStatus { Ok, BudgetExceeded, Failed };
std::string to_string(RunStatus s);
// Throws std::invalid_argument.
RunStatus parse_run_status(const std::string& s);

struct RunRecord {
    std::string item_id;
    agent::Topology topology = agent::Topology::Single;
    std::string backend;
    RunStatus status = RunStatus::Ok;
    std::string error;  // failures only
    agent::Trace trace;

    // Index line of a run; the trace itself is stored separately.
    json summary() const;
    bool operator==(const RunRecord& o) const;
};

struct RunOptions {
    int budget = agent::kDefaultBudget;
    double noise = 0.0;
    std::optional<std::filesystem::path> tool_output_dir;
};

// Never throws: backend and case failures become Failed records.
RunRecord run_job(const Job& job, bench::CaseLibrary& library, const BackendFactory& factory,
                  const RunOptions& options = {});

std::vector<RunRecord> run_jobs_serial(const std::vector<Job>& jobs, bench::CaseLibrary& library,
                                       const BackendFactory& factory, const RunOptions& options = {});
// threads <= 0 uses the OpenMP default.
std::vector<RunRecord> run_jobs_parallel(const std::vector<Job>& jobs, bench::CaseLibrary& library,
                                         const BackendFactory& factory, const RunOptions& options = {},
                                         int threads = 0);

// ------------------------------------------------------------------ suites

// Output layout below a run directory.
inline constexpr const char* kRunIndexFile = "runs.jsonl";
std::filesystem::path trace_path(const std::filesystem::path& run_dir, const std::string& item_id,
                                 agent::Topology topology);

struct SuiteOptions {
    RunOptions run;
    int parallel = 1;
    // Minimum spacing between the first episodes of consecutive cases.
    double delay_seconds = 0.0;
    std::string backend;  // label written to the index
    std::function<void(const std::string&)> log;
};

struct SuiteSummary {
    std::size_t completed = 0;  // run now
    std::size_t skipped = 0;    // already complete from an earlier run
    std::size_t budget_exceeded = 0;
    std::size_t failed = 0;
};

// Runs every job not yet complete in `run_dir`, appending each finished run
// to the index as it completes and writing its trace file first. Failed runs
// are retried on the next invocation. The index is rewritten sorted by item
// id and topology at the end, so outputs do not depend on `parallel`. Throws
// std::invalid_argument for delay < 0 or parallel < 1, volume::IoError when
// the directory is not writable.
SuiteSummary run_suite(const std::vector<Job>& jobs, bench::CaseLibrary& library, const BackendFactory& factory,
                       const std::filesystem::path& run_dir, const SuiteOptions& options);

struct IndexedRun {
    RunRecord record;  // trace loaded from its file, empty for failed runs
    json summary;
};
// Reads the index and the trace files of a run directory; an absent index
// yields no runs. Throws volume::IoError or std::invalid_argument on
// malformed files.
std::vector<IndexedRun> load_runs(const std::filesystem::path& run_dir);

}  // namespace neuroagent::harness
