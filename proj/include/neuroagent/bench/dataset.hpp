#pragma once

// Benchmark datasets: suite generation and the line-delimited file format.
//
// dataset.jsonl holds a manifest record, then one record per case, then one
// per item, each a JSON object on its own line with sorted keys. Case volumes
// live next to it under volumes/. Fields a reader does not know are kept and
// written back unchanged.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "neuroagent/bench/item.hpp"
#include "neuroagent/bench/phantom.hpp"
#include "neuroagent/toolbox/toolbox.hpp"

namespace neuroagent::bench {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kDatasetFile = "dataset.jsonl";

// Schema violation at a 1-based line of a dataset file.
class FormatError : public std::runtime_error {
public:
    FormatError(std::size_t line, std::string field, const std::string& what);
    std::size_t line() const { return line_; }
    const std::string& field() const { return field_; }

private:
    std::size_t line_;
    std::string field_;
};

struct Manifest {
    int schema_version = kSchemaVersion;
    std::uint64_t seed = 0;
    std::string profile;
    json extra = json::object();
    bool operator==(const Manifest&) const = default;
};

struct CaseRecord {
    PhantomSpec spec;
    toolbox::CaseBundle bundle;
    json extra = json::object();
    bool operator==(const CaseRecord& o) const { return spec == o.spec && extra == o.extra; }
};

struct Dataset {
    Manifest manifest;
    std::vector<CaseRecord> cases;
    std::vector<BenchmarkItem> items;  // ascending id

    // nullptr when absent.
    const CaseRecord* find_case(const std::string& case_id) const;
    const BenchmarkItem* find_item(const std::string& item_id) const;
    bool operator==(const Dataset&) const = default;
};

std::string to_jsonl(const Dataset& ds);
// Throws FormatError.
Dataset from_jsonl(const std::string& text);
void save_dataset(const Dataset& ds, const std::filesystem::path& file);
// Throws FormatError, or volume::IoError when the file cannot be read.
Dataset load_dataset(const std::filesystem::path& file);

struct TierCounts {
    int cases = 1;
    int items = 1;
};

struct SuiteConfig {
    std::string profile = "default";
    std::uint64_t seed = 20250101;
    std::map<int, TierCounts> tiers;     // tier -> counts
    std::map<int, double> raw_fraction;  // tier -> share of unprocessed cases

    // Case and item counts of the three-tier reference suite (875 items).
    static SuiteConfig default_profile(std::uint64_t seed = 20250101);
    // One case and one item per tier.
    static SuiteConfig tiny_profile(std::uint64_t seed = 20250101);
    // Throws std::invalid_argument for unknown names.
    static SuiteConfig named(const std::string& profile, std::uint64_t seed);
};

// Pure function of the config: specs, items, expected plans and answers.
// Throws std::invalid_argument for counts below 1.
Dataset generate_suite(const SuiteConfig& cfg);
// Writes every case's volumes under `root` and the dataset file at
// root/dataset.jsonl.
void write_dataset(const Dataset& ds, const std::filesystem::path& root);

// Mean expected plan length per tier and topology.
std::map<int, std::map<agent::Topology, double>> mean_plan_lengths(const std::vector<BenchmarkItem>& items);

// Thread-safe ground truth and volume cache for running a dataset. A nonzero
// `noise_seed` reseeds every case's boundary-noise stream.
class CaseLibrary {
public:
    CaseLibrary(const Dataset& ds, std::filesystem::path root, std::uint64_t noise_seed = 0);
    // Throws std::out_of_range for unknown cases.
    toolbox::CaseContext context(const std::string& case_id);
    const std::filesystem::path& root() const { return root_; }

private:
    const Dataset& ds_;
    std::filesystem::path root_;
    std::shared_ptr<toolbox::VolumeCache> cache_;
    std::uint64_t noise_seed_;
    std::mutex mu_;
    std::map<std::string, std::shared_ptr<const toolbox::GroundTruth>> truths_;
};

}  // namespace neuroagent::bench
