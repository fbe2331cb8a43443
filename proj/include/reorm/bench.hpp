#pragma once

#include "reorm/backends.hpp"
#include "reorm/metrics.hpp"
#include "reorm/oracle.hpp"
#include "reorm/pipeline.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace reorm {

enum class EntrySource { public_dataset, synthetic, copy_paste };

const char* entry_source_name(EntrySource s);
EntrySource entry_source_from_name(const std::string& name);

struct ManifestEntry {
    std::string id;
    std::string input_path;
    std::string instruction;
    std::optional<std::string> ground_truth_path;
    std::vector<EdgeKind> categories; // may hold several interaction kinds
    EntrySource source = EntrySource::synthetic;
};

// JSON-lines manifest, one entry per line:
//   {"id", "input", "instruction", "ground_truth"?, "categories":[...], "source"}
// Relative paths resolve against the manifest's directory. Schema
// violations and missing image files are reported with line numbers.
std::vector<ManifestEntry> load_manifest(const std::string& path);

struct CategoryStats {
    std::map<EdgeKind, int> per_category; // multi-label entries count once per kind
    std::map<EntrySource, int> per_source;
};

CategoryStats category_stats(const std::vector<ManifestEntry>& manifest);

struct EntryResult {
    std::string id;
    bool ok = false;
    bool has_ground_truth = false;
    std::string error;
    std::optional<MetricSet> metrics;
    double remote_s = 0.0;
    double local_s = 0.0;
};

struct MetricAggregate {
    double mean = 0.0;
    int count = 0;
};

struct Report {
    std::string label;
    nlohmann::json config_echo;
    std::vector<EntryResult> entries;
    // aggregates over entries that succeeded and have ground truth,
    // arithmetic mean in manifest order
    std::optional<MetricAggregate> dino, lpips;
    MetricAggregate psnr, ssim;
    double runtime_remote_mean_s = 0.0;
    double runtime_local_mean_s = 0.0;
    int runtime_count = 0;
    std::map<std::string, std::map<std::string, MetricAggregate>> by_category;
    std::map<std::string, std::map<std::string, MetricAggregate>> by_source;
    CategoryStats dataset;

    bool any_failed() const;
    nlohmann::json to_json() const;
    std::string to_markdown() const;
};

struct BenchOptions {
    std::string out_dir;   // per-entry artifacts land under <out_dir>/entries/<id>/
    std::string label;     // report row label; defaults to the pipeline mode name
    bool save_artifacts = true;
};

// Runs the full pipeline over every manifest entry with bounded
// parallelism, scores results against ground truth where available, and
// assembles the report. Per-entry failures are recorded, not fatal.
Report run_bench(const std::vector<ManifestEntry>& manifest, const BackendSet& backends,
                 const PipelineConfig& cfg, const PromptLibrary& prompts,
                 const BenchOptions& options);

// Formats the Runtime column: "R(API) + L" seconds per image.
std::string format_runtime_split(double remote_s, double local_s);

} // namespace reorm
