// reorm command line: run, bench, oracle, diversity, record.
// The tool is a thin adapter from flags to the C API in reorm.h; the
// only work it does itself is merging --config files with flag overrides.

#include <reorm.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitEntryFailures = 1;
constexpr int kExitUsage = 2;

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw CLI::ValidationError("--config", "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    json j = json::parse(ss.str(), nullptr, false);
    if (j.is_discarded()) throw CLI::ValidationError("--config", path + " is not valid JSON");
    return j;
}

int status_to_exit(reorm_status status) {
    switch (status) {
    case REORM_OK: return kExitOk;
    case REORM_ERR_PARTIAL_FAILURE: return kExitEntryFailures;
    case REORM_ERR_INVALID_ARGUMENT:
    case REORM_ERR_CONFIG: return kExitUsage;
    default: return kExitEntryFailures;
    }
}

int fail(reorm_status status) {
    std::cerr << "error: " << reorm_last_error_message() << "\n";
    return status_to_exit(status);
}

struct EngineHandle {
    reorm_engine* ptr = nullptr;
    ~EngineHandle() { reorm_engine_destroy(ptr); }
};

struct OwnedString {
    char* ptr = nullptr;
    ~OwnedString() { reorm_string_free(ptr); }
};

// Flags win over the config file.
struct PipelineOverrides {
    std::string mode;
    int dilate_radius = -1;
    double score_threshold = -1.0;
    int retries = -1;
    int parallel = -1;
    int self_correction = -1; // -1 unset, 0 off, 1 on
    int region_guard = -1;
    std::string fixtures_path;
    std::string fixtures_mode;

    void apply(json& cfg) const {
        auto& pipeline = cfg["pipeline"];
        if (!mode.empty()) pipeline["mode"] = mode;
        if (dilate_radius >= 0) pipeline["mask_dilate_radius"] = dilate_radius;
        if (score_threshold >= 0.0) pipeline["segmenter_score_threshold"] = score_threshold;
        if (retries >= 0) pipeline["retries_on_malformed"] = retries;
        if (parallel >= 0) pipeline["max_parallel_requests"] = parallel;
        if (self_correction >= 0) pipeline["self_correction"] = self_correction == 1;
        if (region_guard >= 0) pipeline["correction_region_guard"] = region_guard == 1;
        if (!fixtures_path.empty()) {
            cfg["backends"]["fixtures"]["path"] = fixtures_path;
            // bare --fixtures means "replay from this file"
            if (fixtures_mode.empty() && !cfg["backends"]["fixtures"].contains("mode"))
                cfg["backends"]["fixtures"]["mode"] = "replay";
        }
        if (!fixtures_mode.empty()) cfg["backends"]["fixtures"]["mode"] = fixtures_mode;
    }
};

void add_pipeline_flags(CLI::App* cmd, PipelineOverrides& ov) {
    cmd->add_option("--mode", ov.mode,
                    "pipeline mode: cloud_full, cloud_no_correction, local_chain, "
                    "ablation_a, ablation_b");
    cmd->add_option("--dilate-radius", ov.dilate_radius, "mask dilation radius in pixels");
    cmd->add_option("--score-threshold", ov.score_threshold,
                    "segmenter confidence threshold in [0,1]");
    cmd->add_option("--retries", ov.retries, "re-prompts allowed on malformed responses");
    cmd->add_option("--parallel", ov.parallel, "max concurrent pipeline runs");
    cmd->add_flag_callback("--self-correction", [&ov] { ov.self_correction = 1; },
                           "enable the verify-and-refine pass");
    cmd->add_flag_callback("--no-self-correction", [&ov] { ov.self_correction = 0; },
                           "disable the verify-and-refine pass");
    cmd->add_flag_callback("--correction-region-guard", [&ov] { ov.region_guard = 1; },
                           "restrict corrective removal to the dilated first-pass region");
    cmd->add_option("--fixtures", ov.fixtures_path,
                    "fixture file to replay (the record subcommand writes one)");
}

int make_engine(const std::string& config_path, const PipelineOverrides& ov,
                EngineHandle& engine) {
    json cfg = load_config_file(config_path);
    ov.apply(cfg);
    reorm_status rc = reorm_engine_create(cfg.dump().c_str(), &engine.ptr);
    if (rc != REORM_OK) return fail(rc);
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"interaction-consistent object removal engine"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string("reorm ") + reorm_version());

    // run
    auto* run = app.add_subcommand("run", "remove an object (and its dependents) from one image");
    std::string run_image, run_instruction, run_config, run_out;
    PipelineOverrides run_ov;
    run->add_option("--image", run_image, "input PNG")->required();
    run->add_option("--instruction", run_instruction, "natural-language removal instruction")
        ->required();
    run->add_option("--config", run_config, "engine config JSON");
    run->add_option("--out", run_out, "output directory")->required();
    add_pipeline_flags(run, run_ov);

    // bench
    auto* bench = app.add_subcommand("bench", "evaluate a manifest of removal tasks");
    std::string bench_manifest, bench_config, bench_out, bench_label;
    PipelineOverrides bench_ov;
    bench->add_option("--manifest", bench_manifest, "JSON-lines manifest")->required();
    bench->add_option("--config", bench_config, "engine config JSON");
    bench->add_option("--out", bench_out, "output directory")->required();
    bench->add_option("--label", bench_label, "report row label");
    add_pipeline_flags(bench, bench_ov);

    // oracle
    auto* oracle = app.add_subcommand("oracle", "emit a synthetic world with ground truth");
    std::uint64_t oracle_seed = 0;
    int oracle_n = 5, oracle_w = 160, oracle_h = 120;
    double oracle_density = 0.3;
    std::string oracle_out;
    oracle->add_option("--seed", oracle_seed, "generator seed")->required();
    oracle->add_option("--objects", oracle_n, "object count")->check(CLI::PositiveNumber);
    oracle->add_option("--density", oracle_density, "edge probability in [0,1]")
        ->check(CLI::Range(0.0, 1.0));
    oracle->add_option("--canvas-width", oracle_w, "canvas width")->check(CLI::PositiveNumber);
    oracle->add_option("--canvas-height", oracle_h, "canvas height")->check(CLI::PositiveNumber);
    oracle->add_option("--out", oracle_out, "output directory")->required();

    // diversity
    auto* diversity = app.add_subcommand("diversity", "embedding diversity analysis");
    std::vector<std::string> div_embeddings;
    std::uint64_t div_seed = 0;
    double div_perplexity = -1.0;
    int div_iterations = -1;
    std::string div_out;
    diversity->add_option("--embeddings", div_embeddings, "embedding files (.jsonl or binary)")
        ->required()
        ->expected(-1);
    diversity->add_option("--seed", div_seed, "subsampling seed");
    diversity->add_option("--perplexity", div_perplexity, "t-SNE perplexity");
    diversity->add_option("--iterations", div_iterations, "t-SNE iterations");
    diversity->add_option("--out", div_out, "output directory")->required();

    // record
    auto* record = app.add_subcommand("record", "run a manifest against live backends, "
                                                "persisting fixtures for replay");
    std::string rec_manifest, rec_config, rec_out, rec_fixtures;
    PipelineOverrides rec_ov;
    record->add_option("--manifest", rec_manifest, "JSON-lines manifest")->required();
    record->add_option("--config", rec_config, "engine config JSON");
    record->add_option("--out", rec_out, "output directory")->required();
    record->add_option("--fixtures-out", rec_fixtures,
                       "fixture file to write (default: <out>/fixtures.jsonl)");
    add_pipeline_flags(record, rec_ov);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            if (!std::filesystem::exists(run_image)) {
                std::cerr << "error: input image not found: " << run_image << "\n";
                return kExitUsage;
            }
            EngineHandle engine;
            if (int rc = make_engine(run_config, run_ov, engine)) return rc;
            OwnedString summary;
            reorm_status rc = reorm_run(engine.ptr, run_image.c_str(), run_instruction.c_str(),
                                        run_out.c_str(), &summary.ptr);
            if (rc != REORM_OK) return fail(rc);
            json record_json = json::parse(summary.ptr);
            std::cout << "plan:";
            for (const auto& label : record_json["plan"]["labels"])
                std::cout << " \"" << label.get<std::string>() << "\"";
            std::cout << "\n";
            const auto& timing = record_json["timing"];
            std::printf("runtime: %.2f(API) + %.2f s\n",
                        timing["total_remote_s"].get<double>(),
                        timing["total_local_s"].get<double>());
            std::cout << "wrote " << run_out << "/edited.png\n";
            return kExitOk;
        }

        if (*bench) {
            EngineHandle engine;
            if (int rc = make_engine(bench_config, bench_ov, engine)) return rc;
            OwnedString report;
            reorm_status rc = reorm_bench(engine.ptr, bench_manifest.c_str(), bench_out.c_str(),
                                          bench_label.empty() ? nullptr : bench_label.c_str(),
                                          &report.ptr);
            if (rc != REORM_OK && rc != REORM_ERR_PARTIAL_FAILURE) return fail(rc);
            json rj = json::parse(report.ptr);
            const auto& counts = rj["counts"];
            std::cout << "entries: " << counts["entries"] << ", evaluated: "
                      << counts["evaluated"] << ", failed: " << counts["failed"] << "\n";
            std::cout << "wrote " << bench_out << "/report.json and report.md\n";
            if (rc == REORM_ERR_PARTIAL_FAILURE) {
                std::cerr << "warning: " << reorm_last_error_message() << "\n";
                return kExitEntryFailures;
            }
            return kExitOk;
        }

        if (*oracle) {
            reorm_status rc = reorm_oracle_emit(oracle_seed, oracle_n, oracle_density, oracle_w,
                                                oracle_h, oracle_out.c_str());
            if (rc != REORM_OK) return fail(rc);
            std::cout << "wrote " << oracle_out << "/scene.json, full.png, gt_*.png\n";
            return kExitOk;
        }

        if (*diversity) {
            json options = json::object();
            if (div_perplexity > 0.0) options["perplexity"] = div_perplexity;
            if (div_iterations > 0) options["iterations"] = div_iterations;
            std::vector<const char*> paths;
            for (const auto& p : div_embeddings) paths.push_back(p.c_str());
            reorm_status rc = reorm_diversity(paths.data(), paths.size(), div_seed,
                                              options.empty() ? nullptr : options.dump().c_str(),
                                              div_out.c_str());
            if (rc != REORM_OK) return fail(rc);
            std::cout << "wrote " << div_out
                      << "/tsne_points.csv, variance_*.csv, summary.json\n";
            return kExitOk;
        }

        if (*record) {
            if (rec_fixtures.empty())
                rec_fixtures = rec_ov.fixtures_path.empty() ? rec_out + "/fixtures.jsonl"
                                                            : rec_ov.fixtures_path;
            rec_ov.fixtures_path = rec_fixtures;
            rec_ov.fixtures_mode = "record";
            EngineHandle engine;
            json cfg = load_config_file(rec_config);
            rec_ov.apply(cfg);
            // ensure the fixture file's directory exists before appending
            auto fixture_dir = std::filesystem::path(rec_fixtures).parent_path();
            if (!fixture_dir.empty()) std::filesystem::create_directories(fixture_dir);
            reorm_status rc = reorm_engine_create(cfg.dump().c_str(), &engine.ptr);
            if (rc != REORM_OK) return fail(rc);
            OwnedString report;
            rc = reorm_bench(engine.ptr, rec_manifest.c_str(), rec_out.c_str(), "record",
                             &report.ptr);
            if (rc != REORM_OK && rc != REORM_ERR_PARTIAL_FAILURE) return fail(rc);
            std::cout << "fixtures written to " << rec_fixtures << "\n";
            return rc == REORM_ERR_PARTIAL_FAILURE ? kExitEntryFailures : kExitOk;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitEntryFailures;
    }
    return kExitUsage;
}
