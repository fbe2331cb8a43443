#pragma once

#include "reorm/backends.hpp"
#include "reorm/parse.hpp"
#include "reorm/prompts.hpp"
#include "reorm/raster.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <string>

namespace reorm {

enum class PipelineMode {
    cloud_full,          // single-prompt analysis + self-correction
    cloud_no_correction, // single-prompt analysis only
    local_chain,         // chained analysis split across text/vision reasoners
    ablation_a,          // single prompt, vision reasoner only, no correction
    ablation_b,          // chained analysis, all steps on the vision reasoner
};

const char* pipeline_mode_name(PipelineMode mode);
PipelineMode pipeline_mode_from_name(const std::string& name);

struct PipelineConfig {
    PipelineMode mode = PipelineMode::cloud_full;
    int retries_on_malformed = 2;
    int mask_dilate_radius = 8;
    double segmenter_score_threshold = 0.3;
    int max_parallel_requests = 4;
    bool self_correction = true;
    // Restrict corrective removal to the dilated first-pass region,
    // trading missed residues for protection against over-editing.
    bool correction_region_guard = false;
    int downscale_longest_side = 1024;

    // Applies mode-forced settings (the chained/ablation modes never run
    // self-correction).
    void normalize();
    nlohmann::json to_json() const;
    static PipelineConfig from_json(const nlohmann::json& j);
};

// Seconds spent inside remote backend calls vs everything else.
struct StageTiming {
    double remote_s = 0.0;
    double local_s = 0.0;
};

struct RunRecord {
    std::string input_digest;
    std::string instruction;
    PipelineMode mode = PipelineMode::cloud_full;
    RemovalPlan plan;
    std::optional<std::string> description;
    std::optional<CorrectionList> correction;
    Image first_pass;
    Image final_image;
    std::map<std::string, StageTiming> stage_timing;

    double total_remote_s() const;
    double total_local_s() const;

    // Timing and timestamps are grouped under a single volatile field so
    // replayed runs are byte-comparable after dropping it.
    nlohmann::json to_json(const nlohmann::json& config_echo) const;
};

// Analysis via the single chain-of-thought prompt on the vision reasoner;
// malformed responses are re-prompted up to cfg.retries_on_malformed.
RemovalPlan run_analysis(const Image& image, const std::string& instruction,
                         const BackendSet& backends, const PipelineConfig& cfg,
                         const PromptLibrary& prompts, StageTiming& timing);

struct RemovalOutcome {
    Image edited;
    Mask removal_mask; // union actually sent to the remover
};

// Segment every plan label, drop low-confidence instances, dilate, union,
// and invoke the remover once.
RemovalOutcome run_removal(const Image& image, const RemovalPlan& plan,
                           const BackendSet& backends, const PipelineConfig& cfg,
                           StageTiming& timing);

struct CorrectionOutcome {
    Image final_image;
    std::string description;
    CorrectionList correction;
};

// Simulate the expected scene, examine the edit against it, and run at
// most one corrective removal pass.
CorrectionOutcome run_self_correction(const Image& original, const Image& edited,
                                      const RemovalPlan& plan, const Mask& removal_mask,
                                      const BackendSet& backends, const PipelineConfig& cfg,
                                      const PromptLibrary& prompts, StageTiming& timing);

// Four-step chained analysis. In ablation_b every step runs on the vision
// reasoner; otherwise text steps go to the text reasoner.
RemovalPlan run_local_chain(const Image& image, const std::string& instruction,
                            const BackendSet& backends, const PipelineConfig& cfg,
                            const PromptLibrary& prompts, StageTiming& timing);

RunRecord run_pipeline(const Image& image, const std::string& instruction,
                       const BackendSet& backends, const PipelineConfig& cfg,
                       const PromptLibrary& prompts);

} // namespace reorm
