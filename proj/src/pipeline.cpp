#include "reorm/pipeline.hpp"

#include "reorm/error.hpp"
#include "reorm/util.hpp"

#include <chrono>

namespace reorm {

namespace {

using Clock = std::chrono::steady_clock;

// Charges the wall time of `fn` to the remote bucket when the backend is
// remote; everything else in the stage ends up in the local bucket.
template <typename Backend, typename Fn>
auto timed_call(StageTiming& timing, const Backend& backend, Fn&& fn) {
    auto start = Clock::now();
    if (backend.locality() == Locality::remote) {
        struct Charge {
            StageTiming& t;
            Clock::time_point s;
            ~Charge() { t.remote_s += std::chrono::duration<double>(Clock::now() - s).count(); }
        } charge{timing, start};
        return fn();
    }
    return fn();
}

struct StageScope {
    StageTiming& timing;
    Clock::time_point start = Clock::now();
    ~StageScope() {
        double wall = std::chrono::duration<double>(Clock::now() - start).count();
        timing.local_s += std::max(0.0, wall - timing.remote_s);
    }
};

Image reasoner_view(const Image& image, const PipelineConfig& cfg) {
    return downscale_longest_side(image, cfg.downscale_longest_side);
}

std::string vision_call(const BackendSet& backends, const PromptBundle& bundle,
                        const Image* image, StageTiming& timing) {
    if (!backends.vision_reasoner)
        raise(Errc::config_error, "no vision reasoner configured");
    return timed_call(timing, *backends.vision_reasoner,
                      [&] { return backends.vision_reasoner->reason(bundle, image); });
}

std::string text_call(const BackendSet& backends, const PromptBundle& bundle,
                      StageTiming& timing) {
    if (!backends.text_reasoner)
        raise(Errc::config_error, "no text reasoner configured");
    return timed_call(timing, *backends.text_reasoner,
                      [&] { return backends.text_reasoner->reason(bundle); });
}

// Chain steps run on the vision backend in ablation_b even when the
// bundle itself is text-only.
std::string chain_call(const BackendSet& backends, const PromptBundle& bundle,
                       const Image* image, const PipelineConfig& cfg, StageTiming& timing) {
    if (cfg.mode == PipelineMode::ablation_b)
        return vision_call(backends, bundle, bundle.attach_image ? image : nullptr, timing);
    if (bundle.attach_image) return vision_call(backends, bundle, image, timing);
    return text_call(backends, bundle, timing);
}

// Retry loop shared by every parse-checked reasoner exchange. The bundle
// is rendered once, so retries resend a byte-identical request.
template <typename Parse>
auto with_retries(const PipelineConfig& cfg, const std::string& what, Parse&& attempt) {
    int tries = cfg.retries_on_malformed + 1;
    for (int i = 0; i < tries; ++i) {
        try {
            return attempt();
        } catch (const Error& e) {
            if (e.code() != Errc::malformed_response) throw;
            if (i + 1 == tries)
                raise(Errc::analysis_failed,
                      what + " failed after " + std::to_string(tries) +
                          " attempts; last error: " + e.what());
        }
    }
    raise(Errc::internal_error, "unreachable");
}

} // namespace

const char* pipeline_mode_name(PipelineMode mode) {
    switch (mode) {
    case PipelineMode::cloud_full: return "cloud_full";
    case PipelineMode::cloud_no_correction: return "cloud_no_correction";
    case PipelineMode::local_chain: return "local_chain";
    case PipelineMode::ablation_a: return "ablation_a";
    case PipelineMode::ablation_b: return "ablation_b";
    }
    return "unknown";
}

PipelineMode pipeline_mode_from_name(const std::string& name) {
    for (PipelineMode m : {PipelineMode::cloud_full, PipelineMode::cloud_no_correction,
                           PipelineMode::local_chain, PipelineMode::ablation_a,
                           PipelineMode::ablation_b}) {
        if (name == pipeline_mode_name(m)) return m;
    }
    raise(Errc::config_error, "unknown pipeline mode: " + name);
}

void PipelineConfig::normalize() {
    if (mode != PipelineMode::cloud_full) self_correction = false;
    if (retries_on_malformed < 0) retries_on_malformed = 0;
}

nlohmann::json PipelineConfig::to_json() const {
    return {{"mode", pipeline_mode_name(mode)},
            {"retries_on_malformed", retries_on_malformed},
            {"mask_dilate_radius", mask_dilate_radius},
            {"segmenter_score_threshold", segmenter_score_threshold},
            {"max_parallel_requests", max_parallel_requests},
            {"self_correction", self_correction},
            {"correction_region_guard", correction_region_guard},
            {"downscale_longest_side", downscale_longest_side}};
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
    PipelineConfig cfg;
    try {
        if (j.contains("mode")) cfg.mode = pipeline_mode_from_name(j.at("mode").get<std::string>());
        if (j.contains("retries_on_malformed"))
            cfg.retries_on_malformed = j.at("retries_on_malformed").get<int>();
        if (j.contains("mask_dilate_radius"))
            cfg.mask_dilate_radius = j.at("mask_dilate_radius").get<int>();
        if (j.contains("segmenter_score_threshold"))
            cfg.segmenter_score_threshold = j.at("segmenter_score_threshold").get<double>();
        if (j.contains("max_parallel_requests"))
            cfg.max_parallel_requests = j.at("max_parallel_requests").get<int>();
        if (j.contains("self_correction"))
            cfg.self_correction = j.at("self_correction").get<bool>();
        if (j.contains("correction_region_guard"))
            cfg.correction_region_guard = j.at("correction_region_guard").get<bool>();
        if (j.contains("downscale_longest_side"))
            cfg.downscale_longest_side = j.at("downscale_longest_side").get<int>();
    } catch (const nlohmann::json::exception& ex) {
        raise(Errc::config_error, std::string("pipeline config: ") + ex.what());
    }
    if (cfg.mask_dilate_radius < 0)
        raise(Errc::config_error, "mask_dilate_radius must be nonnegative");
    if (cfg.segmenter_score_threshold < 0.0 || cfg.segmenter_score_threshold > 1.0)
        raise(Errc::config_error, "segmenter_score_threshold must be in [0,1]");
    if (cfg.max_parallel_requests < 1)
        raise(Errc::config_error, "max_parallel_requests must be at least 1");
    cfg.normalize();
    return cfg;
}

double RunRecord::total_remote_s() const {
    double t = 0.0;
    for (const auto& [_, st] : stage_timing) t += st.remote_s;
    return t;
}

double RunRecord::total_local_s() const {
    double t = 0.0;
    for (const auto& [_, st] : stage_timing) t += st.local_s;
    return t;
}

nlohmann::json RunRecord::to_json(const nlohmann::json& config_echo) const {
    nlohmann::json j{
        {"input_digest", input_digest},
        {"instruction", instruction},
        {"mode", pipeline_mode_name(mode)},
        {"plan", {{"reasoning", plan.reasoning}, {"labels", plan.labels}}},
        {"final_digest", final_image.digest()},
        {"first_pass_digest", first_pass.digest()},
        {"config", config_echo},
    };
    if (description) j["description"] = *description;
    if (correction)
        j["correction"] = {{"reasoning", correction->reasoning}, {"labels", correction->labels}};
    nlohmann::json stages = nlohmann::json::object();
    for (const auto& [name, st] : stage_timing)
        stages[name] = {{"remote_s", st.remote_s}, {"local_s", st.local_s}};
    j["timing"] = {{"generated_at", now_rfc3339()},
                   {"stages", std::move(stages)},
                   {"total_remote_s", total_remote_s()},
                   {"total_local_s", total_local_s()}};
    return j;
}

RemovalPlan run_analysis(const Image& image, const std::string& instruction,
                         const BackendSet& backends, const PipelineConfig& cfg,
                         const PromptLibrary& prompts, StageTiming& timing) {
    if (trim(instruction).empty())
        raise(Errc::invalid_argument, "analysis: instruction must be nonempty");
    StageScope scope{timing};
    PromptBundle bundle = prompts.render_analyzer(instruction);
    Image view = reasoner_view(image, cfg);
    return with_retries(cfg, "analysis", [&] {
        std::string text = vision_call(backends, bundle, &view, timing);
        return parse_analyzer_response(text);
    });
}

RemovalOutcome run_removal(const Image& image, const RemovalPlan& plan,
                           const BackendSet& backends, const PipelineConfig& cfg,
                           StageTiming& timing) {
    if (plan.labels.empty())
        raise(Errc::invalid_argument, "removal: plan must name at least one object");
    if (!backends.segmenter || !backends.remover)
        raise(Errc::config_error, "removal: segmenter and remover must be configured");
    StageScope scope{timing};

    SegmentResult segs = timed_call(timing, *backends.segmenter,
                                    [&] { return backends.segmenter->segment(image, plan.labels); });
    std::vector<Mask> masks;
    for (const auto& label : plan.labels) {
        auto it = segs.by_label.find(label);
        if (it == segs.by_label.end()) continue;
        for (const auto& inst : it->second) {
            if (inst.score < cfg.segmenter_score_threshold) continue;
            masks.push_back(mask_dilate(inst.mask, cfg.mask_dilate_radius));
        }
    }
    if (masks.empty())
        raise(Errc::no_mask_found,
              "removal: no label produced a mask at or above threshold " +
                  std::to_string(cfg.segmenter_score_threshold) +
                  " (likely mislocalization); aborting rather than returning the input");

    Mask unioned = mask_union(masks, image.width(), image.height());
    Image edited = timed_call(timing, *backends.remover,
                              [&] { return backends.remover->remove(image, unioned); });
    if (!edited.same_size(image))
        raise(Errc::format_error, "remover returned an image with different dimensions");
    return {std::move(edited), std::move(unioned)};
}

CorrectionOutcome run_self_correction(const Image& original, const Image& edited,
                                      const RemovalPlan& plan, const Mask& removal_mask,
                                      const BackendSet& backends, const PipelineConfig& cfg,
                                      const PromptLibrary& prompts, StageTiming& timing) {
    if (!cfg.self_correction)
        raise(Errc::invalid_argument, "self-correction invoked while disabled");
    StageScope scope{timing};

    // Simulator: expected post-removal scene from the original image.
    PromptBundle sim_bundle = prompts.render_simulator(plan);
    Image original_view = reasoner_view(original, cfg);
    std::string description = with_retries(cfg, "simulation", [&]() -> std::string {
        std::string text = vision_call(backends, sim_bundle, &original_view, timing);
        if (trim(text).empty())
            raise(Errc::malformed_response, "simulator returned an empty description");
        return text;
    });

    // Examiner: diff the edited image against the description.
    PromptBundle exam_bundle = prompts.render_examiner(description);
    Image edited_view = reasoner_view(edited, cfg);
    CorrectionList correction = with_retries(cfg, "examination", [&] {
        std::string text = vision_call(backends, exam_bundle, &edited_view, timing);
        return parse_examiner_response(text);
    });

    CorrectionOutcome out{edited, description, correction};
    std::vector<std::string> labels = normalize_labels(correction.labels);
    if (labels.empty()) return out; // image matches the expected scene

    SegmentResult segs = timed_call(timing, *backends.segmenter,
                                    [&] { return backends.segmenter->segment(edited, labels); });
    std::vector<Mask> masks;
    for (const auto& [label, instances] : segs.by_label) {
        for (const auto& inst : instances) {
            if (inst.score < cfg.segmenter_score_threshold) continue;
            masks.push_back(mask_dilate(inst.mask, cfg.mask_dilate_radius));
        }
    }
    Mask unioned = mask_union(masks, edited.width(), edited.height());
    if (cfg.correction_region_guard) {
        // only touch pixels near the first-pass edit
        Mask allowed = mask_dilate(removal_mask, cfg.mask_dilate_radius);
        unioned = mask_intersect(unioned, allowed);
    }
    if (unioned.empty_mask()) return out; // nothing actionable survived

    Remover& remover = backends.corrective_or_primary();
    Image corrected =
        timed_call(timing, remover, [&] { return remover.remove(edited, unioned); });
    if (!corrected.same_size(edited))
        raise(Errc::format_error, "corrective remover returned an image with different dimensions");
    out.final_image = std::move(corrected);
    return out;
}

RemovalPlan run_local_chain(const Image& image, const std::string& instruction,
                            const BackendSet& backends, const PipelineConfig& cfg,
                            const PromptLibrary& prompts, StageTiming& timing) {
    if (cfg.mode != PipelineMode::local_chain && cfg.mode != PipelineMode::ablation_b)
        raise(Errc::invalid_argument, "chained analysis requires local_chain or ablation_b mode");
    if (trim(instruction).empty())
        raise(Errc::invalid_argument, "analysis: instruction must be nonempty");
    StageScope scope{timing};
    Image view = reasoner_view(image, cfg);

    // 1. identify the primary object (text)
    PromptBundle b1 = prompts.render_chain_step(ChainStep::identify_target, instruction);
    std::string target = with_retries(cfg, "chain step 1", [&] {
        return parse_target_line(chain_call(backends, b1, nullptr, cfg, timing));
    });

    // 2. enumerate interacting elements (vision)
    PromptBundle b2 =
        prompts.render_chain_step(ChainStep::enumerate_elements, "Target object: " + target);
    std::vector<std::string> elements = with_retries(cfg, "chain step 2", [&] {
        return parse_marked_list("elements:", chain_call(backends, b2, &view, cfg, timing));
    });

    // 3. reason about consistency without the target (text)
    PromptBundle b3 = prompts.render_chain_step(
        ChainStep::reason_consistency,
        "Target object: " + target + "\nInteracting elements: " + format_label_list(elements));
    std::vector<std::string> to_remove = with_retries(cfg, "chain step 3", [&] {
        return parse_marked_list("remove:", chain_call(backends, b3, nullptr, cfg, timing));
    });

    // 4. consolidate into the final removal list (text)
    PromptBundle b4 = prompts.render_chain_step(
        ChainStep::consolidate_list,
        "Target object: " + target + "\nElements to remove: " + format_label_list(to_remove));
    RemovalPlan plan = with_retries(cfg, "chain step 4", [&] {
        return parse_analyzer_response(chain_call(backends, b4, nullptr, cfg, timing));
    });

    // the target is in the plan even if the consolidation step dropped it
    std::vector<std::string> labels{target};
    labels.insert(labels.end(), plan.labels.begin(), plan.labels.end());
    plan.labels = normalize_labels(labels);
    return plan;
}

RunRecord run_pipeline(const Image& image, const std::string& instruction,
                       const BackendSet& backends, const PipelineConfig& raw_cfg,
                       const PromptLibrary& prompts) {
    PipelineConfig cfg = raw_cfg;
    cfg.normalize();

    RunRecord record;
    record.input_digest = image.digest();
    record.instruction = instruction;
    record.mode = cfg.mode;

    auto stage = [&](const char* name) -> StageTiming& { return record.stage_timing[name]; };

    try {
        bool chained =
            cfg.mode == PipelineMode::local_chain || cfg.mode == PipelineMode::ablation_b;
        record.plan = chained
                          ? run_local_chain(image, instruction, backends, cfg, prompts,
                                            stage("analysis"))
                          : run_analysis(image, instruction, backends, cfg, prompts,
                                         stage("analysis"));

        RemovalOutcome removal =
            run_removal(image, record.plan, backends, cfg, stage("removal"));
        record.first_pass = removal.edited;
        record.final_image = removal.edited;

        if (cfg.self_correction) {
            CorrectionOutcome corrected =
                run_self_correction(image, removal.edited, record.plan, removal.removal_mask,
                                    backends, cfg, prompts, stage("correction"));
            record.description = corrected.description;
            record.correction = corrected.correction;
            record.final_image = corrected.final_image;
        }
    } catch (const Error& e) {
        throw Error(e.code(), std::string("pipeline: ") + e.what());
    }

    if (!record.final_image.same_size(image))
        raise(Errc::internal_error, "pipeline produced an image with different dimensions");
    return record;
}

} // namespace reorm
