#pragma once

#include "reorm/backends.hpp"
#include "reorm/bench.hpp"
#include "reorm/fixtures.hpp"
#include "reorm/http_backends.hpp"
#include "reorm/oracle.hpp"
#include "reorm/pipeline.hpp"
#include "reorm/prompts.hpp"

#include <json.hpp>

#include <memory>
#include <optional>
#include <string>

namespace reorm {

enum class BackendKind { oracle, http };
enum class FixtureUse { off, record, replay };

// Declarative configuration shared by every subcommand. JSON schema:
// {
//   "assets_dir": "...",            // optional; env REORM_ASSETS_DIR wins
//   "pipeline": { ... },            // PipelineConfig fields
//   "backends": {
//     "kind": "oracle" | "http",
//     "fixtures": {"mode": "off"|"record"|"replay", "path": "...",
//                  "replay_latency_scale": 0.0},
//     "oracle": {"scene_file": "...", "scene": {...},
//                "faulty_protected_name": "", "simulator_omit": [...],
//                "segment_score": 0.9, "with_corrective_remover": true,
//                "with_providers": true},
//     "http": { HttpBackendConfig fields }
//   }
// }
struct EngineConfig {
    std::string assets_dir;
    PipelineConfig pipeline;
    BackendKind backend_kind = BackendKind::oracle;
    FixtureUse fixture_use = FixtureUse::off;
    std::string fixtures_path;
    double replay_latency_scale = 0.0;

    std::optional<nlohmann::json> oracle_scene_inline;
    std::string oracle_scene_file;
    OracleOptions oracle_options;
    HttpBackendConfig http;

    static EngineConfig from_json(const nlohmann::json& j);
    static EngineConfig from_file(const std::string& path);
    nlohmann::json echo_json() const; // effective config, secrets omitted
};

// Owns the prompt library, the scene (oracle mode), the fixture store,
// and the constructed backend set. Shareable across concurrent runs.
class Engine {
public:
    explicit Engine(EngineConfig config);

    const EngineConfig& config() const { return config_; }
    const PromptLibrary& prompts() const { return *prompts_; }
    const BackendSet& backends() const { return backends_; }
    const PipelineConfig& pipeline_config() const { return config_.pipeline; }
    const SceneGraph* scene() const { return scene_ ? scene_.get() : nullptr; }
    std::shared_ptr<FixtureStore> fixtures() const { return fixtures_; }

    // Single-image run; writes edited.png, first_pass.png (when the
    // corrective pass changed the image), and record.json under out_dir.
    RunRecord run_single(const std::string& image_path, const std::string& instruction,
                         const std::string& out_dir) const;

    Report run_bench_manifest(const std::string& manifest_path, const std::string& out_dir,
                              const std::string& label = "") const;

private:
    EngineConfig config_;
    std::unique_ptr<PromptLibrary> prompts_;
    std::unique_ptr<SceneGraph> scene_;
    std::shared_ptr<FixtureStore> fixtures_;
    BackendSet backends_;
};

// Writes scene.json, the full render, and per-object ground truth
// (closure list + post-removal render) under out_dir.
void emit_oracle_world(std::uint64_t seed, int n_objects, double edge_density,
                       const std::string& out_dir, int canvas_width = 160,
                       int canvas_height = 120);

} // namespace reorm
