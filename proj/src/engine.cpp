#include "reorm/engine.hpp"

#include "reorm/error.hpp"
#include "reorm/png_io.hpp"
#include "reorm/util.hpp"

#include <filesystem>

namespace fs = std::filesystem;

namespace reorm {

namespace {

FixtureUse fixture_use_from_name(const std::string& name) {
    if (name == "off") return FixtureUse::off;
    if (name == "record") return FixtureUse::record;
    if (name == "replay") return FixtureUse::replay;
    raise(Errc::config_error, "unknown fixtures mode: " + name);
}

const char* fixture_use_name(FixtureUse u) {
    switch (u) {
    case FixtureUse::off: return "off";
    case FixtureUse::record: return "record";
    case FixtureUse::replay: return "replay";
    }
    return "unknown";
}

} // namespace

EngineConfig EngineConfig::from_json(const nlohmann::json& j) {
    EngineConfig cfg;
    try {
        if (j.contains("assets_dir")) cfg.assets_dir = j.at("assets_dir").get<std::string>();
        if (j.contains("pipeline")) cfg.pipeline = PipelineConfig::from_json(j.at("pipeline"));

        if (j.contains("backends")) {
            const auto& b = j.at("backends");
            std::string kind = b.value("kind", "oracle");
            if (kind == "oracle") cfg.backend_kind = BackendKind::oracle;
            else if (kind == "http") cfg.backend_kind = BackendKind::http;
            else raise(Errc::config_error, "unknown backend kind: " + kind);

            if (b.contains("fixtures")) {
                const auto& f = b.at("fixtures");
                cfg.fixture_use = fixture_use_from_name(f.value("mode", "off"));
                cfg.fixtures_path = f.value("path", "");
                cfg.replay_latency_scale = f.value("replay_latency_scale", 0.0);
                if (cfg.fixture_use != FixtureUse::off && cfg.fixtures_path.empty())
                    raise(Errc::config_error, "fixtures mode requires a path");
            }

            if (b.contains("oracle")) {
                const auto& o = b.at("oracle");
                if (o.contains("scene")) cfg.oracle_scene_inline = o.at("scene");
                cfg.oracle_scene_file = o.value("scene_file", "");
                cfg.oracle_options.faulty_protected_name = o.value("faulty_protected_name", "");
                if (o.contains("simulator_omit"))
                    cfg.oracle_options.simulator_omit =
                        o.at("simulator_omit").get<std::vector<std::string>>();
                cfg.oracle_options.segment_score = o.value("segment_score", 0.9);
                cfg.oracle_options.with_corrective_remover =
                    o.value("with_corrective_remover", true);
                cfg.oracle_options.with_providers = o.value("with_providers", true);
            }

            if (b.contains("http")) {
                const auto& h = b.at("http");
                cfg.http.chat_url = h.value("chat_url", "");
                cfg.http.chat_model = h.value("chat_model", "");
                cfg.http.chat_locality = locality_from_name(h.value("chat_locality", "remote"));
                cfg.http.text_url = h.value("text_url", "");
                cfg.http.text_model = h.value("text_model", "");
                cfg.http.text_locality = locality_from_name(h.value("text_locality", "remote"));
                cfg.http.segment_url = h.value("segment_url", "");
                cfg.http.segment_locality =
                    locality_from_name(h.value("segment_locality", "local"));
                cfg.http.remove_url = h.value("remove_url", "");
                cfg.http.remove_locality = locality_from_name(h.value("remove_locality", "local"));
                cfg.http.corrective_remove_url = h.value("corrective_remove_url", "");
                cfg.http.embed_url = h.value("embed_url", "");
                cfg.http.score_url = h.value("score_url", "");
                cfg.http.api_key = h.value("api_key", "");
                cfg.http.timeout_s = h.value("timeout_s", 60.0);
                cfg.http.max_retries = h.value("max_retries", 3);
                cfg.http.backoff_base_ms = h.value("backoff_base_ms", 250);
            }
        }
    } catch (const nlohmann::json::exception& ex) {
        raise(Errc::config_error, std::string("config: ") + ex.what());
    }
    cfg.http.apply_env_overrides();
    cfg.pipeline.normalize();
    return cfg;
}

EngineConfig EngineConfig::from_file(const std::string& path) {
    nlohmann::json j = nlohmann::json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) raise(Errc::config_error, path + ": invalid JSON");
    return from_json(j);
}

nlohmann::json EngineConfig::echo_json() const {
    nlohmann::json j;
    j["pipeline"] = pipeline.to_json();
    j["backends"]["kind"] = backend_kind == BackendKind::oracle ? "oracle" : "http";
    j["backends"]["fixtures"] = {{"mode", fixture_use_name(fixture_use)},
                                 {"path", fixtures_path},
                                 {"replay_latency_scale", replay_latency_scale}};
    if (backend_kind == BackendKind::oracle) {
        j["backends"]["oracle"] = {
            {"scene_file", oracle_scene_file},
            {"faulty_protected_name", oracle_options.faulty_protected_name},
            {"simulator_omit", oracle_options.simulator_omit},
            {"segment_score", oracle_options.segment_score},
            {"with_corrective_remover", oracle_options.with_corrective_remover},
            {"with_providers", oracle_options.with_providers}};
    } else {
        // endpoints echoed, credentials not
        j["backends"]["http"] = {{"chat_url", http.chat_url},
                                 {"chat_model", http.chat_model},
                                 {"text_url", http.text_url},
                                 {"text_model", http.text_model},
                                 {"segment_url", http.segment_url},
                                 {"remove_url", http.remove_url},
                                 {"corrective_remove_url", http.corrective_remove_url},
                                 {"embed_url", http.embed_url},
                                 {"score_url", http.score_url}};
    }
    return j;
}

Engine::Engine(EngineConfig config) : config_(std::move(config)) {
    prompts_ = std::make_unique<PromptLibrary>(config_.assets_dir);

    if (config_.backend_kind == BackendKind::oracle) {
        if (config_.oracle_scene_inline) {
            scene_ = std::make_unique<SceneGraph>(SceneGraph::from_json(*config_.oracle_scene_inline));
        } else if (!config_.oracle_scene_file.empty()) {
            nlohmann::json j =
                nlohmann::json::parse(read_file(config_.oracle_scene_file), nullptr, false);
            if (j.is_discarded())
                raise(Errc::config_error, config_.oracle_scene_file + ": invalid scene JSON");
            scene_ = std::make_unique<SceneGraph>(SceneGraph::from_json(j));
        } else if (config_.fixture_use != FixtureUse::replay) {
            raise(Errc::config_error, "oracle backends need a scene (scene or scene_file)");
        }
    }

    bool with_corrective = config_.backend_kind == BackendKind::oracle
                               ? config_.oracle_options.with_corrective_remover
                               : !config_.http.corrective_remove_url.empty();
    bool with_providers = config_.backend_kind == BackendKind::oracle
                              ? config_.oracle_options.with_providers
                              : !config_.http.embed_url.empty();

    switch (config_.fixture_use) {
    case FixtureUse::replay:
        fixtures_ = std::make_shared<FixtureStore>(config_.fixtures_path, FixtureMode::replay);
        backends_ = make_replay_backends(fixtures_, config_.replay_latency_scale, with_providers,
                                         with_corrective);
        return;
    case FixtureUse::record:
        fixtures_ = std::make_shared<FixtureStore>(config_.fixtures_path, FixtureMode::record);
        break;
    case FixtureUse::off:
        break;
    }

    BackendSet live = config_.backend_kind == BackendKind::oracle
                          ? oracle_backends(*scene_, *prompts_, config_.oracle_options)
                          : make_http_backends(config_.http);
    backends_ = fixtures_ ? wrap_recording(live, fixtures_) : live;
}

RunRecord Engine::run_single(const std::string& image_path, const std::string& instruction,
                             const std::string& out_dir) const {
    Image input = load_image_png(image_path);
    RunRecord record = run_pipeline(input, instruction, backends_, config_.pipeline, *prompts_);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        save_png((fs::path(out_dir) / "edited.png").string(), record.final_image);
        if (!(record.first_pass == record.final_image))
            save_png((fs::path(out_dir) / "first_pass.png").string(), record.first_pass);
        write_file((fs::path(out_dir) / "record.json").string(),
                   record.to_json(config_.echo_json()).dump(2) + "\n");
    }
    return record;
}

Report Engine::run_bench_manifest(const std::string& manifest_path, const std::string& out_dir,
                                  const std::string& label) const {
    auto manifest = load_manifest(manifest_path);
    BenchOptions options;
    options.out_dir = out_dir;
    options.label = label;
    Report report = run_bench(manifest, backends_, config_.pipeline, *prompts_, options);
    return report;
}

void emit_oracle_world(std::uint64_t seed, int n_objects, double edge_density,
                       const std::string& out_dir, int canvas_width, int canvas_height) {
    SceneGraph scene = gen_scene(seed, n_objects, edge_density, canvas_width, canvas_height);
    fs::create_directories(out_dir);
    write_file((fs::path(out_dir) / "scene.json").string(), scene.to_json().dump(2) + "\n");
    save_png((fs::path(out_dir) / "full.png").string(), render(scene, {}));

    nlohmann::json closures = nlohmann::json::object();
    for (const auto& o : scene.objects) {
        std::set<int> closed = closure(scene, {o.id});
        nlohmann::json ids = nlohmann::json::array();
        nlohmann::json names = nlohmann::json::array();
        for (int id : closed) {
            ids.push_back(id);
            names.push_back(scene.find_object(id)->name);
        }
        closures[std::to_string(o.id)] = {{"name", o.name}, {"closure_ids", ids},
                                          {"closure_names", names}};
        save_png((fs::path(out_dir) / ("gt_" + std::to_string(o.id) + ".png")).string(),
                 render(scene, closed));
    }
    write_file((fs::path(out_dir) / "closures.json").string(), closures.dump(2) + "\n");
}

} // namespace reorm
