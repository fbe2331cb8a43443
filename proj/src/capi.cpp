#include "reorm.h"

#include "reorm/diversity.hpp"
#include "reorm/engine.hpp"
#include "reorm/error.hpp"
#include "reorm/util.hpp"

#include <cstring>
#include <string>

namespace {

constexpr const char* kVersion = "0.1.0";

thread_local std::string t_last_error;

reorm_status status_of(reorm::Errc code) {
    using reorm::Errc;
    switch (code) {
    case Errc::invalid_argument: return REORM_ERR_INVALID_ARGUMENT;
    case Errc::io_error: return REORM_ERR_IO;
    case Errc::format_error:
    case Errc::dimension_mismatch:
    case Errc::malformed_response: return REORM_ERR_FORMAT;
    case Errc::config_error: return REORM_ERR_CONFIG;
    case Errc::missing_fixture:
    case Errc::transport_error:
    case Errc::provider_unavailable: return REORM_ERR_BACKEND;
    case Errc::analysis_failed:
    case Errc::no_mask_found: return REORM_ERR_PIPELINE;
    case Errc::internal_error: return REORM_ERR_INTERNAL;
    }
    return REORM_ERR_INTERNAL;
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) return nullptr;
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

template <typename Fn>
reorm_status guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const reorm::Error& e) {
        t_last_error = e.what();
        return status_of(e.code());
    } catch (const std::exception& e) {
        t_last_error = e.what();
        return REORM_ERR_INTERNAL;
    } catch (...) {
        t_last_error = "unknown error";
        return REORM_ERR_INTERNAL;
    }
}

reorm_status require(bool ok, const char* message) {
    if (ok) return REORM_OK;
    t_last_error = message;
    return REORM_ERR_INVALID_ARGUMENT;
}

} // namespace

struct reorm_engine {
    reorm::Engine impl;
};

extern "C" {

const char* reorm_version(void) { return kVersion; }

const char* reorm_last_error_message(void) { return t_last_error.c_str(); }

void reorm_string_free(char* str) { std::free(str); }

reorm_status reorm_engine_create(const char* config_json, reorm_engine** out_engine) {
    if (auto rc = require(config_json && out_engine, "config_json and out_engine are required"))
        return rc;
    *out_engine = nullptr;
    return guarded([&] {
        nlohmann::json j = nlohmann::json::parse(config_json, nullptr, false);
        if (j.is_discarded()) {
            t_last_error = "config is not valid JSON";
            return REORM_ERR_CONFIG;
        }
        auto config = reorm::EngineConfig::from_json(j);
        *out_engine = new reorm_engine{reorm::Engine(std::move(config))};
        return REORM_OK;
    });
}

void reorm_engine_destroy(reorm_engine* engine) { delete engine; }

reorm_status reorm_engine_config_json(const reorm_engine* engine, char** out_json) {
    if (auto rc = require(engine && out_json, "engine and out_json are required")) return rc;
    return guarded([&] {
        *out_json = dup_string(engine->impl.config().echo_json().dump(2));
        return *out_json ? REORM_OK : REORM_ERR_INTERNAL;
    });
}

reorm_status reorm_run(const reorm_engine* engine, const char* image_path,
                       const char* instruction, const char* out_dir, char** out_summary_json) {
    if (auto rc = require(engine && image_path && instruction && out_dir,
                          "engine, image_path, instruction, and out_dir are required"))
        return rc;
    return guarded([&] {
        reorm::RunRecord record = engine->impl.run_single(image_path, instruction, out_dir);
        if (out_summary_json) {
            std::string summary =
                record.to_json(engine->impl.config().echo_json()).dump(2);
            *out_summary_json = dup_string(summary);
            if (!*out_summary_json) return REORM_ERR_INTERNAL;
        }
        return REORM_OK;
    });
}

reorm_status reorm_bench(const reorm_engine* engine, const char* manifest_path,
                         const char* out_dir, const char* label, char** out_report_json) {
    if (auto rc = require(engine && manifest_path && out_dir,
                          "engine, manifest_path, and out_dir are required"))
        return rc;
    return guarded([&] {
        reorm::Report report =
            engine->impl.run_bench_manifest(manifest_path, out_dir, label ? label : "");
        if (out_report_json) {
            *out_report_json = dup_string(report.to_json().dump(2));
            if (!*out_report_json) return REORM_ERR_INTERNAL;
        }
        if (report.any_failed()) {
            t_last_error = "some benchmark entries failed; see the report";
            return REORM_ERR_PARTIAL_FAILURE;
        }
        return REORM_OK;
    });
}

reorm_status reorm_oracle_emit(uint64_t seed, int n_objects, double edge_density,
                               int canvas_width, int canvas_height, const char* out_dir) {
    if (auto rc = require(out_dir != nullptr, "out_dir is required")) return rc;
    return guarded([&] {
        reorm::emit_oracle_world(seed, n_objects, edge_density, out_dir,
                                 canvas_width > 0 ? canvas_width : 160,
                                 canvas_height > 0 ? canvas_height : 120);
        return REORM_OK;
    });
}

reorm_status reorm_diversity(const char* const* embedding_paths, size_t n_paths, uint64_t seed,
                             const char* options_json, const char* out_dir) {
    if (auto rc = require(embedding_paths && n_paths > 0 && out_dir,
                          "embedding_paths and out_dir are required"))
        return rc;
    return guarded([&] {
        std::vector<std::string> paths;
        for (size_t i = 0; i < n_paths; ++i) {
            if (!embedding_paths[i]) {
                t_last_error = "embedding path is null";
                return REORM_ERR_INVALID_ARGUMENT;
            }
            paths.emplace_back(embedding_paths[i]);
        }
        reorm::DiversityOptions options;
        options.seed = seed;
        options.tsne_params.seed = seed;
        if (options_json) {
            nlohmann::json j = nlohmann::json::parse(options_json, nullptr, false);
            if (j.is_discarded()) {
                t_last_error = "options is not valid JSON";
                return REORM_ERR_CONFIG;
            }
            if (j.contains("perplexity"))
                options.tsne_params.perplexity = j.at("perplexity").get<double>();
            if (j.contains("iterations"))
                options.tsne_params.iterations = j.at("iterations").get<int>();
        }
        reorm::run_diversity(paths, options, out_dir);
        return REORM_OK;
    });
}

} // extern "C"
