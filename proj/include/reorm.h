/*
 * reorm: interaction-consistent object removal engine.
 *
 * C interface to the pipeline engine: opaque handles, integer status
 * codes, and UTF-8 JSON strings for structured results. Every function
 * returns REORM_OK on success; on failure the thread-local message from
 * reorm_last_error_message() describes what went wrong. Strings returned
 * through out-parameters are owned by the caller and must be released
 * with reorm_string_free().
 */

#ifndef REORM_H
#define REORM_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define REORM_API __declspec(dllexport)
#else
#define REORM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum reorm_status {
    REORM_OK = 0,
    REORM_ERR_INVALID_ARGUMENT = 1,
    REORM_ERR_IO = 2,
    REORM_ERR_FORMAT = 3,
    REORM_ERR_CONFIG = 4,
    REORM_ERR_BACKEND = 5,        /* transport, missing fixture, provider down */
    REORM_ERR_PIPELINE = 6,       /* analysis failed, no mask found */
    REORM_ERR_PARTIAL_FAILURE = 7, /* batch finished but some entries failed */
    REORM_ERR_INTERNAL = 8
} reorm_status;

/* Engine handle: configuration + prompt assets + backends. */
typedef struct reorm_engine reorm_engine;

REORM_API const char* reorm_version(void);

/* Thread-local message for the most recent failure on this thread. The
 * pointer stays valid until the next failing call on the same thread. */
REORM_API const char* reorm_last_error_message(void);

REORM_API void reorm_string_free(char* str);

/* config_json: the declarative engine configuration document. */
REORM_API reorm_status reorm_engine_create(const char* config_json, reorm_engine** out_engine);
REORM_API void reorm_engine_destroy(reorm_engine* engine);

/* Effective configuration (secrets omitted) as JSON. */
REORM_API reorm_status reorm_engine_config_json(const reorm_engine* engine, char** out_json);

/* Runs the removal pipeline on one image. Writes edited.png, record.json
 * (and first_pass.png when the corrective pass changed the image) under
 * out_dir. out_summary_json (optional) receives the run record JSON. */
REORM_API reorm_status reorm_run(const reorm_engine* engine, const char* image_path,
                                 const char* instruction, const char* out_dir,
                                 char** out_summary_json);

/* Runs the benchmark over a JSON-lines manifest. Writes report.json,
 * report.md, and per-entry artifacts under out_dir. Returns
 * REORM_ERR_PARTIAL_FAILURE when some entries failed; the report is
 * still written. label (optional) names the report row. */
REORM_API reorm_status reorm_bench(const reorm_engine* engine, const char* manifest_path,
                                   const char* out_dir, const char* label,
                                   char** out_report_json);

/* Deterministic synthetic world: scene.json, full render, and per-object
 * ground-truth renders plus closure lists under out_dir. */
REORM_API reorm_status reorm_oracle_emit(uint64_t seed, int n_objects, double edge_density,
                                         int canvas_width, int canvas_height,
                                         const char* out_dir);

/* Embedding diversity analysis over one or more embedding files
 * (JSON-lines or binary matrix). options_json may override
 * {"perplexity", "iterations"}; pass NULL for defaults. Writes
 * tsne_points.csv, variance_<label>.csv, summary.json under out_dir. */
REORM_API reorm_status reorm_diversity(const char* const* embedding_paths, size_t n_paths,
                                       uint64_t seed, const char* options_json,
                                       const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* REORM_H */
