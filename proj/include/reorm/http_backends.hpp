#pragma once

#include "reorm/backends.hpp"

#include <string>

namespace reorm {

// Endpoint wiring for the external model services. URLs carry scheme,
// host, port, and path. The environment can override credentials and
// endpoints (REORM_API_KEY, REORM_CHAT_URL, REORM_TEXT_URL,
// REORM_SEGMENT_URL, REORM_REMOVE_URL, REORM_CORRECTIVE_REMOVE_URL,
// REORM_EMBED_URL, REORM_SCORE_URL) plus REORM_TIMEOUT_S and
// REORM_MAX_RETRIES.
struct HttpBackendConfig {
    std::string chat_url;  // chat-completions endpoint for the vision reasoner
    std::string chat_model;
    Locality chat_locality = Locality::remote;

    // Separate text reasoner; empty means the chat endpoint plays both.
    std::string text_url;
    std::string text_model;
    Locality text_locality = Locality::remote;

    std::string segment_url;
    Locality segment_locality = Locality::local;
    std::string remove_url;
    Locality remove_locality = Locality::local;
    std::string corrective_remove_url; // optional second remover
    std::string embed_url;             // optional metric providers
    std::string score_url;

    std::string api_key;
    double timeout_s = 60.0;
    int max_retries = 3;
    int backoff_base_ms = 250;

    void apply_env_overrides();
};

// Builds live wire-protocol clients:
//   chat:    POST <chat_url>  {model, messages:[...]} -> choices[0].message.content
//   segment: POST <segment_url> {image_b64, labels} -> {results:{label:[{mask_b64,score}]}}
//   remove:  POST <remove_url>  {image_b64, mask_b64} -> {image_b64}
//   embed:   POST <embed_url>   {image_b64} -> {vector:[...]}
//   score:   POST <score_url>   {image_a_b64, image_b_b64} -> {score}
BackendSet make_http_backends(const HttpBackendConfig& cfg);

} // namespace reorm
