#pragma once

#include "reorm/backends.hpp"

#include <json.hpp>

#include <mutex>
#include <optional>
#include <unordered_map>

namespace reorm {

// One recorded request/response pair. The key is a SHA-256 over the
// endpoint kind, the canonicalized request body, and the digests of any
// attached rasters, so identical requests always collide onto one entry.
struct FixtureEntry {
    std::string key_hash;
    std::string kind;
    Locality locality = Locality::remote;
    double elapsed_s = 0.0;
    nlohmann::json response;
};

enum class FixtureMode { record, replay };

// JSON-lines store: one {key_hash, kind, locality, elapsed_s, response}
// object per line. Record mode appends (single writer); replay mode is
// read-only and fully deterministic.
class FixtureStore {
public:
    FixtureStore(std::string path, FixtureMode mode);

    FixtureMode mode() const { return mode_; }
    std::size_t size() const;

    std::optional<FixtureEntry> lookup(const std::string& key_hash) const;

    // Deduplicates by hash; returns true when a new entry was persisted.
    bool record(const FixtureEntry& entry);

    // Locality of the backend a kind was recorded from (defaults to local
    // when the kind never appears).
    Locality kind_locality(const std::string& kind) const;

    static std::string hash_key(const std::string& kind, const nlohmann::json& canonical_request);

private:
    std::string path_;
    FixtureMode mode_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, FixtureEntry> entries_;
    std::map<std::string, Locality> kind_locality_;
};

// Wraps a live BackendSet so every call is persisted to the store.
BackendSet wrap_recording(const BackendSet& live, std::shared_ptr<FixtureStore> store);

// Serves every call from the store; a request that was never recorded
// fails with Errc::missing_fixture. replay_latency_scale multiplies the
// recorded elapsed time into an injected delay (0 = respond immediately).
// with_corrective must mirror whether the recorded setup had a separate
// corrective remover, so the corrective pass replays against the right kind.
BackendSet make_replay_backends(std::shared_ptr<FixtureStore> store,
                                double replay_latency_scale = 0.0,
                                bool with_providers = true,
                                bool with_corrective = true);

// Canonical request encodings shared by the record and replay paths.
nlohmann::json canonical_vision_request(const PromptBundle& bundle, const Image* image);
nlohmann::json canonical_text_request(const PromptBundle& bundle);
nlohmann::json canonical_segment_request(const Image& image, const std::vector<std::string>& labels);
nlohmann::json canonical_remove_request(const Image& image, const Mask& mask);
nlohmann::json canonical_embed_request(const Image& image);
nlohmann::json canonical_score_request(const Image& a, const Image& b);

nlohmann::json segment_result_to_json(const SegmentResult& result);
SegmentResult segment_result_from_json(const nlohmann::json& j, int width, int height);

} // namespace reorm
