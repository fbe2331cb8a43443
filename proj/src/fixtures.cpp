#include "reorm/fixtures.hpp"

#include "reorm/error.hpp"
#include "reorm/png_io.hpp"
#include "reorm/util.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>

namespace reorm {

const char* locality_name(Locality l) {
    return l == Locality::remote ? "remote" : "local";
}

Locality locality_from_name(const std::string& name) {
    if (name == "remote") return Locality::remote;
    if (name == "local") return Locality::local;
    raise(Errc::config_error, "unknown locality: " + name);
}

FixtureStore::FixtureStore(std::string path, FixtureMode mode)
    : path_(std::move(path)), mode_(mode) {
    std::ifstream in(path_);
    if (!in) {
        if (mode_ == FixtureMode::replay)
            raise(Errc::io_error, "fixture file not found: " + path_);
        // record mode starts an empty store; the file exists from now on
        std::ofstream touch(path_, std::ios::app);
        if (!touch) raise(Errc::io_error, "cannot create fixture file: " + path_);
        return;
    }
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded())
            raise(Errc::format_error,
                  path_ + ":" + std::to_string(lineno) + ": invalid fixture JSON");
        FixtureEntry e;
        try {
            e.key_hash = j.at("key_hash").get<std::string>();
            e.kind = j.at("kind").get<std::string>();
            e.locality = locality_from_name(j.at("locality").get<std::string>());
            e.elapsed_s = j.at("elapsed_s").get<double>();
            e.response = j.at("response");
        } catch (const nlohmann::json::exception& ex) {
            raise(Errc::format_error,
                  path_ + ":" + std::to_string(lineno) + ": " + ex.what());
        }
        kind_locality_.emplace(e.kind, e.locality);
        entries_.emplace(e.key_hash, std::move(e));
    }
}

std::size_t FixtureStore::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

std::optional<FixtureEntry> FixtureStore::lookup(const std::string& key_hash) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(key_hash);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

bool FixtureStore::record(const FixtureEntry& entry) {
    if (mode_ != FixtureMode::record)
        raise(Errc::invalid_argument, "fixture store is read-only in replay mode");
    std::lock_guard lock(mu_);
    if (entries_.count(entry.key_hash)) return false;
    entries_.emplace(entry.key_hash, entry);
    kind_locality_.emplace(entry.kind, entry.locality);
    nlohmann::json j{{"key_hash", entry.key_hash},
                     {"kind", entry.kind},
                     {"locality", locality_name(entry.locality)},
                     {"elapsed_s", entry.elapsed_s},
                     {"response", entry.response}};
    std::ofstream out(path_, std::ios::app);
    if (!out) raise(Errc::io_error, "cannot append to fixture file: " + path_);
    out << j.dump() << "\n";
    return true;
}

Locality FixtureStore::kind_locality(const std::string& kind) const {
    std::lock_guard lock(mu_);
    auto it = kind_locality_.find(kind);
    return it == kind_locality_.end() ? Locality::local : it->second;
}

std::string FixtureStore::hash_key(const std::string& kind, const nlohmann::json& request) {
    // nlohmann objects keep keys sorted, so dump() is canonical
    return sha256_hex(kind + "\n" + request.dump());
}

nlohmann::json canonical_vision_request(const PromptBundle& bundle, const Image* image) {
    nlohmann::json j{{"system", bundle.system_text}, {"user", bundle.user_text}};
    j["image"] = image ? nlohmann::json(image->digest()) : nlohmann::json(nullptr);
    return j;
}

nlohmann::json canonical_text_request(const PromptBundle& bundle) {
    return {{"system", bundle.system_text}, {"user", bundle.user_text}};
}

nlohmann::json canonical_segment_request(const Image& image,
                                         const std::vector<std::string>& labels) {
    return {{"image", image.digest()}, {"labels", labels}};
}

nlohmann::json canonical_remove_request(const Image& image, const Mask& mask) {
    return {{"image", image.digest()}, {"mask", mask.digest()}};
}

nlohmann::json canonical_embed_request(const Image& image) {
    return {{"image", image.digest()}};
}

nlohmann::json canonical_score_request(const Image& a, const Image& b) {
    return {{"image_a", a.digest()}, {"image_b", b.digest()}};
}

nlohmann::json segment_result_to_json(const SegmentResult& result) {
    nlohmann::json labels = nlohmann::json::object();
    for (const auto& [label, instances] : result.by_label) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& inst : instances) {
            arr.push_back({{"mask_b64", base64_encode(encode_png(inst.mask))},
                           {"score", inst.score}});
        }
        labels[label] = std::move(arr);
    }
    return {{"results", std::move(labels)}};
}

SegmentResult segment_result_from_json(const nlohmann::json& j, int width, int height) {
    SegmentResult out;
    const auto& results = j.at("results");
    for (auto it = results.begin(); it != results.end(); ++it) {
        std::vector<SegmentInstance> instances;
        for (const auto& inst : it.value()) {
            Mask m = decode_mask_png(base64_decode(inst.at("mask_b64").get<std::string>()));
            if (m.width() != width || m.height() != height)
                raise(Errc::dimension_mismatch,
                      "segment result mask does not match image dimensions");
            double score = inst.at("score").get<double>();
            if (score < 0.0 || score > 1.0)
                raise(Errc::format_error, "segment score outside [0,1]");
            instances.push_back({std::move(m), score});
        }
        out.by_label[it.key()] = std::move(instances);
    }
    return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// Runs `fn`, persists its JSON-encoded response, and passes the recorded
// payload through unchanged.
template <typename Fn>
nlohmann::json record_call(FixtureStore& store, const std::string& kind, Locality locality,
                           const nlohmann::json& request, Fn&& fn) {
    auto start = Clock::now();
    nlohmann::json response = fn();
    FixtureEntry e;
    e.key_hash = FixtureStore::hash_key(kind, request);
    e.kind = kind;
    e.locality = locality;
    e.elapsed_s = seconds_since(start);
    e.response = response;
    store.record(e);
    return response;
}

nlohmann::json replay_call(const FixtureStore& store, const std::string& kind,
                           const nlohmann::json& request, double latency_scale) {
    std::string key = FixtureStore::hash_key(kind, request);
    auto entry = store.lookup(key);
    if (!entry)
        raise(Errc::missing_fixture, "no recorded fixture for " + kind + " request " + key);
    if (latency_scale > 0.0 && entry->elapsed_s > 0.0) {
        std::this_thread::sleep_for(
            std::chrono::duration<double>(entry->elapsed_s * latency_scale));
    }
    return entry->response;
}

class RecordingVisionReasoner : public VisionReasoner {
public:
    RecordingVisionReasoner(std::shared_ptr<VisionReasoner> inner,
                            std::shared_ptr<FixtureStore> store)
        : inner_(std::move(inner)), store_(std::move(store)) {}

    std::string reason(const PromptBundle& bundle, const Image* image) override {
        auto req = canonical_vision_request(bundle, image);
        auto resp = record_call(*store_, "vision_reason", locality(), req, [&] {
            return nlohmann::json{{"text", inner_->reason(bundle, image)}};
        });
        return resp.at("text").get<std::string>();
    }
    Locality locality() const override { return inner_->locality(); }

private:
    std::shared_ptr<VisionReasoner> inner_;
    std::shared_ptr<FixtureStore> store_;
};

class RecordingTextReasoner : public TextReasoner {
public:
    RecordingTextReasoner(std::shared_ptr<TextReasoner> inner,
                          std::shared_ptr<FixtureStore> store)
        : inner_(std::move(inner)), store_(std::move(store)) {}

    std::string reason(const PromptBundle& bundle) override {
        auto req = canonical_text_request(bundle);
        auto resp = record_call(*store_, "text_reason", locality(), req, [&] {
            return nlohmann::json{{"text", inner_->reason(bundle)}};
        });
        return resp.at("text").get<std::string>();
    }
    Locality locality() const override { return inner_->locality(); }

private:
    std::shared_ptr<TextReasoner> inner_;
    std::shared_ptr<FixtureStore> store_;
};

class RecordingSegmenter : public Segmenter {
public:
    RecordingSegmenter(std::shared_ptr<Segmenter> inner, std::shared_ptr<FixtureStore> store)
        : inner_(std::move(inner)), store_(std::move(store)) {}

    SegmentResult segment(const Image& image, const std::vector<std::string>& labels) override {
        auto req = canonical_segment_request(image, labels);
        auto resp = record_call(*store_, "segment", locality(), req, [&] {
            return segment_result_to_json(inner_->segment(image, labels));
        });
        return segment_result_from_json(resp, image.width(), image.height());
    }
    Locality locality() const override { return inner_->locality(); }

private:
    std::shared_ptr<Segmenter> inner_;
    std::shared_ptr<FixtureStore> store_;
};

class RecordingRemover : public Remover {
public:
    RecordingRemover(std::shared_ptr<Remover> inner, std::shared_ptr<FixtureStore> store,
                     std::string kind)
        : inner_(std::move(inner)), store_(std::move(store)), kind_(std::move(kind)) {}

    Image remove(const Image& image, const Mask& mask) override {
        auto req = canonical_remove_request(image, mask);
        auto resp = record_call(*store_, kind_, locality(), req, [&] {
            return nlohmann::json{
                {"image_b64", base64_encode(encode_png(inner_->remove(image, mask)))}};
        });
        return decode_image_png(base64_decode(resp.at("image_b64").get<std::string>()));
    }
    Locality locality() const override { return inner_->locality(); }

private:
    std::shared_ptr<Remover> inner_;
    std::shared_ptr<FixtureStore> store_;
    std::string kind_;
};

class RecordingEmbedder : public Embedder {
public:
    RecordingEmbedder(std::shared_ptr<Embedder> inner, std::shared_ptr<FixtureStore> store)
        : inner_(std::move(inner)), store_(std::move(store)) {}

    std::vector<double> embed(const Image& image) override {
        auto req = canonical_embed_request(image);
        auto resp = record_call(*store_, "embed", locality(), req, [&] {
            return nlohmann::json{{"vector", inner_->embed(image)}};
        });
        return resp.at("vector").get<std::vector<double>>();
    }
    Locality locality() const override { return inner_->locality(); }

private:
    std::shared_ptr<Embedder> inner_;
    std::shared_ptr<FixtureStore> store_;
};

class RecordingScorer : public PairScorer {
public:
    RecordingScorer(std::shared_ptr<PairScorer> inner, std::shared_ptr<FixtureStore> store)
        : inner_(std::move(inner)), store_(std::move(store)) {}

    double score_pair(const Image& a, const Image& b) override {
        auto req = canonical_score_request(a, b);
        auto resp = record_call(*store_, "score_pair", locality(), req, [&] {
            return nlohmann::json{{"score", inner_->score_pair(a, b)}};
        });
        return resp.at("score").get<double>();
    }
    Locality locality() const override { return inner_->locality(); }

private:
    std::shared_ptr<PairScorer> inner_;
    std::shared_ptr<FixtureStore> store_;
};

class ReplayVisionReasoner : public VisionReasoner {
public:
    ReplayVisionReasoner(std::shared_ptr<FixtureStore> store, double scale)
        : store_(std::move(store)), scale_(scale) {}

    std::string reason(const PromptBundle& bundle, const Image* image) override {
        auto resp = replay_call(*store_, "vision_reason",
                                canonical_vision_request(bundle, image), scale_);
        return resp.at("text").get<std::string>();
    }
    Locality locality() const override { return store_->kind_locality("vision_reason"); }

private:
    std::shared_ptr<FixtureStore> store_;
    double scale_;
};

class ReplayTextReasoner : public TextReasoner {
public:
    ReplayTextReasoner(std::shared_ptr<FixtureStore> store, double scale)
        : store_(std::move(store)), scale_(scale) {}

    std::string reason(const PromptBundle& bundle) override {
        auto resp = replay_call(*store_, "text_reason", canonical_text_request(bundle), scale_);
        return resp.at("text").get<std::string>();
    }
    Locality locality() const override { return store_->kind_locality("text_reason"); }

private:
    std::shared_ptr<FixtureStore> store_;
    double scale_;
};

class ReplaySegmenter : public Segmenter {
public:
    ReplaySegmenter(std::shared_ptr<FixtureStore> store, double scale)
        : store_(std::move(store)), scale_(scale) {}

    SegmentResult segment(const Image& image, const std::vector<std::string>& labels) override {
        auto resp = replay_call(*store_, "segment",
                                canonical_segment_request(image, labels), scale_);
        return segment_result_from_json(resp, image.width(), image.height());
    }
    Locality locality() const override { return store_->kind_locality("segment"); }

private:
    std::shared_ptr<FixtureStore> store_;
    double scale_;
};

class ReplayRemover : public Remover {
public:
    ReplayRemover(std::shared_ptr<FixtureStore> store, double scale, std::string kind)
        : store_(std::move(store)), scale_(scale), kind_(std::move(kind)) {}

    Image remove(const Image& image, const Mask& mask) override {
        auto resp = replay_call(*store_, kind_, canonical_remove_request(image, mask), scale_);
        return decode_image_png(base64_decode(resp.at("image_b64").get<std::string>()));
    }
    Locality locality() const override { return store_->kind_locality(kind_); }

private:
    std::shared_ptr<FixtureStore> store_;
    double scale_;
    std::string kind_;
};

class ReplayEmbedder : public Embedder {
public:
    ReplayEmbedder(std::shared_ptr<FixtureStore> store, double scale)
        : store_(std::move(store)), scale_(scale) {}

    std::vector<double> embed(const Image& image) override {
        auto resp = replay_call(*store_, "embed", canonical_embed_request(image), scale_);
        return resp.at("vector").get<std::vector<double>>();
    }
    Locality locality() const override { return store_->kind_locality("embed"); }

private:
    std::shared_ptr<FixtureStore> store_;
    double scale_;
};

class ReplayScorer : public PairScorer {
public:
    ReplayScorer(std::shared_ptr<FixtureStore> store, double scale)
        : store_(std::move(store)), scale_(scale) {}

    double score_pair(const Image& a, const Image& b) override {
        auto resp = replay_call(*store_, "score_pair", canonical_score_request(a, b), scale_);
        return resp.at("score").get<double>();
    }
    Locality locality() const override { return store_->kind_locality("score_pair"); }

private:
    std::shared_ptr<FixtureStore> store_;
    double scale_;
};

} // namespace

BackendSet wrap_recording(const BackendSet& live, std::shared_ptr<FixtureStore> store) {
    BackendSet out;
    if (live.vision_reasoner)
        out.vision_reasoner = std::make_shared<RecordingVisionReasoner>(live.vision_reasoner, store);
    if (live.text_reasoner)
        out.text_reasoner = std::make_shared<RecordingTextReasoner>(live.text_reasoner, store);
    if (live.segmenter)
        out.segmenter = std::make_shared<RecordingSegmenter>(live.segmenter, store);
    if (live.remover)
        out.remover = std::make_shared<RecordingRemover>(live.remover, store, "remove");
    if (live.corrective_remover)
        out.corrective_remover =
            std::make_shared<RecordingRemover>(live.corrective_remover, store, "remove_corrective");
    if (live.embedder)
        out.embedder = std::make_shared<RecordingEmbedder>(live.embedder, store);
    if (live.scorer)
        out.scorer = std::make_shared<RecordingScorer>(live.scorer, store);
    return out;
}

BackendSet make_replay_backends(std::shared_ptr<FixtureStore> store, double replay_latency_scale,
                                bool with_providers, bool with_corrective) {
    BackendSet out;
    out.vision_reasoner = std::make_shared<ReplayVisionReasoner>(store, replay_latency_scale);
    out.text_reasoner = std::make_shared<ReplayTextReasoner>(store, replay_latency_scale);
    out.segmenter = std::make_shared<ReplaySegmenter>(store, replay_latency_scale);
    out.remover = std::make_shared<ReplayRemover>(store, replay_latency_scale, "remove");
    if (with_corrective)
        out.corrective_remover =
            std::make_shared<ReplayRemover>(store, replay_latency_scale, "remove_corrective");
    if (with_providers) {
        out.embedder = std::make_shared<ReplayEmbedder>(store, replay_latency_scale);
        out.scorer = std::make_shared<ReplayScorer>(store, replay_latency_scale);
    }
    return out;
}

} // namespace reorm
