#pragma once

#include "reorm/backends.hpp"
#include "reorm/error.hpp"
#include "reorm/oracle.hpp"
#include "reorm/prompts.hpp"
#include "reorm/raster.hpp"
#include "reorm/util.hpp"

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>

namespace reorm::test {

// Unique scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "reorm") {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                (tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string str() const { return path_.string(); }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline PromptLibrary& prompt_library() {
    static PromptLibrary lib;
    return lib;
}

// person + shadow: the canonical lighting-dependent pair, plus an
// unrelated bystander.
inline SceneGraph person_shadow_scene() {
    SceneGraph s;
    s.width = 96;
    s.height = 64;
    s.objects = {
        {0, "person", ShapeKind::rectangle, {40, 80, 200}, 10, 8, 14, 20},
        {1, "person's shadow", ShapeKind::ellipse, {128, 128, 128}, 12, 36, 20, 10},
        {2, "red triangle", ShapeKind::triangle, {200, 40, 40}, 64, 36, 20, 16},
    };
    s.edges = {{0, 1, EdgeKind::lighting_dependent}};
    return s;
}

// person holding a watering can (physically connected).
inline SceneGraph person_can_scene() {
    SceneGraph s;
    s.width = 96;
    s.height = 64;
    s.objects = {
        {0, "person", ShapeKind::rectangle, {40, 80, 200}, 8, 8, 14, 22},
        {1, "watering can", ShapeKind::ellipse, {230, 130, 30}, 30, 16, 12, 10},
        {2, "green rectangle", ShapeKind::rectangle, {40, 160, 60}, 64, 40, 18, 12},
    };
    s.edges = {{0, 1, EdgeKind::physically_connected}};
    return s;
}

inline Image random_image(int w, int h, std::uint64_t seed, int lo = 0, int hi = 255) {
    std::mt19937_64 rng(seed);
    Image img(w, h);
    for (auto& v : img.data())
        v = std::uint8_t(lo + bounded_uniform(rng, std::uint64_t(hi - lo + 1)));
    return img;
}

inline Mask random_mask(int w, int h, std::uint64_t seed, double density = 0.3) {
    std::mt19937_64 rng(seed);
    Mask m(w, h);
    for (auto& v : m.data()) v = uniform_real(rng) < density ? 1 : 0;
    return m;
}

// Hook-based backends for tests that need exact control over responses.
struct ScriptedVision : VisionReasoner {
    std::function<std::string(const PromptBundle&, const Image*)> fn;
    Locality loc = Locality::remote;
    std::string reason(const PromptBundle& b, const Image* img) override { return fn(b, img); }
    Locality locality() const override { return loc; }
};

struct ScriptedText : TextReasoner {
    std::function<std::string(const PromptBundle&)> fn;
    Locality loc = Locality::remote;
    std::string reason(const PromptBundle& b) override { return fn(b); }
    Locality locality() const override { return loc; }
};

struct ScriptedSegmenter : Segmenter {
    std::function<SegmentResult(const Image&, const std::vector<std::string>&)> fn;
    Locality loc = Locality::local;
    SegmentResult segment(const Image& img, const std::vector<std::string>& labels) override {
        return fn(img, labels);
    }
    Locality locality() const override { return loc; }
};

struct ScriptedRemover : Remover {
    std::function<Image(const Image&, const Mask&)> fn;
    Locality loc = Locality::local;
    Image remove(const Image& img, const Mask& m) override { return fn(img, m); }
    Locality locality() const override { return loc; }
};

struct ScriptedEmbedder : Embedder {
    std::function<std::vector<double>(const Image&)> fn;
    Locality loc = Locality::local;
    std::vector<double> embed(const Image& img) override { return fn(img); }
    Locality locality() const override { return loc; }
};

struct ScriptedScorer : PairScorer {
    std::function<double(const Image&, const Image&)> fn;
    Locality loc = Locality::local;
    double score_pair(const Image& a, const Image& b) override { return fn(a, b); }
    Locality locality() const override { return loc; }
};

// Segmenter stub mapping each label to one full-confidence mask.
inline std::shared_ptr<ScriptedSegmenter>
table_segmenter(std::map<std::string, Mask> masks, double score = 0.9) {
    auto seg = std::make_shared<ScriptedSegmenter>();
    seg->fn = [masks = std::move(masks), score](const Image& img,
                                                const std::vector<std::string>& labels) {
        SegmentResult out;
        for (const auto& label : labels) {
            std::vector<SegmentInstance> instances;
            auto it = masks.find(label);
            if (it != masks.end()) {
                if (it->second.width() != img.width() || it->second.height() != img.height())
                    raise(Errc::dimension_mismatch, "table_segmenter: mask size");
                instances.push_back({it->second, score});
            }
            out.by_label[label] = std::move(instances);
        }
        return out;
    };
    return seg;
}

inline Mask full_mask(int w, int h) {
    Mask m(w, h);
    for (auto& v : m.data()) v = 1;
    return m;
}

} // namespace reorm::test
