#pragma once

#include "reorm/prompts.hpp"
#include "reorm/raster.hpp"

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace reorm {

// Where a backend's work happens. Drives the remote/local runtime split
// in run records and benchmark reports.
enum class Locality { local, remote };

const char* locality_name(Locality l);
Locality locality_from_name(const std::string& name);

struct SegmentInstance {
    Mask mask;
    double score = 0.0; // confidence in [0,1]
};

// Per-label instances. A label with zero instances was not found.
struct SegmentResult {
    std::map<std::string, std::vector<SegmentInstance>> by_label;
};

class VisionReasoner {
public:
    virtual ~VisionReasoner() = default;
    // image must be non-null iff bundle.attach_image is set.
    virtual std::string reason(const PromptBundle& bundle, const Image* image) = 0;
    virtual Locality locality() const = 0;
};

class TextReasoner {
public:
    virtual ~TextReasoner() = default;
    virtual std::string reason(const PromptBundle& bundle) = 0;
    virtual Locality locality() const = 0;
};

class Segmenter {
public:
    virtual ~Segmenter() = default;
    virtual SegmentResult segment(const Image& image, const std::vector<std::string>& labels) = 0;
    virtual Locality locality() const = 0;
};

class Remover {
public:
    virtual ~Remover() = default;
    virtual Image remove(const Image& image, const Mask& mask) = 0;
    virtual Locality locality() const = 0;
};

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::vector<double> embed(const Image& image) = 0;
    virtual Locality locality() const = 0;
};

class PairScorer {
public:
    virtual ~PairScorer() = default;
    virtual double score_pair(const Image& a, const Image& b) = 0;
    virtual Locality locality() const = 0;
};

// All model capabilities a pipeline run consumes. Handles are shareable
// across concurrent runs. In cloud mode vision and text reasoner may be
// the same endpoint; the corrective remover falls back to the primary
// remover when absent. embedder/scorer are optional metric providers.
struct BackendSet {
    std::shared_ptr<VisionReasoner> vision_reasoner;
    std::shared_ptr<TextReasoner> text_reasoner;
    std::shared_ptr<Segmenter> segmenter;
    std::shared_ptr<Remover> remover;
    std::shared_ptr<Remover> corrective_remover;
    std::shared_ptr<Embedder> embedder;
    std::shared_ptr<PairScorer> scorer;

    Remover& corrective_or_primary() const {
        return corrective_remover ? *corrective_remover : *remover;
    }
};

} // namespace reorm
