#include "reorm/oracle.hpp"

#include "reorm/error.hpp"
#include "reorm/util.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>

namespace reorm {

const char* edge_kind_name(EdgeKind k) {
    switch (k) {
    case EdgeKind::lighting_dependent: return "lighting_dependent";
    case EdgeKind::physically_connected: return "physically_connected";
    case EdgeKind::target_produced: return "target_produced";
    case EdgeKind::contextually_linked: return "contextually_linked";
    }
    return "unknown";
}

EdgeKind edge_kind_from_name(const std::string& name) {
    if (name == "lighting_dependent") return EdgeKind::lighting_dependent;
    if (name == "physically_connected") return EdgeKind::physically_connected;
    if (name == "target_produced") return EdgeKind::target_produced;
    if (name == "contextually_linked") return EdgeKind::contextually_linked;
    raise(Errc::config_error, "unknown interaction kind: " + name);
}

namespace {

const char* shape_name(ShapeKind s) {
    switch (s) {
    case ShapeKind::rectangle: return "rectangle";
    case ShapeKind::ellipse: return "ellipse";
    case ShapeKind::triangle: return "triangle";
    }
    return "unknown";
}

ShapeKind shape_from_name(const std::string& name) {
    if (name == "rectangle") return ShapeKind::rectangle;
    if (name == "ellipse") return ShapeKind::ellipse;
    if (name == "triangle") return ShapeKind::triangle;
    raise(Errc::config_error, "unknown shape: " + name);
}

struct NamedColor {
    const char* name;
    Rgb rgb;
};

// Saturated palette, all distinct from the default background.
constexpr NamedColor kPalette[] = {
    {"red", {200, 40, 40}},     {"green", {40, 160, 60}},   {"blue", {40, 80, 200}},
    {"yellow", {220, 200, 40}}, {"purple", {140, 60, 180}}, {"orange", {230, 130, 30}},
    {"teal", {30, 150, 150}},   {"pink", {230, 120, 170}},  {"brown", {130, 90, 50}},
    {"navy", {25, 35, 110}},    {"olive", {120, 130, 40}},  {"maroon", {120, 30, 50}},
};

constexpr Rgb kShadowGray{128, 128, 128};

// Integer inside-tests keep rendering bit-deterministic across platforms.
bool inside_shape(const SceneObject& o, int px, int py) {
    if (px < o.x || px >= o.x + o.w || py < o.y || py >= o.y + o.h) return false;
    int lx = px - o.x, ly = py - o.y;
    switch (o.shape) {
    case ShapeKind::rectangle:
        return true;
    case ShapeKind::ellipse: {
        std::int64_t dx = 2 * lx - (o.w - 1);
        std::int64_t dy = 2 * ly - (o.h - 1);
        return dx * dx * std::int64_t(o.h) * o.h + dy * dy * std::int64_t(o.w) * o.w <=
               std::int64_t(o.w) * o.w * o.h * o.h;
    }
    case ShapeKind::triangle: {
        // isoceles; apex at top center, full-width base at the bottom row
        std::int64_t dx = std::abs(2 * lx - (o.w - 1));
        return dx * o.h <= std::int64_t(ly + 1) * o.w;
    }
    }
    return false;
}

void paint(Image& img, const SceneObject& o) {
    int x1 = std::min(img.width(), o.x + o.w), y1 = std::min(img.height(), o.y + o.h);
    for (int y = std::max(0, o.y); y < y1; ++y) {
        for (int x = std::max(0, o.x); x < x1; ++x) {
            if (!inside_shape(o, x, y)) continue;
            std::uint8_t* p = img.pixel(x, y);
            p[0] = o.color.r;
            p[1] = o.color.g;
            p[2] = o.color.b;
        }
    }
}

std::string normalize_name_key(const std::string& name) {
    std::string key = to_lower(collapse_whitespace(trim(name)));
    for (const char* article : {"the ", "a ", "an "}) {
        if (key.rfind(article, 0) == 0) {
            key = key.substr(std::string(article).size());
            break;
        }
    }
    return trim(key);
}

} // namespace

const SceneObject* SceneGraph::find_object(int id) const {
    for (const auto& o : objects)
        if (o.id == id) return &o;
    return nullptr;
}

const SceneObject* SceneGraph::find_object_by_name(const std::string& name) const {
    std::string key = normalize_name_key(name);
    for (const auto& o : objects)
        if (normalize_name_key(o.name) == key) return &o;
    return nullptr;
}

nlohmann::json SceneGraph::to_json() const {
    nlohmann::json objs = nlohmann::json::array();
    for (const auto& o : objects) {
        objs.push_back({{"id", o.id},
                        {"name", o.name},
                        {"shape", shape_name(o.shape)},
                        {"color", {o.color.r, o.color.g, o.color.b}},
                        {"x", o.x},
                        {"y", o.y},
                        {"w", o.w},
                        {"h", o.h}});
    }
    nlohmann::json eds = nlohmann::json::array();
    for (const auto& e : edges)
        eds.push_back({{"from", e.from}, {"to", e.to}, {"kind", edge_kind_name(e.kind)}});
    return {{"canvas",
             {{"width", width},
              {"height", height},
              {"background", {background.r, background.g, background.b}}}},
            {"objects", std::move(objs)},
            {"edges", std::move(eds)}};
}

SceneGraph SceneGraph::from_json(const nlohmann::json& j) {
    SceneGraph s;
    try {
        const auto& canvas = j.at("canvas");
        s.width = canvas.at("width").get<int>();
        s.height = canvas.at("height").get<int>();
        auto bg = canvas.at("background");
        s.background = {bg.at(0).get<std::uint8_t>(), bg.at(1).get<std::uint8_t>(),
                        bg.at(2).get<std::uint8_t>()};
        for (const auto& jo : j.at("objects")) {
            SceneObject o;
            o.id = jo.at("id").get<int>();
            o.name = jo.at("name").get<std::string>();
            o.shape = shape_from_name(jo.at("shape").get<std::string>());
            auto c = jo.at("color");
            o.color = {c.at(0).get<std::uint8_t>(), c.at(1).get<std::uint8_t>(),
                       c.at(2).get<std::uint8_t>()};
            o.x = jo.at("x").get<int>();
            o.y = jo.at("y").get<int>();
            o.w = jo.at("w").get<int>();
            o.h = jo.at("h").get<int>();
            s.objects.push_back(std::move(o));
        }
        for (const auto& je : j.at("edges")) {
            s.edges.push_back({je.at("from").get<int>(), je.at("to").get<int>(),
                               edge_kind_from_name(je.at("kind").get<std::string>())});
        }
    } catch (const nlohmann::json::exception& ex) {
        raise(Errc::format_error, std::string("scene json: ") + ex.what());
    }
    // structural invariants
    std::set<int> ids;
    for (const auto& o : s.objects) {
        if (!ids.insert(o.id).second)
            raise(Errc::format_error, "scene json: duplicate object id");
    }
    for (const auto& e : s.edges) {
        if (!ids.count(e.from) || !ids.count(e.to))
            raise(Errc::format_error, "scene json: edge endpoint does not exist");
    }
    return s;
}

SceneGraph gen_scene(std::uint64_t seed, int n_objects, double edge_density, int canvas_width,
                     int canvas_height) {
    if (n_objects < 1) raise(Errc::invalid_argument, "gen_scene: need at least one object");
    if (edge_density < 0.0 || edge_density > 1.0)
        raise(Errc::invalid_argument, "gen_scene: edge_density must be in [0,1]");

    std::mt19937_64 rng(seed);
    SceneGraph scene;
    scene.width = canvas_width;
    scene.height = canvas_height;

    int cols = int(std::ceil(std::sqrt(double(n_objects))));
    int rows = (n_objects + cols - 1) / cols;
    int cell_w = canvas_width / cols, cell_h = canvas_height / rows;
    if (cell_w < 8 || cell_h < 8)
        raise(Errc::invalid_argument, "gen_scene: canvas too small for object count");

    for (int i = 0; i < n_objects; ++i) {
        SceneObject o;
        o.id = i;
        o.shape = ShapeKind(bounded_uniform(rng, 3));
        o.color = kPalette[bounded_uniform(rng, std::size(kPalette))].rgb;
        int cx = (i % cols) * cell_w, cy = (i / cols) * cell_h;
        // margin of 2 px keeps footprints strictly disjoint
        int max_w = cell_w - 4, max_h = cell_h - 4;
        o.w = 4 + int(bounded_uniform(rng, std::uint64_t(max_w - 4 + 1)));
        o.h = 4 + int(bounded_uniform(rng, std::uint64_t(max_h - 4 + 1)));
        o.x = cx + 2 + int(bounded_uniform(rng, std::uint64_t(max_w - o.w + 1)));
        o.y = cy + 2 + int(bounded_uniform(rng, std::uint64_t(max_h - o.h + 1)));
        scene.objects.push_back(o);
    }

    // Random topological order over which pair edges are drawn. The DAG
    // property holds because edges only point forward in this order.
    std::vector<int> order(n_objects);
    for (int i = 0; i < n_objects; ++i) order[i] = i;
    for (int i = n_objects - 1; i > 0; --i) {
        int j = int(bounded_uniform(rng, std::uint64_t(i + 1)));
        std::swap(order[i], order[j]);
    }
    for (int a = 0; a < n_objects; ++a) {
        for (int b = a + 1; b < n_objects; ++b) {
            double draw = uniform_real(rng);
            EdgeKind kind = EdgeKind(bounded_uniform(rng, 4));
            if (draw < edge_density)
                scene.edges.push_back({order[a], order[b], kind});
        }
    }

    // Lighting-dependent elements read as shadows: gray ellipses.
    for (const auto& e : scene.edges) {
        if (e.kind != EdgeKind::lighting_dependent) continue;
        for (auto& o : scene.objects) {
            if (o.id == e.to) {
                o.shape = ShapeKind::ellipse;
                o.color = kShadowGray;
            }
        }
    }

    // Names from appearance, deduplicated with a numeric suffix.
    std::map<std::string, int> counts;
    for (auto& o : scene.objects) {
        std::string color_name = "gray";
        for (const auto& c : kPalette) {
            if (c.rgb == o.color) color_name = c.name;
        }
        std::string base = color_name + std::string(" ") + shape_name(o.shape);
        int n = ++counts[base];
        o.name = n == 1 ? base : base + " " + std::to_string(n);
    }
    return scene;
}

std::set<int> closure(const SceneGraph& scene, const std::set<int>& targets) {
    for (int t : targets) {
        if (!scene.find_object(t))
            raise(Errc::invalid_argument, "closure: unknown object id " + std::to_string(t));
    }
    std::map<int, std::vector<int>> adj;
    for (const auto& e : scene.edges) adj[e.from].push_back(e.to);

    std::set<int> out(targets);
    std::deque<int> frontier(targets.begin(), targets.end());
    while (!frontier.empty()) {
        int u = frontier.front();
        frontier.pop_front();
        auto it = adj.find(u);
        if (it == adj.end()) continue;
        for (int v : it->second) {
            if (out.insert(v).second) frontier.push_back(v);
        }
    }
    return out;
}

Image render(const SceneGraph& scene, const std::set<int>& removed) {
    for (int id : removed) {
        if (!scene.find_object(id))
            raise(Errc::invalid_argument, "render: unknown object id " + std::to_string(id));
    }
    Image img(scene.width, scene.height);
    img.fill(scene.background.r, scene.background.g, scene.background.b);
    for (const auto& o : scene.objects) {
        if (removed.count(o.id)) continue;
        paint(img, o);
    }
    return img;
}

Mask object_footprint(const SceneGraph& scene, int id) {
    const SceneObject* o = scene.find_object(id);
    if (!o) raise(Errc::invalid_argument, "footprint: unknown object id " + std::to_string(id));
    Mask m(scene.width, scene.height);
    int x1 = std::min(scene.width, o->x + o->w), y1 = std::min(scene.height, o->y + o->h);
    for (int y = std::max(0, o->y); y < y1; ++y) {
        for (int x = std::max(0, o->x); x < x1; ++x) {
            if (inside_shape(*o, x, y)) m.set(x, y, 1);
        }
    }
    return m;
}

std::set<int> detect_present(const SceneGraph& scene, const Image& image) {
    if (image.width() != scene.width || image.height() != scene.height)
        raise(Errc::dimension_mismatch, "detect_present: image does not match scene canvas");
    std::set<int> present;
    for (const auto& o : scene.objects) {
        std::size_t total = 0, match = 0;
        int x1 = std::min(scene.width, o.x + o.w), y1 = std::min(scene.height, o.y + o.h);
        for (int y = std::max(0, o.y); y < y1; ++y) {
            for (int x = std::max(0, o.x); x < x1; ++x) {
                if (!inside_shape(o, x, y)) continue;
                ++total;
                const std::uint8_t* p = image.pixel(x, y);
                if (p[0] == o.color.r && p[1] == o.color.g && p[2] == o.color.b) ++match;
            }
        }
        if (total > 0 && match * 2 > total) present.insert(o.id);
    }
    return present;
}

std::vector<int> match_names(const SceneGraph& scene, const std::string& text) {
    std::string hay = to_lower(text);
    std::vector<const SceneObject*> hits;
    for (const auto& o : scene.objects) {
        if (hay.find(to_lower(o.name)) != std::string::npos) hits.push_back(&o);
    }
    // keep only maximal names: drop a hit whose name is a substring of
    // another hit's name ("red rectangle" loses to "red rectangle 2")
    std::vector<int> out;
    for (const auto* a : hits) {
        bool shadowed = false;
        for (const auto* b : hits) {
            if (a == b) continue;
            std::string an = to_lower(a->name), bn = to_lower(b->name);
            if (an != bn && bn.find(an) != std::string::npos) shadowed = true;
        }
        if (!shadowed) out.push_back(a->id);
    }
    return out;
}

namespace {

// Ground-truth reasoner covering all prompt roles. Dispatch is by exact
// system-text identity against the loaded assets.
class OracleReasoner : public VisionReasoner, public TextReasoner {
public:
    OracleReasoner(const SceneGraph& scene, const PromptLibrary& prompts, OracleOptions options)
        : scene_(scene), prompts_(prompts), options_(std::move(options)) {}

    std::string reason(const PromptBundle& bundle, const Image* image) override {
        const std::string& sys = bundle.system_text;
        if (sys == prompts_.analyzer_text()) return answer_analyzer(bundle.user_text);
        if (sys == prompts_.simulator_text()) return answer_simulator(bundle.user_text, image);
        if (sys == prompts_.examiner_text()) return answer_examiner(bundle.user_text, image);
        if (sys == prompts_.chain_text(ChainStep::identify_target))
            return answer_identify(bundle.user_text);
        if (sys == prompts_.chain_text(ChainStep::enumerate_elements))
            return answer_enumerate(bundle.user_text);
        if (sys == prompts_.chain_text(ChainStep::reason_consistency))
            return answer_consistency(bundle.user_text);
        if (sys == prompts_.chain_text(ChainStep::consolidate_list))
            return answer_consolidate(bundle.user_text);
        raise(Errc::invalid_argument, "oracle reasoner: unrecognized prompt");
    }

    std::string reason(const PromptBundle& bundle) override { return reason(bundle, nullptr); }

    Locality locality() const override { return Locality::local; }

private:
    std::vector<int> sorted_closure_of(const std::vector<int>& targets) const {
        std::set<int> target_set(targets.begin(), targets.end());
        std::set<int> closed = closure(scene_, target_set);
        // targets first, then dependents in id order
        std::vector<int> ordered(targets);
        for (int id : closed) {
            if (!target_set.count(id)) ordered.push_back(id);
        }
        return ordered;
    }

    std::vector<std::string> names_of(const std::vector<int>& ids) const {
        std::vector<std::string> names;
        for (int id : ids) names.push_back(scene_.find_object(id)->name);
        return names;
    }

    std::string answer_analyzer(const std::string& instruction) const {
        std::vector<int> targets = match_names(scene_, instruction);
        RemovalPlan plan;
        plan.reasoning = "The scene requires removing the named objects together with every "
                         "element that depends on them.";
        plan.labels = names_of(sorted_closure_of(targets));
        if (plan.labels.empty())
            return "Reasoning: \"No object in the scene matches the request.\"\n"
                   "Target Objects: []";
        return to_analyzer_text(plan);
    }

    std::string answer_simulator(const std::string& user, const Image* image) const {
        if (!image) raise(Errc::invalid_argument, "oracle simulator needs the original image");
        auto labels = parse_marked_list("objects:", user);
        std::set<int> removed;
        for (const auto& label : labels) {
            if (const SceneObject* o = scene_.find_object_by_name(label)) removed.insert(o->id);
        }
        std::set<int> present = detect_present(scene_, *image);
        std::vector<std::string> survivors;
        for (int id : present) {
            if (removed.count(id)) continue;
            const std::string& name = scene_.find_object(id)->name;
            bool omitted = false;
            for (const auto& skip : options_.simulator_omit) {
                if (normalize_name_key(skip) == normalize_name_key(name)) omitted = true;
            }
            if (!omitted) survivors.push_back(name);
        }
        return "The image shows a plain background containing the following objects: " +
               format_label_list(survivors) + ".";
    }

    std::string answer_examiner(const std::string& description, const Image* image) const {
        if (!image) raise(Errc::invalid_argument, "oracle examiner needs the edited image");
        auto described = parse_marked_list("objects:", description);
        std::set<std::string> described_keys;
        for (const auto& d : described) described_keys.insert(normalize_name_key(d));

        CorrectionList correction;
        for (int id : detect_present(scene_, *image)) {
            const std::string& name = scene_.find_object(id)->name;
            if (!described_keys.count(normalize_name_key(name)))
                correction.labels.push_back(name);
        }
        correction.reasoning = correction.labels.empty()
                                   ? "Every visible object is accounted for by the description."
                                   : "The image contains objects the description does not mention.";
        return to_examiner_text(correction);
    }

    std::string answer_identify(const std::string& instruction) const {
        std::vector<int> targets = match_names(scene_, instruction);
        if (targets.empty())
            return "Target: none";
        return "Target: " + scene_.find_object(targets.front())->name;
    }

    std::string answer_enumerate(const std::string& user) const {
        std::string target = extract_after(user, "target object:");
        const SceneObject* o = scene_.find_object_by_name(target);
        if (!o) return "Elements: []";
        std::vector<int> ordered = sorted_closure_of({o->id});
        ordered.erase(ordered.begin()); // drop the target itself
        return "Elements: " + format_label_list(names_of(ordered));
    }

    std::string answer_consistency(const std::string& user) const {
        auto elements = parse_marked_list("elements:", user);
        // ground truth: every enumerated dependency really must go
        return "Remove: " + format_label_list(elements);
    }

    std::string answer_consolidate(const std::string& user) const {
        std::string target = extract_after(user, "target object:");
        auto elements = parse_marked_list("remove:", user);
        RemovalPlan plan;
        plan.reasoning = "Removing the target makes the listed elements implausible.";
        plan.labels.push_back(target);
        for (const auto& e : elements) plan.labels.push_back(e);
        plan.labels = normalize_labels(plan.labels);
        return to_analyzer_text(plan);
    }

    static std::string extract_after(const std::string& text, const std::string& marker) {
        std::string hay = to_lower(text);
        std::size_t pos = hay.find(marker);
        if (pos == std::string::npos)
            raise(Errc::invalid_argument, "oracle: context lacks '" + marker + "'");
        std::size_t begin = pos + marker.size();
        std::size_t end = text.find('\n', begin);
        return trim(text.substr(begin, end == std::string::npos ? end : end - begin));
    }

    SceneGraph scene_;
    PromptLibrary prompts_;
    OracleOptions options_;
};

class OracleSegmenter : public Segmenter {
public:
    OracleSegmenter(const SceneGraph& scene, double score) : scene_(scene), score_(score) {}

    SegmentResult segment(const Image& image, const std::vector<std::string>& labels) override {
        if (labels.empty())
            raise(Errc::invalid_argument, "segment: labels must be nonempty");
        std::set<int> present = detect_present(scene_, image);
        SegmentResult out;
        for (const auto& label : labels) {
            std::vector<SegmentInstance> instances;
            const SceneObject* o = scene_.find_object_by_name(label);
            if (o && present.count(o->id))
                instances.push_back({object_footprint(scene_, o->id), score_});
            out.by_label[label] = std::move(instances);
        }
        return out;
    }

    Locality locality() const override { return Locality::local; }

private:
    SceneGraph scene_;
    double score_;
};

class OracleRemover : public Remover {
public:
    OracleRemover(const SceneGraph& scene, std::optional<int> protected_id)
        : scene_(scene), protected_id_(protected_id) {}

    Image remove(const Image& image, const Mask& mask) override {
        if (mask.width() != image.width() || mask.height() != image.height())
            raise(Errc::dimension_mismatch, "remove: mask does not match image");
        std::set<int> present = detect_present(scene_, image);
        std::set<int> removed;
        for (const auto& o : scene_.objects) {
            if (!present.count(o.id)) {
                removed.insert(o.id);
                continue;
            }
            if (protected_id_ && o.id == *protected_id_) continue;
            if (mask_subset(object_footprint(scene_, o.id), mask)) removed.insert(o.id);
        }
        return render(scene_, removed);
    }

    Locality locality() const override { return Locality::local; }

private:
    SceneGraph scene_;
    std::optional<int> protected_id_;
};

// Coarse color-layout embedding: mean RGB over an 8x8 grid. Gives the
// benchmark a deterministic cosine-similarity provider.
class OracleEmbedder : public Embedder {
public:
    explicit OracleEmbedder(int grid = 8) : grid_(grid) {}

    std::vector<double> embed(const Image& image) override {
        std::vector<double> v(std::size_t(grid_) * grid_ * 3, 0.0);
        std::vector<double> counts(std::size_t(grid_) * grid_, 0.0);
        for (int y = 0; y < image.height(); ++y) {
            int gy = y * grid_ / image.height();
            for (int x = 0; x < image.width(); ++x) {
                int gx = x * grid_ / image.width();
                std::size_t cell = std::size_t(gy) * grid_ + gx;
                const std::uint8_t* p = image.pixel(x, y);
                for (int c = 0; c < 3; ++c) v[cell * 3 + c] += p[c] / 255.0;
                counts[cell] += 1.0;
            }
        }
        for (std::size_t cell = 0; cell < counts.size(); ++cell) {
            if (counts[cell] > 0)
                for (int c = 0; c < 3; ++c) v[cell * 3 + c] /= counts[cell];
        }
        return v;
    }

    Locality locality() const override { return Locality::local; }

private:
    int grid_;
};

// Mean absolute difference in [0,1]; behaves like a perceptual distance
// for flat synthetic scenes.
class OracleScorer : public PairScorer {
public:
    double score_pair(const Image& a, const Image& b) override {
        if (!a.same_size(b))
            raise(Errc::dimension_mismatch, "score_pair: image dimensions differ");
        double sum = 0.0;
        for (std::size_t i = 0; i < a.data().size(); ++i)
            sum += std::abs(int(a.data()[i]) - int(b.data()[i])) / 255.0;
        return sum / double(a.data().size());
    }

    Locality locality() const override { return Locality::local; }
};

} // namespace

BackendSet oracle_backends(const SceneGraph& scene, const PromptLibrary& prompts,
                           const OracleOptions& options) {
    std::optional<int> protected_id;
    if (!options.faulty_protected_name.empty()) {
        const SceneObject* o = scene.find_object_by_name(options.faulty_protected_name);
        if (!o)
            raise(Errc::config_error,
                  "faulty remover: no object named " + options.faulty_protected_name);
        protected_id = o->id;
    }

    auto reasoner = std::make_shared<OracleReasoner>(scene, prompts, options);
    BackendSet set;
    set.vision_reasoner = reasoner;
    set.text_reasoner = reasoner;
    set.segmenter = std::make_shared<OracleSegmenter>(scene, options.segment_score);
    set.remover = std::make_shared<OracleRemover>(scene, protected_id);
    if (options.with_corrective_remover)
        set.corrective_remover = std::make_shared<OracleRemover>(scene, std::nullopt);
    if (options.with_providers) {
        set.embedder = std::make_shared<OracleEmbedder>();
        set.scorer = std::make_shared<OracleScorer>();
    }
    return set;
}

} // namespace reorm
