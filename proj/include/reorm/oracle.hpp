#pragma once

#include "reorm/backends.hpp"
#include "reorm/raster.hpp"

#include <json.hpp>

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace reorm {

// The four interaction kinds. Closure semantics are identical across
// kinds; the labels drive category-stratified reporting.
enum class EdgeKind {
    lighting_dependent,
    physically_connected,
    target_produced,
    contextually_linked,
};

const char* edge_kind_name(EdgeKind k);
EdgeKind edge_kind_from_name(const std::string& name);

enum class ShapeKind { rectangle, ellipse, triangle };

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

struct SceneObject {
    int id = 0;
    std::string name;
    ShapeKind shape = ShapeKind::rectangle;
    Rgb color;
    int x = 0, y = 0; // bounding box top-left
    int w = 0, h = 0;
};

// Dependency points from target to dependent element: removing `from`
// renders `to` implausible.
struct SceneEdge {
    int from = 0;
    int to = 0;
    EdgeKind kind = EdgeKind::lighting_dependent;
};

// Synthetic world. Object footprints never overlap, so every removed-set
// renders to a distinct image and removal restores exact background.
struct SceneGraph {
    int width = 0, height = 0;
    Rgb background{230, 230, 230};
    std::vector<SceneObject> objects;
    std::vector<SceneEdge> edges;

    const SceneObject* find_object(int id) const;
    const SceneObject* find_object_by_name(const std::string& name) const;

    nlohmann::json to_json() const;
    static SceneGraph from_json(const nlohmann::json& j);
};

// Deterministic per seed. Objects are placed on a jittered grid without
// occlusion; for each pair ordered by the generated topological order an
// edge exists with probability edge_density.
SceneGraph gen_scene(std::uint64_t seed, int n_objects, double edge_density,
                     int canvas_width = 160, int canvas_height = 120);

// Smallest superset of `targets` closed under outgoing dependency edges.
std::set<int> closure(const SceneGraph& scene, const std::set<int>& targets);

// Flat raster of the scene with the given objects removed.
Image render(const SceneGraph& scene, const std::set<int>& removed);

// Exact footprint of one object on the scene canvas.
Mask object_footprint(const SceneGraph& scene, int id);

// Objects whose pixels are visible in the image (footprint majority
// matches the object's color).
std::set<int> detect_present(const SceneGraph& scene, const Image& image);

// Maximal object names contained in the text; used to ground instructions
// and plan labels against the scene.
std::vector<int> match_names(const SceneGraph& scene, const std::string& text);

struct OracleOptions {
    // Primary remover refuses to erase this object (exercises the
    // self-correction path). Empty = honest remover.
    std::string faulty_protected_name;
    // Names the simulator silently drops from its scene description
    // (reproduces examiner false positives / over-editing).
    std::vector<std::string> simulator_omit;
    double segment_score = 0.9;
    bool with_corrective_remover = true;
    bool with_providers = true;
};

// Every backend interface answered from ground truth. The prompt library
// is used to recognize which role a bundle plays.
BackendSet oracle_backends(const SceneGraph& scene, const PromptLibrary& prompts,
                           const OracleOptions& options = {});

} // namespace reorm
