#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "reorm/oracle.hpp"
#include "reorm/parse.hpp"

#include <algorithm>

using namespace reorm;
using reorm::test::person_shadow_scene;
using reorm::test::prompt_library;

namespace {

// independent reachability: expand to a fixpoint by repeated sweeps
std::set<int> closure_brute(const SceneGraph& scene, const std::set<int>& targets) {
    std::set<int> out(targets);
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& e : scene.edges) {
            if (out.count(e.from) && !out.count(e.to)) {
                out.insert(e.to);
                changed = true;
            }
        }
    }
    return out;
}

} // namespace

TEST_CASE("gen_scene determinism and structure") {
    SUBCASE("same seed, same graph") {
        SceneGraph a = gen_scene(7, 6, 0.4);
        SceneGraph b = gen_scene(7, 6, 0.4);
        CHECK(a.to_json() == b.to_json());
        SceneGraph c = gen_scene(8, 6, 0.4);
        CHECK(a.to_json() != c.to_json());
    }
    SUBCASE("single object has no edges") {
        SceneGraph s = gen_scene(3, 1, 1.0);
        CHECK(s.objects.size() == 1);
        CHECK(s.edges.empty());
    }
    SUBCASE("density 1 with n=3 yields the complete DAG over the topological order") {
        SceneGraph s = gen_scene(11, 3, 1.0);
        CHECK(s.edges.size() == 3); // all pairs
        // complete DAG: one node with out-degree 2, one with 1, one with 0
        std::map<int, int> outdeg;
        for (const auto& e : s.edges) ++outdeg[e.from];
        std::vector<int> degs;
        for (const auto& o : s.objects) degs.push_back(outdeg[o.id]);
        std::sort(degs.begin(), degs.end());
        CHECK(degs == std::vector<int>{0, 1, 2});
    }
    SUBCASE("object names are unique and footprints disjoint") {
        SceneGraph s = gen_scene(13, 9, 0.5);
        std::set<std::string> names;
        for (const auto& o : s.objects) CHECK(names.insert(o.name).second);
        Mask acc(s.width, s.height);
        for (const auto& o : s.objects) {
            Mask f = object_footprint(s, o.id);
            CHECK(f.count_set() > 0);
            for (std::size_t i = 0; i < acc.data().size(); ++i)
                CHECK((acc.data()[i] & f.data()[i]) == 0);
            std::vector<Mask> both{acc, f};
            acc = mask_union(both, s.width, s.height);
        }
    }
    SUBCASE("edges are acyclic") {
        for (std::uint64_t seed : {1, 2, 3}) {
            SceneGraph s = gen_scene(seed, 8, 0.6);
            for (const auto& o : s.objects) {
                std::set<int> c = closure(s, {o.id});
                // DAG: following edges from any dependent never returns home
                for (int id : c) {
                    if (id == o.id) continue;
                    CHECK_FALSE(closure_brute(s, {id}).count(o.id));
                }
            }
        }
    }
}

TEST_CASE("closure") {
    SUBCASE("isolated object closes to itself") {
        SceneGraph s = gen_scene(5, 1, 0.0);
        CHECK(closure(s, {0}) == std::set<int>{0});
    }
    SUBCASE("person and shadow") {
        SceneGraph s = person_shadow_scene();
        CHECK(closure(s, {0}) == std::set<int>{0, 1});
        CHECK(closure(s, {1}) == std::set<int>{1});
        CHECK(closure(s, {2}) == std::set<int>{2});
    }
    SUBCASE("unknown id is an error") {
        SceneGraph s = person_shadow_scene();
        CHECK_THROWS_AS(closure(s, {42}), Error);
    }
    SUBCASE("matches brute-force reachability on random 12-node DAGs") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            SceneGraph s = gen_scene(seed + 100, 12, 0.3);
            std::mt19937_64 rng(seed);
            for (int trial = 0; trial < 30; ++trial) {
                std::set<int> targets;
                int k = 1 + int(bounded_uniform(rng, 4));
                for (int i = 0; i < k; ++i)
                    targets.insert(int(bounded_uniform(rng, s.objects.size())));
                CHECK(closure(s, targets) == closure_brute(s, targets));
            }
        }
    }
    SUBCASE("monotone and idempotent") {
        SceneGraph s = gen_scene(77, 10, 0.4);
        std::set<int> small{0, 1}, large{0, 1, 2, 3};
        std::set<int> cs = closure(s, small), cl = closure(s, large);
        CHECK(std::includes(cl.begin(), cl.end(), cs.begin(), cs.end()));
        CHECK(closure(s, cs) == cs);
    }
}

TEST_CASE("render") {
    SceneGraph s = person_shadow_scene();
    SUBCASE("empty removal renders the full scene") {
        Image full = render(s, {});
        CHECK(detect_present(s, full) == std::set<int>{0, 1, 2});
    }
    SUBCASE("removing everything leaves uniform background") {
        Image empty = render(s, {0, 1, 2});
        for (std::size_t i = 0; i < empty.data().size(); i += 3) {
            CHECK(empty.data()[i] == s.background.r);
            CHECK(empty.data()[i + 1] == s.background.g);
            CHECK(empty.data()[i + 2] == s.background.b);
        }
    }
    SUBCASE("removal equals rendering a scene built without those objects") {
        std::set<int> removed = closure(s, {0});
        Image a = render(s, removed);
        SceneGraph reduced = s;
        reduced.objects.erase(std::remove_if(reduced.objects.begin(), reduced.objects.end(),
                                             [&](const SceneObject& o) {
                                                 return removed.count(o.id) > 0;
                                             }),
                              reduced.objects.end());
        reduced.edges.clear();
        Image b = render(reduced, {});
        CHECK(a == b);
    }
    SUBCASE("injective over removed-sets") {
        SceneGraph g = gen_scene(21, 6, 0.5);
        std::set<std::string> digests;
        for (int bits = 0; bits < (1 << 6); ++bits) {
            std::set<int> removed;
            for (int i = 0; i < 6; ++i)
                if (bits & (1 << i)) removed.insert(i);
            CHECK(digests.insert(render(g, removed).digest()).second);
        }
    }
}

TEST_CASE("scene json round trip") {
    SceneGraph s = gen_scene(9, 7, 0.5);
    SceneGraph back = SceneGraph::from_json(s.to_json());
    CHECK(back.to_json() == s.to_json());
    CHECK(render(back, {}) == render(s, {}));

    SUBCASE("edge endpoint validation") {
        nlohmann::json j = s.to_json();
        j["edges"].push_back({{"from", 0}, {"to", 999}, {"kind", "lighting_dependent"}});
        CHECK_THROWS_AS(SceneGraph::from_json(j), Error);
    }
}

TEST_CASE("match_names keeps maximal matches") {
    SceneGraph s;
    s.width = 64;
    s.height = 48;
    s.objects = {
        {0, "red rectangle", ShapeKind::rectangle, {200, 40, 40}, 2, 2, 10, 10},
        {1, "red rectangle 2", ShapeKind::rectangle, {200, 40, 40}, 20, 2, 10, 10},
        {2, "blue circle", ShapeKind::ellipse, {40, 80, 200}, 40, 2, 10, 10},
    };
    CHECK(match_names(s, "Remove the red rectangle.") == std::vector<int>{0});
    CHECK(match_names(s, "Remove the red rectangle 2.") == std::vector<int>{1});
    CHECK(match_names(s, "Remove the blue circle.") == std::vector<int>{2});
    CHECK(match_names(s, "Remove the dinosaur.").empty());
}

TEST_CASE("oracle backends answer from ground truth") {
    SceneGraph s = person_shadow_scene();
    const PromptLibrary& lib = prompt_library();
    BackendSet oracle = oracle_backends(s, lib);
    Image full = render(s, {});

    SUBCASE("analyzer lists the closure, parseable in the response format") {
        PromptBundle b = lib.render_analyzer("Remove the person.");
        RemovalPlan plan = parse_analyzer_response(oracle.vision_reasoner->reason(b, &full));
        CHECK(plan.labels == std::vector<std::string>{"person", "person's shadow"});
    }
    SUBCASE("segmenter returns exact footprints for present objects only") {
        SegmentResult r = oracle.segmenter->segment(full, {"person", "unicorn"});
        REQUIRE(r.by_label.at("person").size() == 1);
        CHECK(r.by_label.at("person")[0].mask == object_footprint(s, 0));
        CHECK(r.by_label.at("person")[0].score == 0.9);
        CHECK(r.by_label.at("unicorn").empty());

        Image without_person = render(s, {0});
        SegmentResult r2 = oracle.segmenter->segment(without_person, {"person"});
        CHECK(r2.by_label.at("person").empty());
    }
    SUBCASE("remover re-renders without fully covered objects") {
        Mask m = mask_dilate(object_footprint(s, 0), 2);
        Image out = oracle.remover->remove(full, m);
        CHECK(out == render(s, {0}));
    }
    SUBCASE("all-zero mask leaves the image unchanged") {
        Mask zero(s.width, s.height);
        CHECK(oracle.remover->remove(full, zero) == full);
    }
    SUBCASE("examiner flags exactly the residual object") {
        // description says only the bystander survives; shadow is residue
        Image edited = render(s, {0});
        std::string description =
            "The image shows a plain background containing the following objects: "
            "[\"red triangle\"].";
        PromptBundle b = lib.render_examiner(description);
        CorrectionList c = parse_examiner_response(oracle.vision_reasoner->reason(b, &edited));
        CHECK(c.labels == std::vector<std::string>{"person's shadow"});
    }
    SUBCASE("examiner returns an empty list for a perfect edit") {
        Image edited = render(s, {0, 1});
        std::string description =
            "The image shows a plain background containing the following objects: "
            "[\"red triangle\"].";
        PromptBundle b = lib.render_examiner(description);
        CorrectionList c = parse_examiner_response(oracle.vision_reasoner->reason(b, &edited));
        CHECK(c.labels.empty());
    }
}

TEST_CASE("faulty remover protects the configured object") {
    SceneGraph s = person_shadow_scene();
    OracleOptions options;
    options.faulty_protected_name = "person's shadow";
    BackendSet oracle = oracle_backends(s, prompt_library(), options);
    Image full = render(s, {});

    std::vector<Mask> masks{object_footprint(s, 0), object_footprint(s, 1)};
    Mask both = mask_union(masks, s.width, s.height);
    Image out = oracle.remover->remove(full, both);
    CHECK(out == render(s, {0})); // shadow survives
    // the corrective remover is honest
    Image fixed = oracle.corrective_remover->remove(out, object_footprint(s, 1));
    CHECK(fixed == render(s, {0, 1}));
}

TEST_CASE("simulator omission knob drops the named object from the description") {
    SceneGraph s = person_shadow_scene();
    OracleOptions options;
    options.simulator_omit = {"red triangle"};
    BackendSet oracle = oracle_backends(s, prompt_library(), options);
    Image full = render(s, {});

    RemovalPlan plan;
    plan.labels = {"person", "person's shadow"};
    PromptBundle b = prompt_library().render_simulator(plan);
    std::string description = oracle.vision_reasoner->reason(b, &full);
    CHECK(description.find("red triangle") == std::string::npos);
}
