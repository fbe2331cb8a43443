#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "reorm/parse.hpp"
#include "reorm/prompts.hpp"
#include "reorm/util.hpp"

#include <random>

using namespace reorm;

// The three analyzer exemplar responses and the examiner exemplar, as
// printed in the prompt assets.
static const char* kAnalyzerExample1 =
    "Reasoning: \"The target object is the person. If the person is removed, his shadow and "
    "his scooter would appear contextually inconsistent, as the scooter would appear to stand "
    "upright without a rider.\"\n"
    "Target Objects: [\"person\", \"the person's shadow\", \"the scooter\"]";

static const char* kAnalyzerExample2 =
    "Reasoning: \"The target object is a white dog. Removing the dog would make its reflection "
    "in the water and the toy it is playing with appear contextually inconsistent, as the toy "
    "would not reasonably be there without the dog.\"\n"
    "Target Objects: [\"white dog\", \"the white dog's reflection\", \"the dog toy\"]";

static const char* kAnalyzerExample3 =
    "Reasoning: \"The target object is a person. Without the person, the bags and the cup he "
    "is holding would appear to float in midair, which is physically implausible.\"\n"
    "Target Objects: [\"person\", \"the bags\", \"the cup\"]";

static const char* kExaminerExample1 =
    "Reasoning: \"The image shows a cozy kitchen. It contains a stove, a chair, and a "
    "refrigerator. The chair is not mentioned in the description, so it should be removed. "
    "There's something like a hand in the image, which doesn't appear in the description.\"\n"
    "Objects to be removed: [\"the chair\", \"the hand\", \"arm\"]";

TEST_CASE("analyzer exemplar responses parse to the printed label lists") {
    auto p1 = parse_analyzer_response(kAnalyzerExample1);
    CHECK(p1.labels == std::vector<std::string>{"person", "the person's shadow", "the scooter"});
    CHECK(p1.reasoning.find("stand upright without a rider") != std::string::npos);

    auto p2 = parse_analyzer_response(kAnalyzerExample2);
    CHECK(p2.labels ==
          std::vector<std::string>{"white dog", "the white dog's reflection", "the dog toy"});

    auto p3 = parse_analyzer_response(kAnalyzerExample3);
    CHECK(p3.labels == std::vector<std::string>{"person", "the bags", "the cup"});
}

TEST_CASE("examiner exemplar response parses to the printed list") {
    auto c = parse_examiner_response(kExaminerExample1);
    CHECK(c.labels == std::vector<std::string>{"the chair", "the hand", "arm"});
}

TEST_CASE("examiner empty bracket pair means a clean match") {
    auto c = parse_examiner_response("Reasoning: \"all matches.\"\nObjects to be removed: []");
    CHECK(c.labels.empty());
    CHECK(c.reasoning == "all matches.");
}

TEST_CASE("missing markers raise malformed_response") {
    CHECK_THROWS_AS(parse_analyzer_response("I cannot help with that."), Error);
    CHECK_THROWS_AS(parse_examiner_response("looks fine"), Error);
    try {
        parse_analyzer_response("no markers here");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::malformed_response);
    }
}

TEST_CASE("tolerant list grammar") {
    SUBCASE("single quotes") {
        auto p = parse_analyzer_response("Target Objects: ['dog', 'leash']");
        CHECK(p.labels == std::vector<std::string>{"dog", "leash"});
    }
    SUBCASE("trailing comma and prose after the list") {
        auto p = parse_analyzer_response(
            "Reasoning: \"x\"\nTarget Objects: [\"dog\", \"leash\",] Hope this helps!");
        CHECK(p.labels == std::vector<std::string>{"dog", "leash"});
    }
    SUBCASE("bare tokens") {
        auto p = parse_analyzer_response("Target Objects: [dog, leash]");
        CHECK(p.labels == std::vector<std::string>{"dog", "leash"});
    }
    SUBCASE("unterminated list is malformed") {
        CHECK_THROWS_AS(parse_analyzer_response("Target Objects: [\"dog\""), Error);
    }
    SUBCASE("empty analyzer list is malformed (a plan must name targets)") {
        CHECK_THROWS_AS(parse_analyzer_response("Target Objects: []"), Error);
    }
}

TEST_CASE("strict mode accepts the exemplar shape and nothing looser") {
    CHECK(parse_analyzer_response(kAnalyzerExample1, ParseMode::strict).labels ==
          std::vector<std::string>{"person", "the person's shadow", "the scooter"});
    CHECK(parse_examiner_response(kExaminerExample1, ParseMode::strict).labels ==
          std::vector<std::string>{"the chair", "the hand", "arm"});
    CHECK(parse_examiner_response("Reasoning: \"ok\"\nObjects to be removed: []",
                                  ParseMode::strict)
              .labels.empty());

    for (const char* loose : {
             "Target Objects: [\"dog\"]",                          // no reasoning line
             "Reasoning: \"x\"\nTarget Objects: ['dog']",          // single quotes
             "Reasoning: \"x\"\nTarget Objects: [dog]",            // bare token
             "Reasoning: \"x\"\nTarget Objects: [\"dog\",]",       // trailing comma
             "Reasoning: \"x\"\nTarget Objects: [\"dog\"] thanks", // trailing prose
         }) {
        CHECK_THROWS_AS(parse_analyzer_response(loose, ParseMode::strict), Error);
        CHECK_NOTHROW(parse_analyzer_response(loose)); // tolerant takes them all
    }
}

TEST_CASE("every exemplar response embedded in the prompt assets parses") {
    const PromptLibrary& lib = reorm::test::prompt_library();
    auto extract_blocks = [](const std::string& text) {
        std::vector<std::string> blocks;
        std::size_t pos = 0;
        while (true) {
            std::size_t begin = text.find("<assistant_response", pos);
            if (begin == std::string::npos) break;
            begin = text.find('>', begin) + 1;
            std::size_t end = text.find("</assistant_response>", begin);
            REQUIRE(end != std::string::npos);
            blocks.push_back(text.substr(begin, end - begin));
            pos = end;
        }
        return blocks;
    };

    auto analyzer_blocks = extract_blocks(lib.analyzer_text());
    REQUIRE(analyzer_blocks.size() == 3);
    for (const auto& block : analyzer_blocks) {
        RemovalPlan plan = parse_analyzer_response(block);
        CHECK_FALSE(plan.labels.empty());
        CHECK_FALSE(plan.reasoning.empty());
    }
    auto examiner_blocks = extract_blocks(lib.examiner_text());
    REQUIRE(examiner_blocks.size() == 1);
    CHECK(parse_examiner_response(examiner_blocks[0]).labels ==
          std::vector<std::string>{"the chair", "the hand", "arm"});
}

TEST_CASE("normalize_labels") {
    SUBCASE("trim, collapse, case-insensitive dedup with article stripping") {
        CHECK(normalize_labels({"person", "Person ", "the person"}) ==
              std::vector<std::string>{"person"});
    }
    SUBCASE("empty input") { CHECK(normalize_labels({}).empty()); }
    SUBCASE("distinct phrases survive") {
        CHECK(normalize_labels({"dog", "dog toy"}) == std::vector<std::string>{"dog", "dog toy"});
    }
    SUBCASE("first occurrence keeps its surface form") {
        CHECK(normalize_labels({"The Dog", "dog"}) == std::vector<std::string>{"The Dog"});
        CHECK(normalize_labels({"a  spotted   dog"}) ==
              std::vector<std::string>{"a spotted dog"});
    }
    SUBCASE("idempotent, length-bounded, order-preserving on random input") {
        std::mt19937_64 rng(42);
        std::vector<std::string> pool{"dog",  "the dog",  "cat",   "shadow", "The Shadow",
                                      "ball", "a ball",   "leash", "sign",   "an umbrella",
                                      "cup",  "the  cup", "hat",   ""};
        for (int iter = 0; iter < 100; ++iter) {
            std::vector<std::string> labels;
            int n = 1 + int(bounded_uniform(rng, 10));
            for (int i = 0; i < n; ++i)
                labels.push_back(pool[bounded_uniform(rng, pool.size())]);
            auto once = normalize_labels(labels);
            CHECK(normalize_labels(once) == once);
            CHECK(once.size() <= labels.size());
            // order is a subsequence of the input order
            std::size_t cursor = 0;
            for (const auto& out : once) {
                bool found = false;
                for (; cursor < labels.size(); ++cursor) {
                    if (collapse_whitespace(trim(labels[cursor])) == out) {
                        found = true;
                        ++cursor;
                        break;
                    }
                }
                CHECK(found);
            }
        }
    }
}

TEST_CASE("parse/serialize round trip is a fixed point") {
    for (const char* text : {kAnalyzerExample1, kAnalyzerExample2, kAnalyzerExample3}) {
        RemovalPlan plan = parse_analyzer_response(text);
        RemovalPlan again = parse_analyzer_response(to_analyzer_text(plan));
        CHECK(again == plan);
    }
    CorrectionList c = parse_examiner_response(kExaminerExample1);
    CHECK(parse_examiner_response(to_examiner_text(c)) == c);
}

TEST_CASE("chain step line parsers") {
    CHECK(parse_target_line("Target: the white dog") == "the white dog");
    CHECK(parse_target_line("target:  dog  \nextra") == "dog");
    CHECK_THROWS_AS(parse_target_line("no marker"), Error);
    CHECK(parse_marked_list("elements:", "Elements: [\"a\", \"b\"]") ==
          std::vector<std::string>{"a", "b"});
    CHECK(parse_marked_list("remove:", "Remove: []").empty());
}

// --- prompt rendering ---------------------------------------------------

TEST_CASE("prompt assets match their pinned checksums") {
    // canonical digests, frozen here independently of the loader's pins
    const std::pair<const char*, const char*> expected[] = {
        {"analyzer.txt", "faeac02f79acad2a98a8d211b654d14499d9ecaa3c4b11b0981acb4cbf7853ec"},
        {"simulator.txt", "393e80db0b826fd708831dcd44074d79fe899ecfd6e820bf18781bec1cd66b80"},
        {"examiner.txt", "b871fa125ea7aeb2e2f4597bd0a19cf5537bc7ed6a6f8271fad57a735bb8e44d"},
        {"chain_identify_target.txt",
         "28eea6ded7c8d43e7cfb15323c00519b434de9ab63640f28c9f55c1fb21c11fc"},
        {"chain_enumerate_elements.txt",
         "0bade5c2b6b6a44d2ca33ce9f6cf6d860c8fe968c58ea58543e9d42c06bd723a"},
        {"chain_reason_consistency.txt",
         "0bd03f90b8affaef722287dee49262ea589011c8538f50c7ad0fee94d4b4d2ea"},
        {"chain_consolidate_list.txt",
         "4554e4b754087e94ce02248c93021c2a49d1c4a4c37868f95eef08aaa8abc0c5"},
    };
    const PromptLibrary& lib = reorm::test::prompt_library();
    for (const auto& [file, digest] : expected) {
        std::string text = read_file(lib.assets_dir() + "/" + file);
        CHECK_MESSAGE(sha256_hex(text) == digest, file);
    }
}

TEST_CASE("analyzer bundle carries the full prompt verbatim") {
    const PromptLibrary& lib = reorm::test::prompt_library();
    PromptBundle b = lib.render_analyzer("Remove the person.");
    CHECK(b.attach_image);
    CHECK(b.user_text == "Remove the person.");
    CHECK(b.system_text.find("Avoid vague or abstract noun phrases") != std::string::npos);
    // all three exemplar response blocks are present
    for (const char* needle :
         {"<assistant_response id=\"example-1\">", "<assistant_response id=\"example-2\">",
          "<assistant_response id=\"example-3\">", "the scooter"}) {
        CHECK(b.system_text.find(needle) != std::string::npos);
    }
    CHECK_THROWS_AS(lib.render_analyzer(""), Error);
}

TEST_CASE("simulator bundle lists the removal labels") {
    const PromptLibrary& lib = reorm::test::prompt_library();
    RemovalPlan plan;
    plan.labels = {"dog", "leash"};
    PromptBundle b = lib.render_simulator(plan);
    CHECK(b.attach_image);
    CHECK(b.system_text.find("Do NOT mention the original image") != std::string::npos);
    CHECK(b.user_text.find("\"dog\"") != std::string::npos);
    CHECK(b.user_text.find("\"leash\"") != std::string::npos);
    CHECK_THROWS_AS(lib.render_simulator(RemovalPlan{}), Error);
}

TEST_CASE("examiner bundle embeds the rules and exemplar") {
    const PromptLibrary& lib = reorm::test::prompt_library();
    PromptBundle b = lib.render_examiner("A kitchen with a stove.");
    CHECK(b.attach_image);
    CHECK(b.system_text.find("Ignore discrepancies in the quantity") != std::string::npos);
    CHECK(b.system_text.find("[\"the chair\", \"the hand\", \"arm\"]") != std::string::npos);
    CHECK(b.user_text == "A kitchen with a stove.");
    CHECK_THROWS_AS(lib.render_examiner(""), Error);
}

TEST_CASE("chain bundles attach the image only for element enumeration") {
    const PromptLibrary& lib = reorm::test::prompt_library();
    CHECK_FALSE(lib.render_chain_step(ChainStep::identify_target, "Remove the dog").attach_image);
    CHECK(lib.render_chain_step(ChainStep::enumerate_elements, "dog").attach_image);
    CHECK_FALSE(lib.render_chain_step(ChainStep::reason_consistency, "x").attach_image);
    PromptBundle b4 = lib.render_chain_step(
        ChainStep::consolidate_list, "Target object: dog\nElements to remove: [\"leash\"]");
    CHECK_FALSE(b4.attach_image);
    CHECK(b4.user_text.find("dog") != std::string::npos);
    CHECK(b4.user_text.find("[\"leash\"]") != std::string::npos);
}

TEST_CASE("rendering is deterministic") {
    const PromptLibrary& lib = reorm::test::prompt_library();
    CHECK(lib.render_analyzer("Remove the cat.") == lib.render_analyzer("Remove the cat."));
    RemovalPlan plan;
    plan.labels = {"cat"};
    CHECK(lib.render_simulator(plan) == lib.render_simulator(plan));
}

TEST_CASE("fuzzed well-formed analyzer responses parse to identical labels") {
    std::mt19937_64 rng(7);
    std::vector<std::string> words{"dog",    "leash", "shadow", "scooter", "cup",
                                   "mirror", "sign",  "ball",   "hat",     "umbrella"};
    int checked = 0;
    for (int iter = 0; iter < 300; ++iter) {
        int n = 1 + int(bounded_uniform(rng, 4));
        std::vector<std::string> labels;
        for (int i = 0; i < n; ++i) {
            std::string w = words[bounded_uniform(rng, words.size())];
            if (bounded_uniform(rng, 3) == 0) w = "the " + w + "'s " + words[bounded_uniform(rng, words.size())];
            labels.push_back(w);
        }
        auto expected = normalize_labels(labels);

        // quote/whitespace/prose variations of a well-formed response
        std::string text;
        if (bounded_uniform(rng, 2)) text += "Sure! Here is my analysis.\n";
        text += "Reasoning: \"because of seed " + std::to_string(iter) + "\"";
        text += bounded_uniform(rng, 2) ? "\n" : "\n\n";
        text += bounded_uniform(rng, 2) ? "Target Objects: [" : "Target Objects:[";
        for (std::size_t i = 0; i < labels.size(); ++i) {
            bool has_quote = labels[i].find('\'') != std::string::npos;
            char quote = has_quote || bounded_uniform(rng, 2) ? '"' : '\'';
            if (i) text += bounded_uniform(rng, 2) ? ", " : ",";
            if (bounded_uniform(rng, 3) == 0) text += " ";
            text += quote + labels[i] + quote;
        }
        if (bounded_uniform(rng, 4) == 0) text += ",";
        text += "]";
        if (bounded_uniform(rng, 2)) text += " Let me know if you need anything else.";

        CHECK(parse_analyzer_response(text).labels == expected);
        ++checked;
    }
    CHECK(checked == 300);
}
