#include "reorm/prompts.hpp"

#include "reorm/error.hpp"
#include "reorm/util.hpp"

#include <cstdlib>
#include <filesystem>

#ifndef REORM_DEFAULT_ASSETS_DIR
#define REORM_DEFAULT_ASSETS_DIR ""
#endif

namespace reorm {

namespace {

struct AssetSpec {
    const char* file;
    const char* sha256;
};

// Pinned digests of the prompt assets. Loading fails loudly if the files
// on disk no longer match.
constexpr AssetSpec kAssets[] = {
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

std::string load_checked(const std::string& dir, const AssetSpec& spec) {
    std::string path = dir + "/" + spec.file;
    std::string text = read_file(path);
    std::string digest = sha256_hex(text);
    if (digest != spec.sha256)
        raise(Errc::config_error, "prompt asset " + path +
                                      " does not match its pinned checksum (got " + digest + ")");
    return text;
}

} // namespace

const char* chain_step_name(ChainStep step) {
    switch (step) {
    case ChainStep::identify_target: return "identify_target";
    case ChainStep::enumerate_elements: return "enumerate_elements";
    case ChainStep::reason_consistency: return "reason_consistency";
    case ChainStep::consolidate_list: return "consolidate_list";
    }
    return "unknown";
}

PromptLibrary::PromptLibrary(const std::string& assets_dir) {
    dir_ = assets_dir;
    if (dir_.empty()) {
        if (const char* env = std::getenv("REORM_ASSETS_DIR")) dir_ = env;
    }
    if (dir_.empty()) dir_ = REORM_DEFAULT_ASSETS_DIR;
    if (dir_.empty())
        raise(Errc::config_error, "no prompt assets directory configured");
    dir_ += "/prompts/v1";
    if (!std::filesystem::is_directory(dir_))
        raise(Errc::config_error, "prompt assets directory not found: " + dir_);

    analyzer_ = load_checked(dir_, kAssets[0]);
    simulator_ = load_checked(dir_, kAssets[1]);
    examiner_ = load_checked(dir_, kAssets[2]);
    chain_identify_ = load_checked(dir_, kAssets[3]);
    chain_enumerate_ = load_checked(dir_, kAssets[4]);
    chain_consistency_ = load_checked(dir_, kAssets[5]);
    chain_consolidate_ = load_checked(dir_, kAssets[6]);
}

PromptBundle PromptLibrary::render_analyzer(const std::string& instruction) const {
    if (trim(instruction).empty())
        raise(Errc::invalid_argument, "analyzer: instruction must be nonempty");
    return PromptBundle{analyzer_, instruction, true};
}

PromptBundle PromptLibrary::render_simulator(const RemovalPlan& plan) const {
    if (plan.labels.empty())
        raise(Errc::invalid_argument, "simulator: removal plan must name at least one object");
    std::string user = "Remove the following objects: " + format_label_list(plan.labels);
    return PromptBundle{simulator_, user, true};
}

PromptBundle PromptLibrary::render_examiner(const std::string& description) const {
    if (trim(description).empty())
        raise(Errc::invalid_argument, "examiner: scene description must be nonempty");
    return PromptBundle{examiner_, description, true};
}

PromptBundle PromptLibrary::render_chain_step(ChainStep step, const std::string& context) const {
    // Only the element-enumeration step looks at the image; the other
    // three are pure text reasoning.
    return PromptBundle{chain_text(step), context, step == ChainStep::enumerate_elements};
}

const std::string& PromptLibrary::chain_text(ChainStep step) const {
    switch (step) {
    case ChainStep::identify_target: return chain_identify_;
    case ChainStep::enumerate_elements: return chain_enumerate_;
    case ChainStep::reason_consistency: return chain_consistency_;
    case ChainStep::consolidate_list: return chain_consolidate_;
    }
    raise(Errc::invalid_argument, "unknown chain step");
}

std::string format_label_list(const std::vector<std::string>& labels) {
    std::string out = "[";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i) out += ", ";
        out += "\"";
        for (char c : labels[i]) {
            if (c == '"' || c == '\\') out += '\\';
            out += c;
        }
        out += "\"";
    }
    out += "]";
    return out;
}

} // namespace reorm
