#pragma once

#include "reorm/parse.hpp"

#include <string>
#include <vector>

namespace reorm {

// One backend-ready prompt. attach_image is true iff the step is
// image-conditioned.
struct PromptBundle {
    std::string system_text;
    std::string user_text;
    bool attach_image = false;

    bool operator==(const PromptBundle&) const = default;
};

enum class ChainStep {
    identify_target,
    enumerate_elements,
    reason_consistency,
    consolidate_list,
};

const char* chain_step_name(ChainStep step);

// Loads the prompt text assets once and verifies each against its pinned
// SHA-256 before use, so edits to the files cannot drift silently.
class PromptLibrary {
public:
    // Resolution order: explicit argument, REORM_ASSETS_DIR environment
    // variable, compiled-in default.
    explicit PromptLibrary(const std::string& assets_dir = "");

    const std::string& assets_dir() const { return dir_; }

    PromptBundle render_analyzer(const std::string& instruction) const;
    PromptBundle render_simulator(const RemovalPlan& plan) const;
    PromptBundle render_examiner(const std::string& description) const;
    PromptBundle render_chain_step(ChainStep step, const std::string& context) const;

    const std::string& analyzer_text() const { return analyzer_; }
    const std::string& simulator_text() const { return simulator_; }
    const std::string& examiner_text() const { return examiner_; }
    const std::string& chain_text(ChainStep step) const;

private:
    std::string dir_;
    std::string analyzer_;
    std::string simulator_;
    std::string examiner_;
    std::string chain_identify_;
    std::string chain_enumerate_;
    std::string chain_consistency_;
    std::string chain_consolidate_;
};

// Renders a label list the way the prompt exemplars print them:
// ["a", "b", "c"].
std::string format_label_list(const std::vector<std::string>& labels);

} // namespace reorm
