#pragma once

#include <string>
#include <vector>

namespace reorm {

// Consolidated removal list: target objects plus associated elements, in
// the order the reasoner produced them.
struct RemovalPlan {
    std::string reasoning;
    std::vector<std::string> labels;

    bool operator==(const RemovalPlan&) const = default;
};

// Examiner output. An empty label list means the edited image matches the
// expected scene description.
struct CorrectionList {
    std::string reasoning;
    std::vector<std::string> labels;

    bool operator==(const CorrectionList&) const = default;
};

// Live models deviate from the response format; fixtures must not.
// tolerant accepts single/double quotes, trailing commas, and prose
// around the markers; strict demands the exemplar shape exactly
// (Reasoning line, double-quoted items, nothing after the list).
enum class ParseMode { tolerant, strict };

// Extracts reasoning and the bracketed list after "Target Objects:".
// Throws Errc::malformed_response when either marker is missing. Labels
// are normalized before return.
RemovalPlan parse_analyzer_response(const std::string& text,
                                    ParseMode mode = ParseMode::tolerant);

// Extracts the list after "Objects to be removed:". An empty bracket pair
// yields an empty list. Labels are returned as printed, not normalized.
CorrectionList parse_examiner_response(const std::string& text,
                                       ParseMode mode = ParseMode::tolerant);

// Single-line chain-step outputs.
std::string parse_target_line(const std::string& text);
std::vector<std::string> parse_marked_list(const std::string& marker, const std::string& text);

// Trim, collapse internal whitespace, drop empties, and deduplicate
// case-insensitively after stripping a leading article; the first
// occurrence keeps its original surface form and position.
std::vector<std::string> normalize_labels(const std::vector<std::string>& labels);

// Canonical re-serialization in the analyzer/examiner response formats.
std::string to_analyzer_text(const RemovalPlan& plan);
std::string to_examiner_text(const CorrectionList& correction);

} // namespace reorm
