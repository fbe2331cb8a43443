#include "reorm/parse.hpp"

#include "reorm/error.hpp"
#include "reorm/util.hpp"

#include <optional>

namespace reorm {

namespace {

// Case-insensitive search.
std::size_t ifind(const std::string& haystack, const std::string& needle, std::size_t from = 0) {
    std::string h = to_lower(haystack), n = to_lower(needle);
    return h.find(n, from);
}

struct ListParse {
    std::vector<std::string> items;
    std::size_t end_pos = 0; // one past the closing bracket
};

// Parses a bracketed list starting at or after `pos`. The tolerant
// grammar accepts "quoted", 'quoted', and bare items plus trailing
// commas; strict requires double-quoted items separated by ", ". Returns
// nullopt when no parseable list is present.
std::optional<ListParse> parse_bracket_list(const std::string& text, std::size_t pos,
                                            ParseMode mode) {
    std::size_t open = text.find('[', pos);
    if (open == std::string::npos) return std::nullopt;
    ListParse out;
    std::size_t i = open + 1;
    const std::size_t n = text.size();
    bool expect_item = true;
    while (true) {
        while (i < n && std::isspace(std::uint8_t(text[i]))) ++i;
        if (i >= n) return std::nullopt; // unterminated list
        if (text[i] == ']') {
            ++i;
            break;
        }
        if (text[i] == ',') {
            if (mode == ParseMode::strict && expect_item) return std::nullopt;
            expect_item = true;
            ++i;
            continue;
        }
        if (mode == ParseMode::strict && !expect_item) return std::nullopt;
        if (text[i] == '"' || text[i] == '\'') {
            char quote = text[i];
            if (mode == ParseMode::strict && quote != '"') return std::nullopt;
            std::size_t end = text.find(quote, i + 1);
            if (end == std::string::npos) return std::nullopt;
            out.items.push_back(text.substr(i + 1, end - i - 1));
            i = end + 1;
        } else {
            if (mode == ParseMode::strict) return std::nullopt; // bare token
            std::size_t end = i;
            while (end < n && text[end] != ',' && text[end] != ']') ++end;
            if (end >= n) return std::nullopt;
            out.items.push_back(trim(text.substr(i, end - i)));
            i = end;
        }
        expect_item = false;
    }
    if (mode == ParseMode::strict) {
        // a strict fixture ends at the list: only whitespace may follow,
        // and an empty-but-comma'd list is malformed
        if (expect_item && !out.items.empty()) return std::nullopt;
        for (std::size_t k = i; k < n; ++k) {
            if (!std::isspace(std::uint8_t(text[k]))) return std::nullopt;
        }
    }
    out.end_pos = i;
    return out;
}

// Reasoning body: text after the marker up to the next marker line or end,
// with surrounding quotes stripped.
std::string extract_reasoning(const std::string& text, std::size_t marker_pos,
                              std::size_t marker_len, std::size_t stop_pos) {
    std::size_t begin = marker_pos + marker_len;
    std::size_t end = stop_pos == std::string::npos ? text.size() : stop_pos;
    std::string body = trim(text.substr(begin, end - begin));
    if (body.size() >= 2 && (body.front() == '"' || body.front() == '\'') &&
        body.back() == body.front()) {
        body = body.substr(1, body.size() - 2);
    }
    return body;
}

std::string quote_json(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

} // namespace

RemovalPlan parse_analyzer_response(const std::string& text, ParseMode mode) {
    static const std::string kReasoning = "reasoning:";
    static const std::string kTargets = "target objects:";
    std::size_t tpos = ifind(text, kTargets);
    if (tpos == std::string::npos)
        raise(Errc::malformed_response, "analyzer response lacks a 'Target Objects:' marker");
    auto list = parse_bracket_list(text, tpos + kTargets.size(), mode);
    if (!list)
        raise(Errc::malformed_response, "analyzer response lacks a parseable bracketed list");

    RemovalPlan plan;
    std::size_t rpos = ifind(text, kReasoning);
    if (rpos != std::string::npos && rpos < tpos)
        plan.reasoning = extract_reasoning(text, rpos, kReasoning.size(), tpos);
    else if (mode == ParseMode::strict)
        raise(Errc::malformed_response, "strict analyzer response lacks a 'Reasoning:' line");
    plan.labels = normalize_labels(list->items);
    if (plan.labels.empty())
        raise(Errc::malformed_response, "analyzer response names no removal targets");
    return plan;
}

CorrectionList parse_examiner_response(const std::string& text, ParseMode mode) {
    static const std::string kReasoning = "reasoning:";
    static const std::string kObjects = "objects to be removed:";
    std::size_t opos = ifind(text, kObjects);
    if (opos == std::string::npos)
        raise(Errc::malformed_response,
              "examiner response lacks an 'Objects to be removed:' marker");
    auto list = parse_bracket_list(text, opos + kObjects.size(), mode);
    if (!list)
        raise(Errc::malformed_response, "examiner response lacks a parseable bracketed list");

    CorrectionList out;
    std::size_t rpos = ifind(text, kReasoning);
    if (rpos != std::string::npos && rpos < opos)
        out.reasoning = extract_reasoning(text, rpos, kReasoning.size(), opos);
    else if (mode == ParseMode::strict)
        raise(Errc::malformed_response, "strict examiner response lacks a 'Reasoning:' line");
    out.labels = list->items;
    return out;
}

std::string parse_target_line(const std::string& text) {
    static const std::string kTarget = "target:";
    std::size_t pos = ifind(text, kTarget);
    if (pos == std::string::npos)
        raise(Errc::malformed_response, "chain response lacks a 'Target:' marker");
    std::size_t begin = pos + kTarget.size();
    std::size_t end = text.find('\n', begin);
    std::string name = trim(text.substr(begin, end == std::string::npos ? end : end - begin));
    if (name.size() >= 2 && (name.front() == '"' || name.front() == '\'') &&
        name.back() == name.front())
        name = trim(name.substr(1, name.size() - 2));
    if (name.empty())
        raise(Errc::malformed_response, "chain response names no target");
    return collapse_whitespace(name);
}

std::vector<std::string> parse_marked_list(const std::string& marker, const std::string& text) {
    std::size_t pos = ifind(text, marker);
    if (pos == std::string::npos)
        raise(Errc::malformed_response, "response lacks a '" + marker + "' marker");
    auto list = parse_bracket_list(text, pos + marker.size(), ParseMode::tolerant);
    if (!list)
        raise(Errc::malformed_response, "response lacks a parseable bracketed list");
    return list->items;
}

std::vector<std::string> normalize_labels(const std::vector<std::string>& labels) {
    std::vector<std::string> out;
    std::vector<std::string> seen_keys;
    for (const std::string& raw : labels) {
        std::string surface = collapse_whitespace(trim(raw));
        if (surface.empty()) continue;
        // Article stripping applies to the dedup key only; the surface
        // form the reasoner chose is what downstream stages receive.
        std::string key = to_lower(surface);
        for (const char* article : {"the ", "a ", "an "}) {
            if (key.rfind(article, 0) == 0) {
                key = key.substr(std::string(article).size());
                break;
            }
        }
        key = trim(key);
        bool dup = false;
        for (const std::string& k : seen_keys) {
            if (k == key) { dup = true; break; }
        }
        if (dup) continue;
        seen_keys.push_back(key);
        out.push_back(surface);
    }
    return out;
}

std::string to_analyzer_text(const RemovalPlan& plan) {
    std::string out = "Reasoning: " + quote_json(plan.reasoning) + "\nTarget Objects: [";
    for (std::size_t i = 0; i < plan.labels.size(); ++i) {
        if (i) out += ", ";
        out += quote_json(plan.labels[i]);
    }
    out += "]";
    return out;
}

std::string to_examiner_text(const CorrectionList& correction) {
    std::string out = "Reasoning: " + quote_json(correction.reasoning) +
                      "\nObjects to be removed: [";
    for (std::size_t i = 0; i < correction.labels.size(); ++i) {
        if (i) out += ", ";
        out += quote_json(correction.labels[i]);
    }
    out += "]";
    return out;
}

} // namespace reorm
