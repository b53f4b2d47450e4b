#include <cctype>
#include <optional>
#include <regex>
#include <unordered_set>

#include <fmt/format.h>

#include "semanom/agent/pipeline.hpp"

namespace semanom::agent {

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        auto line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        start = end + 1;
    }
    return lines;
}

std::string strip_markup(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '*' && i + 1 < s.size() && s[i + 1] == '*') {
            ++i;
            continue;
        }
        out += s[i];
    }
    return trim(out);
}

// Leading list decoration: "- ", "* ", "• ", "1. ", "1) ".
std::string_view strip_bullet(std::string_view line) {
    static const std::regex bullet(R"(^\s*(?:[-*]\s+|•\s*|\d+[.)]\s+))");
    std::match_results<std::string_view::const_iterator> m;
    if (std::regex_search(line.begin(), line.end(), m, bullet))
        line.remove_prefix(static_cast<std::size_t>(m.length(0)));
    return line;
}

bool has_word_count_at_most(std::string_view s, std::size_t limit) {
    std::size_t words = 0;
    bool in_word = false;
    for (char c : s) {
        const bool space = c == ' ' || c == '\t';
        if (!space && !in_word) ++words;
        in_word = !space;
    }
    return words <= limit;
}

} // namespace

std::string normalize_object_name(std::string_view name) {
    std::string out;
    bool pending_space = false;
    for (unsigned char c : name) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out += ' ';
        pending_space = false;
        out += static_cast<char>(std::tolower(c));
    }
    return out;
}

std::vector<DetectedObject> parse_object_list(std::string_view text) {
    static const std::regex hash_header(R"(^\s*#\s*([^#]+?)\s*#\s*:\s*(.*)$)");
    static const std::regex plain_header(R"(^\s*([^:.]{1,60}?)\s*:\s*(.*)$)");

    const auto lines = split_lines(text);
    bool hash_mode = false;
    for (auto line : lines) {
        const auto stripped = strip_markup(strip_bullet(line));
        if (std::regex_match(stripped, hash_header)) {
            hash_mode = true;
            break;
        }
    }

    std::vector<DetectedObject> objects;
    std::unordered_set<std::string> seen;
    std::optional<std::size_t> current; // empty while the current header was a duplicate
    bool after_header = false;

    for (auto line : lines) {
        const auto stripped = strip_markup(strip_bullet(line));
        if (stripped.empty()) continue;
        std::smatch m;
        const bool header = hash_mode ? std::regex_match(stripped, m, hash_header)
                                      : (std::regex_match(stripped, m, plain_header) &&
                                         has_word_count_at_most(m[1].str(), 6));
        if (header) {
            auto name = trim(m[1].str());
            after_header = true;
            current.reset();
            if (name.empty() || !seen.insert(normalize_object_name(name)).second) continue;
            objects.push_back({std::move(name), trim(m[2].str())});
            current = objects.size() - 1;
            continue;
        }
        if (!after_header || !current) continue; // preamble or duplicate's body
        auto& description = objects[*current].description;
        if (!description.empty()) description += ' ';
        description += stripped;
    }
    return objects;
}

std::vector<DetectedObject> merge_object_lists(const std::vector<std::vector<DetectedObject>>& runs) {
    std::vector<DetectedObject> merged;
    std::unordered_set<std::string> seen;
    for (const auto& run : runs)
        for (const auto& obj : run)
            if (seen.insert(normalize_object_name(obj.name)).second) merged.push_back(obj);
    return merged;
}

std::string_view to_string(CandidateOrigin origin) {
    switch (origin) {
    case CandidateOrigin::Attribute: return "attribute";
    case CandidateOrigin::Relation: return "relation";
    case CandidateOrigin::Integrated: return "integrated";
    }
    return "attribute";
}

CandidateOrigin parse_candidate_origin(std::string_view text) {
    if (text == "attribute") return CandidateOrigin::Attribute;
    if (text == "relation") return CandidateOrigin::Relation;
    if (text == "integrated") return CandidateOrigin::Integrated;
    throw ValidationError(fmt::format("unknown candidate origin '{}'", text));
}

std::vector<std::string> split_numbered_items(std::string_view text) {
    static const std::regex item_header(R"(^\s*(?:[-*•]\s*)?(?:\*\*)?@?\d+[.)](?:\*\*)?(?:\s+|$))");
    static const std::regex any_label(
        R"((abnormal phenomenon name|observed issue|observed phenomenon|phenomenon|explanation|reasoning|relationship|objects involved|object name)\**\s*:)",
        std::regex::icase);

    std::vector<std::string> items;
    std::string current;
    bool in_item = false;
    for (auto line : split_lines(text)) {
        std::match_results<std::string_view::const_iterator> m;
        if (std::regex_search(line.begin(), line.end(), m, item_header)) {
            if (in_item) items.push_back(trim(current));
            current = std::string(line.substr(static_cast<std::size_t>(m.length(0))));
            in_item = true;
            continue;
        }
        if (!in_item) continue;
        current += '\n';
        current += line;
    }
    if (in_item) items.push_back(trim(current));
    std::erase_if(items, [](const std::string& s) { return s.empty(); });

    if (items.empty()) {
        const auto whole = trim(text);
        if (std::regex_search(whole, any_label)) items.push_back(whole);
    }
    return items;
}

} // namespace semanom::agent
