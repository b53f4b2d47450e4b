#include "semanom/anomaly_parser.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <variant>

#include <nlohmann/json.hpp>

#include "semanom/errors.hpp"

namespace semanom {

namespace {

bool is_space(char c) {
    return std::isspace(static_cast<unsigned char>(c)) != 0;
}

bool is_digit(char c) {
    return std::isdigit(static_cast<unsigned char>(c)) != 0;
}

std::string_view trim_view(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::string lower_collapsed(std::string_view s) {
    std::string out;
    bool pending_space = false;
    for (char c : s) {
        if (is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out += ' ';
        pending_space = false;
        out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto nl = text.find('\n', start);
        auto line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        if (nl == std::string_view::npos) break;
        start = nl + 1;
    }
    return lines;
}

// Drops a leading list bullet ("- ", "* ", "• ").
std::string_view strip_bullet(std::string_view s) {
    s = trim_view(s);
    if (s.size() >= 2 && (s[0] == '-' || s[0] == '*') && is_space(s[1])) return trim_view(s.substr(2));
    constexpr std::string_view kDot = "\xE2\x80\xA2"; // U+2022
    if (s.substr(0, kDot.size()) == kDot) return trim_view(s.substr(kDot.size()));
    return s;
}

std::string_view strip_bold(std::string_view s) {
    s = trim_view(s);
    while (s.size() >= 2 && s.substr(0, 2) == "**") s = trim_view(s.substr(2));
    while (s.size() >= 2 && s.substr(s.size() - 2) == "**") s = trim_view(s.substr(0, s.size() - 2));
    return s;
}

struct BlockStart {
    std::string_view rest; // text after the marker
};

// Recognises "@<n>." (at_mode) or "<n>." at the start of a line, optionally
// preceded by a bullet or a bold marker.
std::optional<BlockStart> match_block_start(std::string_view line, bool at_mode) {
    auto s = strip_bullet(line);
    if (s.substr(0, 2) == "**") s = trim_view(s.substr(2));
    if (at_mode) {
        if (s.empty() || s.front() != '@') return std::nullopt;
        s.remove_prefix(1);
    }
    std::size_t i = 0;
    while (i < s.size() && is_digit(s[i])) ++i;
    if (i == 0 || i >= s.size() || s[i] != '.') return std::nullopt;
    const auto rest = s.substr(i + 1);
    if (!rest.empty() && !is_space(rest.front()) && rest.substr(0, 2) != "**") return std::nullopt;
    return BlockStart{trim_view(rest)};
}

struct LabelledLine {
    AnomalyField field;
    std::string_view value;
};

// "**Label**: value", "**Label:** value", "Label: value".
std::optional<LabelledLine> match_labelled_line(std::string_view line) {
    auto s = strip_bullet(line);
    const auto colon = s.find(':');
    if (colon == std::string_view::npos || colon > 60) return std::nullopt;
    auto label = strip_bold(s.substr(0, colon));
    if (label.empty()) return std::nullopt;
    for (char c : label) {
        if (!(std::isalpha(static_cast<unsigned char>(c)) || c == ' ')) return std::nullopt;
    }
    auto field = match_field_label(label);
    if (!field) return std::nullopt;
    auto value = trim_view(s.substr(colon + 1));
    if (value.substr(0, 2) == "**") value = trim_view(value.substr(2));
    return LabelledLine{*field, value};
}

struct RawBlock {
    std::array<std::optional<std::string>, 4> fields;
    std::string header_text;
};

std::size_t slot(AnomalyField f) {
    return static_cast<std::size_t>(f);
}

void append_line(std::string& target, std::string_view line) {
    if (line.empty()) return;
    if (!target.empty()) target += '\n';
    target.append(line);
}

RawBlock read_block(std::string_view header_rest, std::span<const std::string_view> body) {
    RawBlock block;
    std::optional<AnomalyField> current;
    // Fields repeated later in the block are ignored; the first one wins.
    bool current_accepts = false;

    auto consume = [&](std::string_view line, bool is_header) {
        if (auto labelled = match_labelled_line(line)) {
            current = labelled->field;
            auto& target = block.fields[slot(labelled->field)];
            current_accepts = !target.has_value();
            if (current_accepts) target = std::string(labelled->value);
            return;
        }
        const auto content = strip_bullet(line);
        if (content.empty()) return;
        if (is_header) {
            block.header_text = std::string(strip_bold(content));
            return;
        }
        if (current && current_accepts) append_line(*block.fields[slot(*current)], content);
    };

    consume(header_rest, true);
    for (auto line : body) consume(line, false);
    if (!block.fields[slot(AnomalyField::Name)] && !block.header_text.empty())
        block.fields[slot(AnomalyField::Name)] = block.header_text;
    return block;
}

// Turns a block's fields into a record, or returns the reason it cannot.
std::variant<AnomalyRecord, std::string> finish_block(const RawBlock& block) {
    static constexpr std::array<std::pair<AnomalyField, const char*>, 4> kOrder = {{
        {AnomalyField::Name, "missing name"},
        {AnomalyField::Phenomenon, "missing phenomenon"},
        {AnomalyField::Reasoning, "missing reasoning"},
        {AnomalyField::Severity, "missing severity"},
    }};
    for (const auto& [field, reason] : kOrder) {
        const auto& v = block.fields[slot(field)];
        if (!v || trim_view(*v).empty()) return std::string(reason);
    }
    AnomalyRecord record;
    record.name = trim(*block.fields[slot(AnomalyField::Name)]);
    record.phenomenon = trim(*block.fields[slot(AnomalyField::Phenomenon)]);
    record.reasoning = trim(*block.fields[slot(AnomalyField::Reasoning)]);
    const auto severity = parse_severity_value(*block.fields[slot(AnomalyField::Severity)]);
    if (!severity) return std::string("unparseable severity");
    if (*severity < 0.0 || *severity > 100.0) return std::string("severity out of range [0,100]");
    record.severity = *severity;
    return record;
}

void add_block(ParseReport& report, std::size_t index, const RawBlock& block) {
    auto result = finish_block(block);
    if (auto* record = std::get_if<AnomalyRecord>(&result))
        report.records.push_back(std::move(*record));
    else
        report.skipped_blocks.push_back({index, std::get<std::string>(result)});
}

std::string format_number(double value) {
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value, std::chars_format::fixed);
    if (ec != std::errc{}) return std::to_string(value);
    return std::string(buf.data(), end);
}

std::string strip_value_decorations(std::string_view v) {
    v = trim_view(v);
    while (!v.empty() && (v.back() == ',' || v.back() == '}')) v = trim_view(v.substr(0, v.size() - 1));
    if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') || (v.front() == '<' && v.back() == '>')))
        v = trim_view(v.substr(1, v.size() - 2));
    return std::string(v);
}

struct LabelHit {
    std::size_t label_begin;
    std::size_t value_begin;
    AnomalyField field;
};

// Finds "Label:" occurrences at the start of the object or right after a comma.
std::vector<LabelHit> find_brace_labels(std::string_view body) {
    std::vector<LabelHit> hits;
    std::size_t pos = 0;
    while (pos < body.size()) {
        const auto colon = body.find(':', pos);
        if (colon == std::string_view::npos) break;
        // walk back over the candidate label
        std::size_t b = colon;
        while (b > 0 && (std::isalpha(static_cast<unsigned char>(body[b - 1])) || body[b - 1] == ' ' ||
                         body[b - 1] == '"' || body[b - 1] == '*'))
            --b;
        const auto before = trim_view(body.substr(0, b));
        const bool at_boundary = before.empty() || before.back() == ',' || before.back() == '{';
        auto label = strip_bold(body.substr(b, colon - b));
        if (label.size() >= 2 && label.front() == '"' && label.back() == '"')
            label = label.substr(1, label.size() - 2);
        if (at_boundary) {
            if (auto field = match_field_label(label)) {
                // a label may be preceded by spaces after the comma; find the real start
                std::size_t lb = b;
                while (lb < colon && is_space(body[lb])) ++lb;
                hits.push_back({lb, colon + 1, *field});
            }
        }
        pos = colon + 1;
    }
    return hits;
}

RawBlock read_brace_object(std::string_view body) {
    RawBlock block;
    // JSON objects with quoted keys first.
    try {
        auto j = nlohmann::json::parse(std::string("{") + std::string(body) + "}");
        if (j.is_object()) {
            for (auto it = j.begin(); it != j.end(); ++it) {
                auto field = match_field_label(it.key());
                if (!field || block.fields[slot(*field)]) continue;
                if (it->is_string())
                    block.fields[slot(*field)] = it->get<std::string>();
                else if (it->is_number())
                    block.fields[slot(*field)] = format_number(it->get<double>());
            }
            return block;
        }
    } catch (const nlohmann::json::exception&) {
    }
    const auto hits = find_brace_labels(body);
    for (std::size_t i = 0; i < hits.size(); ++i) {
        const auto end = i + 1 < hits.size() ? hits[i + 1].label_begin : body.size();
        auto value = body.substr(hits[i].value_begin, end - hits[i].value_begin);
        auto& target = block.fields[slot(hits[i].field)];
        if (!target) target = strip_value_decorations(value);
    }
    return block;
}

bool contains(std::string_view hay, std::string_view needle) {
    return hay.find(needle) != std::string_view::npos;
}

} // namespace

std::optional<AnomalyField> match_field_label(std::string_view label) {
    const auto key = lower_collapsed(strip_bold(label));
    if (key == "name" || key == "anomaly name" || key == "abnormal phenomenon name" ||
        key == "phenomenon name")
        return AnomalyField::Name;
    if (key == "phenomenon" || key == "observed phenomenon" || key == "observed issue" ||
        key == "observed")
        return AnomalyField::Phenomenon;
    if (key == "reasoning" || key == "explanation") return AnomalyField::Reasoning;
    if (key == "severity score" || key == "severity") return AnomalyField::Severity;
    return std::nullopt;
}

std::optional<double> parse_severity_value(std::string_view text) {
    auto s = strip_bold(text);
    if (!s.empty() && s.front() == '[') s = trim_view(s.substr(1));
    std::size_t i = 0;
    if (i < s.size() && s[i] == '-') ++i;
    const std::size_t digits_begin = i;
    while (i < s.size() && is_digit(s[i])) ++i;
    if (i == digits_begin) return std::nullopt;
    if (i + 1 < s.size() && s[i] == '.' && is_digit(s[i + 1])) {
        ++i;
        while (i < s.size() && is_digit(s[i])) ++i;
    }
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + i, value);
    if (ec != std::errc{}) return std::nullopt;
    return value;
}

ParseReport parse_structured_list(std::string_view text) {
    ParseReport report;
    const auto lines = split_lines(text);
    const bool at_mode = std::any_of(lines.begin(), lines.end(),
                                     [](std::string_view l) { return match_block_start(l, true).has_value(); });

    std::optional<std::size_t> open_line;
    std::string_view open_rest;
    std::size_t block_index = 0;

    auto close = [&](std::size_t end_line) {
        if (!open_line) return;
        std::span<const std::string_view> body(lines.data() + *open_line + 1, end_line - *open_line - 1);
        add_block(report, block_index++, read_block(open_rest, body));
    };

    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (auto start = match_block_start(lines[i], at_mode)) {
            close(i);
            open_line = i;
            open_rest = start->rest;
        }
    }
    close(lines.size());
    return report;
}

std::string format_structured_list(std::span<const AnomalyRecord> records) {
    std::string out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (i > 0) out += '\n';
        out += "@" + std::to_string(i + 1) + ". **Name**: " + r.name + "\n";
        out += "**Phenomenon**: " + r.phenomenon + "\n";
        out += "**Reasoning**: " + r.reasoning + "\n";
        out += "**Severity Score**: " + format_number(r.severity) + ".\n";
    }
    return out;
}

ParseReport parse_brace_list(std::string_view text) {
    ParseReport report;
    std::size_t index = 0;
    std::size_t pos = 0;
    while (true) {
        const auto open = text.find('{', pos);
        if (open == std::string_view::npos) break;
        const auto close = text.find('}', open + 1);
        const auto end = close == std::string_view::npos ? text.size() : close;
        add_block(report, index++, read_brace_object(text.substr(open + 1, end - open - 1)));
        if (close == std::string_view::npos) break;
        pos = close + 1;
    }
    return report;
}

ParseReport parse_anomaly_answer(std::string_view text) {
    auto numbered = parse_structured_list(text);
    if (!numbered.records.empty() || !numbered.skipped_blocks.empty()) return numbered;
    return parse_brace_list(text);
}

SourceLabel parse_source_answer(std::string_view text) {
    auto s = trim_view(text);
    const auto stop = s.find_first_of(".!?\n");
    const std::string sentence = lower_collapsed(s.substr(0, stop));

    // leading word decides when it is a bare yes/no
    std::size_t w = 0;
    while (w < sentence.size() && std::isalpha(static_cast<unsigned char>(sentence[w]))) ++w;
    const auto first_word = std::string_view(sentence).substr(0, w);
    if (first_word == "yes") return SourceLabel::Ai;
    if (first_word == "no") return SourceLabel::Real;

    if (contains(sentence, "not generated") || contains(sentence, "not ai") ||
        contains(sentence, "real photograph") || contains(sentence, "real photo"))
        return SourceLabel::Real;
    if (contains(sentence, "generated by ai") || contains(sentence, "ai-generated") ||
        contains(sentence, "ai generated") || contains(sentence, "generated by artificial intelligence"))
        return SourceLabel::Ai;
    throw ValidationError("unparseable source answer");
}

} // namespace semanom
