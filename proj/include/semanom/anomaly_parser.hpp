#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "semanom/core_model.hpp"

namespace semanom {

struct SkippedBlock {
    std::size_t block_index = 0; // 0-based position among all blocks found
    std::string reason;

    bool operator==(const SkippedBlock&) const = default;
};

struct ParseReport {
    std::vector<AnomalyRecord> records; // document order
    std::vector<SkippedBlock> skipped_blocks;
};

enum class AnomalyField { Name, Phenomenon, Reasoning, Severity };

// Maps a field label such as "**Observed Phenomenon**" or "explanation" to its
// field. Case-insensitive; bold markers and surrounding whitespace ignored.
//
//   name        <- name | anomaly name | abnormal phenomenon name | phenomenon name
//   phenomenon  <- phenomenon | observed phenomenon | observed issue | observed
//   reasoning   <- reasoning | explanation
//   severity    <- severity score | severity
std::optional<AnomalyField> match_field_label(std::string_view label);

// Reads the leading number of "N", "N.", "N/100", "N/100 (label)", "[N]".
std::optional<double> parse_severity_value(std::string_view text);

// Parses the numbered block grammar emitted by the formatter agent and by
// fine-tuned models:
//
//   @1. **Name**: ...
//   - **Observed Phenomenon**: ...
//   - **Reasoning**: ...
//   - **Severity Score**: 10/100 (extremely unnatural)
//
// Blocks start at "@<n>." lines; when the text has no such line, plain "<n>."
// lines start blocks instead. Text before the first block is ignored. Never
// throws: incomplete or invalid blocks are reported in skipped_blocks.
ParseReport parse_structured_list(std::string_view text);

// Emits the canonical form that parse_structured_list reads back exactly:
//
//   @1. **Name**: <name>
//   **Phenomenon**: <phenomenon>
//   **Reasoning**: <reasoning>
//   **Severity Score**: <severity>.
//
// Blocks are separated by one blank line; the text ends with a newline.
std::string format_structured_list(std::span<const AnomalyRecord> records);

// Parses the brace-list answer of the two-turn deepfake format:
//   [ {Name: <y1>, Observed: <o1>, Reasoning: <r1>, Severity: <v1>}, ... ]
// Quoted JSON objects are accepted too.
ParseReport parse_brace_list(std::string_view text);

// Numbered blocks when present, otherwise the brace list.
ParseReport parse_anomaly_answer(std::string_view text);

// Turn-1 answer of the deepfake format ("Yes, this image is generated by AI" /
// "No, this image is a real photograph."). Looks at the first sentence only.
// Throws ValidationError("unparseable source answer") without a clear signal.
SourceLabel parse_source_answer(std::string_view text);

} // namespace semanom
