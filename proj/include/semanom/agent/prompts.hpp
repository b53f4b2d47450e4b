#pragma once

#include <span>
#include <utility>
#include <string>
#include <string_view>
#include <vector>

namespace semanom::agent {

enum class Stage {
    ObjectPerceiver,
    AttributeStep1,
    AttributeStep2,
    RelationStep1,
    RelationStep2,
    IntegratorStep1,
    IntegratorStep2,
    Formatter,
};

inline constexpr Stage kAllStages[] = {
    Stage::ObjectPerceiver, Stage::AttributeStep1,  Stage::AttributeStep2,  Stage::RelationStep1,
    Stage::RelationStep2,   Stage::IntegratorStep1, Stage::IntegratorStep2, Stage::Formatter,
};

// Stable snake_case name used in cache keys, state files and logs.
std::string_view stage_name(Stage stage);

// Unrendered template with its {placeholders}.
std::string_view prompt_template(Stage stage);

// Replaces every "{key}" in `text`. Unknown placeholders are left alone.
std::string fill_template(std::string_view text,
                          std::span<const std::pair<std::string_view, std::string>> values);

// Extra line appended to the ObjectPerceiver prompt on pass `pass` (1-based)
// of `total`, so repeated runs see differently worded requests. Empty when
// there is a single pass.
std::string perceiver_variant_suffix(int pass, int total);

std::string object_perceiver_prompt(int pass, int total);
std::string attribute_step1_prompt(std::string_view object);
std::string attribute_step2_prompt(std::string_view object, std::string_view step1_response);
std::string relation_step1_prompt(std::string_view object, std::string_view other_objects,
                                  std::string_view attribute_context);
std::string relation_step2_prompt(std::string_view object, std::string_view other_objects,
                                  std::string_view step1_response);
std::string integrator_step1_prompt(std::string_view object, std::string_view other_objects,
                                    std::string_view attribute_response,
                                    std::string_view relation_response);
std::string integrator_step2_prompt(std::string_view step1_responses);
std::string formatter_prompt(std::string_view step2_responses);

// "A, B, C"
std::string join_names(const std::vector<std::string>& names);

} // namespace semanom::agent
