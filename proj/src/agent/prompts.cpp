#include "semanom/agent/prompts.hpp"

#include <array>

#include <fmt/format.h>

namespace semanom::agent {

namespace {

constexpr std::string_view kObjectPerceiver = R"PROMPT(**Task:** Analyze all objects and individuals in the image. For each object or individual, provide a detailed, accurate, and comprehensive description, while identifying any inconsistencies, anomalies, or illogical aspects. Ensure no object or body part is omitted.

**Follow the steps below and provide your analysis in the structured format specified:**
- Identify and describe all objects and individuals in the image.
- For each object or individual, provide a detailed, accurate, and comprehensive description.
- Highlight any inconsistencies, anomalies, or illogical aspects in:
  - **Shape and Structure**: Are there distortions, missing parts, or unnatural forms?
  - **Material and Texture**: Are there abrupt texture changes or mismatches?
  - **Lighting and Shadows**: Are the lighting and shadows consistent with the environment?
  - **Physical Properties**: Are there any violations of real-world physics or logic (e.g., floating objects)?
  - **Common Sense Verification**: Are there any semantic inconsistencies (e.g., a door handle on a chair)?
  - **Human Anatomy (if applicable)**: Identify unnatural features such as missing limbs, extra fingers, or disproportionate body parts.

**Output Format:**
Each object/body part should be described individually in the following structured format:

#Name#: Detailed Description.

#Name#: Detailed Description.

**Example Output:**
Person: A man with three arms, one of which is unnaturally attached to his back. He wears a blue jacket.
Chair: A wooden chair that appears to be floating without support, casting no shadow.
Dog: A golden retriever with two tails, one of which is blurry and semi-transparent.

Highlight all implausible, unnatural, or inconsistent details while ensuring full coverage of the image content. Only output the list in the specified format.)PROMPT";

constexpr std::string_view kAttributeStep1 = R"PROMPT(**Task**: Analyze **{current_object}** in the image.

Focus on analyzing and identifying any anomalies in the following aspects:

1. **Shape and Structure**
   - Are there unnatural forms or distortions?
   - Are proportions consistent with the object's design?
2. **Functionality**
   - Does the object behave logically in real-world scenarios?
   - Are there physical impossibilities (e.g., unsupported structures)?
3. **Human Body Structure Verification** (if applicable)
   - Are limbs, fingers, and facial features correctly placed and proportional?
   - Are there unnatural fusions, duplications, or disconnections?

**Deliverable**:
- Highlight all implausible, unnatural, or inconsistent details.
- Ensure a thorough analysis that covers all aspects of the image content.
- Provide concise, evidence-based explanations for all findings.)PROMPT";

constexpr std::string_view kAttributeStep2 = R"PROMPT(**Object:** **{current_object}**
**Description Input:** {attribute_step1_response}

**Task**: Analyze the detailed description of **{current_object}** and identify all unreasonable, contradictory, or physically impossible details specific to this object.

**Provide a structured list of issues using the following format:**
- **Abnormal Phenomenon Name**: The name of the observed anomaly.
- **Observed Issue**: The unnatural feature found.
- **Explanation**: Why this characteristic is unrealistic.

**Example Output:**
1. **Abnormal Phenomenon Name**: Streetlight No Power
   **Observed Issue**: The streetlight is glowing but has no power source or wiring.
   **Explanation**: A streetlight requires an electrical connection to function, and no wires or batteries are visible.

**Instructions:**
- Analyze **only** {current_object}.
- Output **only** issues directly related to {current_object}, using the specified format.)PROMPT";

constexpr std::string_view kRelationStep1 = R"PROMPT(**Task**: Analyze the spatial and logical relationships between **{current_object}** and the following objects: (*{other_objects}*).

You should evaluate:
- One-to-one relationships (e.g., **{current_object}** with each object)
- One-to-many relationships (e.g., **{current_object}** in relation to multiple objects collectively)

**Context Descriptions**:
{attribute_context}

**Focus Areas**:
1. **Perspective Errors**: Are objects placed in impossible or illogical locations relative to **{current_object}**?
2. **Physical Interactions**: Are there unnatural interactions (e.g., floating without support, overlapping unnaturally)?
3. **Logical Contradictions**: Are there contradictions with real-world behavior or common-sense logic?

**Instructions**:
- Focus analysis on **{current_object}** as the primary subject.
- For **one-to-one relationships**, evaluate individual pairings.
- For **one-to-many relationships**, consider collective spatial, logical, and contextual coherence.

**Output Format** (structured report for each issue):
- **Relationship**: Describe the relationship being analyzed.
- **Observed Issue**: Detail the anomaly or inconsistency.
- **Explanation**: Explain why the issue is illogical or unrealistic.

**Deliverables**:
- Analyze all one-to-one and one-to-many relationships involving **{current_object}**.
- Ensure detailed reasoning and structured output for each detected issue.)PROMPT";

constexpr std::string_view kRelationStep2 = R"PROMPT(**Relation Input:** {relation_step1_response}

**Focus Object**: The primary subject of analysis is **{current_object}**. All evaluations should center on **{current_object}** and its relationships with the following objects: (*{other_objects}*).

**Task**: Based on the prior relationship analysis, analyze and summarize the relationships between **{current_object}** and the listed objects. Emphasize detection of logical contradictions, physical impossibilities, and semantic anomalies.

**Key Aspects to Evaluate**:
1. **Logical Coherence**: Are the relationships internally consistent?
   - Example: An object cannot be both inside and outside another simultaneously.
2. **Physical Realism**: Do the relationships conform to real-world physical laws?
   - Example: Objects should not float without visible support.
3. **Semantic Plausibility**: Are the interactions meaningful and contextually appropriate?
   - Example: A dog “wearing” a cloud is not semantically plausible.
4. **Causal Consistency**: Do object states logically follow from their relationships?
   - Example: A book balanced on a steep slope should be expected to fall.

**Output Format**: For each detected anomaly, provide a structured report as follows:
- **Objects Involved**: List the relevant objects (including **{current_object}**).
- **Observed Issue**: Describe the logical, physical, or semantic anomaly.
- **Reasoning**: Justify why this relationship is unnatural, implausible, or illogical.

**Instructions**:
- Focus exclusively on **{current_object}** and its relationships.
- Evaluate both individual (one-to-one) and group (one-to-many) relationships.)PROMPT";

constexpr std::string_view kIntegratorStep1 = R"PROMPT(Description for **{current_object}**: {attribute_response}
Relationships of **{current_object}** with other objects (**{other_objects}**): {relation_response}

**Task**: Review and analyze the detailed **Description** and **Relationships** of **{current_object}**. Summarize all unreasonable, contradictory, or physically impossible details related to **{current_object}**, while consolidating similar or repeated anomalies into a comprehensive report.

**Focus Areas**:
1. **Contradictory Details**: Identify conflicting statements or relationships (e.g., "floating" vs. "resting on the ground").
2. **Unnatural Behaviors**: Highlight features or actions implausible in real-world settings.
3. **Spatial Inconsistencies**: Detect impossible locations or orientations for **{current_object}** or others.
4. **Illogical Physical Properties**: Point out violations of physics or reality (e.g., water flowing upward).

**Instructions**:
- Consolidate similar anomalies from both **Description** and **Relationships**.
- Center all findings around **{current_object}** and its interactions with other objects.

**Output Format** (structured list):
1. **Observed Phenomenon**: *Brief summary of the inconsistency*
   - **Sources**: Indicate if the issue comes from the **Description**, **Relationships**, or **Both**.
   - **Details**: Provide specific observations related to the anomaly.
   - **Explanation**: Justify why the phenomenon is contradictory, unnatural, or implausible.

**Deliverables**:
- Focus exclusively on **{current_object}**.
- Consolidate and summarize issues across **Description** and **Relationships**.
- Output only the structured list in the specified format.)PROMPT";

constexpr std::string_view kIntegratorStep2 = R"PROMPT(**Anomalies:** {integrator_step1_response}

**Task**: Summarize and categorize all detected unnatural, illogical, or inconsistent phenomena in the image.

**For each issue, provide:**
1. **Object Name**: Clearly identify the object(s) involved.
2. **Phenomenon**: Describe the unnatural or illogical aspect of the object(s).
3. **Explanation**: Explain why this phenomenon is unrealistic, referencing real-world physics, anatomy, perspective, or common sense.

**Output Format**:
Provide a structured list using the format below:

**Example Output:**
1. **Object Name**: Tree
   **Phenomenon**: The tree trunk bends at an impossible 90-degree angle.
   **Explanation**: Real trees cannot grow in this shape due to gravitational constraints.
2. **Object Name**: Dog
   **Phenomenon**: The dog has three tails, one of which is semi-transparent.
   **Explanation**: This is anatomically impossible for dogs.

**Instructions**:
- Only output the list in the specified format.
- Ensure each anomaly is clearly tied to a specific object.
- Exclude unrelated content or commentary.)PROMPT";

constexpr std::string_view kFormatter = R"PROMPT(**The following are a list of pre-selected anomalies:**
{integrator_step2_response}

**Task**: From the list above, identify and summarize the **visually prominent and semantically significant anomalies** observed in the image.

You must analyze, consolidate, and explain each anomaly in a way that is **logical, detailed, and persuasive**, as if communicating to both experts and non-experts.

**Instructions**:

1. **Merge Similar or Redundant Anomalies**
   - Group phenomena sharing a common cause, concept, or visual effect.
   - Avoid repetition by merging entries describing the same core issue.
2. **Resolve Contradictions Thoughtfully**
   - If descriptions conflict, reconcile them using physical laws, biological plausibility, and visual logic.
   - Summarize both viewpoints if both are partially valid.
3. **Filter Out Non-Visible or Insignificant Issues**
   - Omit anomalies that are not visually apparent (e.g., minor texture noise).
   - Focus on what is **clearly and prominently visible**.
4. **Justify with Real-World Logic**
   - Support each anomaly with logical, physical, anatomical, or functional reasoning.
5. **Do Not Parrot the Input**
   - Rephrase and reinterpret anomalies based on visual evidence and contextual understanding.
6. **Ensure Coverage**
   - All input anomalies must be included, either directly or through consolidation.

**Output Format**: Write a **numbered list**. For each entry, use the following structure:

@1. **Name**: [Descriptive title of the anomaly]
- **Observed Phenomenon**:
   - Describe what is visibly wrong in visual terms.
   - Include positions, shapes, textures, or contextual oddities.
   - Ensure clarity without needing to see the image.
- **Reasoning**:
   - Explain why this is implausible.
   - Support with physical laws, anatomy, real-world logic,
   or social context.
- **Severity Score**: [0–100; 0 = fully unrealistic,
   100 = fully realistic]

**Example Output**:

1. **Name**: Abnormal number of hands
   **Observed Phenomenon**: The individual on the left has *two left hands*, one emerging from the elbow and overlapping with the sleeve. Both hands share identical orientation and lack anatomical continuity.
   **Reasoning**: Human anatomy allows one left and one right hand. Two left hands in such arrangement violate biological symmetry and visual plausibility.
   **Severity Score**: 5/100 (highly unrealistic)
2. **Name**: Suspended chair without support
   **Observed Phenomenon**: A wooden chair is floating approximately 30 cm above the ground without visible support or shadows.
   **Reasoning**: Gravity requires contact or suspension; absence of legs, shadows, or wires defies physical realism.
   **Severity Score**: 10/100 (extremely unnatural)

**Final Notes**:
- Output only the structured list in the format above.
- Think critically. Be precise, complete, and persuasive.
- Provide a human-understandable summary of core visual anomalies in the image.)PROMPT";

// Cycled across perceiver passes; pass 1 keeps the base wording's emphasis.
constexpr std::array<std::string_view, 3> kPerceiverFocus = {
    "people, faces, hands and other body parts",
    "small, partially hidden and background objects",
    "objects that touch, hold or support one another",
};

} // namespace

std::string_view stage_name(Stage stage) {
    switch (stage) {
    case Stage::ObjectPerceiver: return "object_perceiver";
    case Stage::AttributeStep1: return "attribute_step1";
    case Stage::AttributeStep2: return "attribute_step2";
    case Stage::RelationStep1: return "relation_step1";
    case Stage::RelationStep2: return "relation_step2";
    case Stage::IntegratorStep1: return "integrator_step1";
    case Stage::IntegratorStep2: return "integrator_step2";
    case Stage::Formatter: return "formatter";
    }
    return "unknown";
}

std::string_view prompt_template(Stage stage) {
    switch (stage) {
    case Stage::ObjectPerceiver: return kObjectPerceiver;
    case Stage::AttributeStep1: return kAttributeStep1;
    case Stage::AttributeStep2: return kAttributeStep2;
    case Stage::RelationStep1: return kRelationStep1;
    case Stage::RelationStep2: return kRelationStep2;
    case Stage::IntegratorStep1: return kIntegratorStep1;
    case Stage::IntegratorStep2: return kIntegratorStep2;
    case Stage::Formatter: return kFormatter;
    }
    return {};
}

std::string fill_template(std::string_view text,
                          std::span<const std::pair<std::string_view, std::string>> values) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '{') {
            const auto close = text.find('}', i);
            if (close != std::string_view::npos) {
                const auto key = text.substr(i + 1, close - i - 1);
                bool replaced = false;
                for (const auto& [k, v] : values) {
                    if (k == key) {
                        out += v;
                        replaced = true;
                        break;
                    }
                }
                if (replaced) {
                    i = close + 1;
                    continue;
                }
            }
        }
        out += text[i++];
    }
    return out;
}

std::string perceiver_variant_suffix(int pass, int total) {
    if (total <= 1) return {};
    const auto& focus = kPerceiverFocus[static_cast<std::size_t>(pass - 1) % kPerceiverFocus.size()];
    return fmt::format("\n\n(Pass {} of {}. Pay particular attention to {}.)", pass, total, focus);
}

std::string object_perceiver_prompt(int pass, int total) {
    return std::string(kObjectPerceiver) + perceiver_variant_suffix(pass, total);
}

std::string attribute_step1_prompt(std::string_view object) {
    const std::pair<std::string_view, std::string> v[] = {{"current_object", std::string(object)}};
    return fill_template(kAttributeStep1, v);
}

std::string attribute_step2_prompt(std::string_view object, std::string_view step1_response) {
    const std::pair<std::string_view, std::string> v[] = {
        {"current_object", std::string(object)},
        {"attribute_step1_response", std::string(step1_response)},
    };
    return fill_template(kAttributeStep2, v);
}

std::string relation_step1_prompt(std::string_view object, std::string_view other_objects,
                                  std::string_view attribute_context) {
    const std::pair<std::string_view, std::string> v[] = {
        {"current_object", std::string(object)},
        {"other_objects", std::string(other_objects)},
        {"attribute_context", std::string(attribute_context)},
    };
    return fill_template(kRelationStep1, v);
}

std::string relation_step2_prompt(std::string_view object, std::string_view other_objects,
                                  std::string_view step1_response) {
    const std::pair<std::string_view, std::string> v[] = {
        {"current_object", std::string(object)},
        {"other_objects", std::string(other_objects)},
        {"relation_step1_response", std::string(step1_response)},
    };
    return fill_template(kRelationStep2, v);
}

std::string integrator_step1_prompt(std::string_view object, std::string_view other_objects,
                                    std::string_view attribute_response,
                                    std::string_view relation_response) {
    const std::pair<std::string_view, std::string> v[] = {
        {"current_object", std::string(object)},
        {"other_objects", std::string(other_objects)},
        {"attribute_response", std::string(attribute_response)},
        {"relation_response", std::string(relation_response)},
    };
    return fill_template(kIntegratorStep1, v);
}

std::string integrator_step2_prompt(std::string_view step1_responses) {
    const std::pair<std::string_view, std::string> v[] = {
        {"integrator_step1_response", std::string(step1_responses)}};
    return fill_template(kIntegratorStep2, v);
}

std::string formatter_prompt(std::string_view step2_responses) {
    const std::pair<std::string_view, std::string> v[] = {
        {"integrator_step2_response", std::string(step2_responses)}};
    return fill_template(kFormatter, v);
}

std::string join_names(const std::vector<std::string>& names) {
    return fmt::format("{}", fmt::join(names, ", "));
}

} // namespace semanom::agent
