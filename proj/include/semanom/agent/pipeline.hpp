#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "semanom/agent/chat_backend.hpp"
#include "semanom/agent/prompts.hpp"
#include "semanom/core_model.hpp"
#include "semanom/errors.hpp"

namespace semanom::agent {

class PipelineError : public Error {
public:
    using Error::Error;
};

struct DetectedObject {
    std::string name;
    std::string description;

    bool operator==(const DetectedObject&) const = default;
};

// Case-folded, whitespace-collapsed name used to merge objects across runs.
std::string normalize_object_name(std::string_view name);

// Parses "#Name#: Description." lines. When no such line is present, falls
// back to "Name: Description" lines with short names. Lines that are not
// headers continue the previous description. Duplicates (by normalized name)
// keep their first description.
std::vector<DetectedObject> parse_object_list(std::string_view text);

// Order-preserving union of several runs, deduplicated by normalized name.
std::vector<DetectedObject> merge_object_lists(const std::vector<std::vector<DetectedObject>>& runs);

enum class CandidateOrigin { Attribute, Relation, Integrated };

std::string_view to_string(CandidateOrigin origin);
CandidateOrigin parse_candidate_origin(std::string_view text);

struct CandidateAnomaly {
    CandidateOrigin origin = CandidateOrigin::Attribute;
    std::string subject_object;
    std::string text;

    bool operator==(const CandidateAnomaly&) const = default;
};

// Splits a numbered list ("1.", "@1.", "- 1.") into its items. Text without
// numbered items but with a field label is one item; anything else is none.
std::vector<std::string> split_numbered_items(std::string_view text);

struct TokenUsage {
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;

    std::uint64_t total() const { return prompt_tokens + completion_tokens; }
    TokenUsage& operator+=(const TokenUsage& other) {
        prompt_tokens += other.prompt_tokens;
        completion_tokens += other.completion_tokens;
        return *this;
    }
    bool operator==(const TokenUsage&) const = default;
};

struct PipelineConfig {
    std::string endpoint;
    std::string model = "gpt-4o";
    int repetitions = 3; // ObjectPerceiver passes
    std::size_t parallelism = 4;
    int retry_budget = 3;
    std::chrono::milliseconds initial_backoff{500};
    std::optional<std::filesystem::path> cache_dir;
    std::string api_key_env = "OPENAI_API_KEY";
    std::chrono::seconds timeout{120};

    void validate() const;
};

// Reads either a JSON object or "key = value" lines ('#' starts a comment).
// Keys: endpoint, model, T, parallelism, retry_budget, backoff_ms, cache_dir,
// api_key_env, timeout_s.
PipelineConfig parse_pipeline_config(std::string_view text);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
nlohmann::json to_json(const PipelineConfig& config);

// One transcript entry per stage invocation that produced a reply.
struct StageRecord {
    std::string stage;
    std::string object;
    std::string cache_key;
    std::string response;
    TokenUsage tokens;

    bool operator==(const StageRecord&) const = default;
};

struct PipelineState {
    std::string image_id;
    std::string image_sha256;
    std::vector<DetectedObject> objects;
    std::map<std::string, std::vector<CandidateAnomaly>> attr_candidates;
    std::map<std::string, std::vector<CandidateAnomaly>> rel_candidates;
    std::vector<CandidateAnomaly> integrated;
    std::vector<AnomalyRecord> final_anomalies;
    std::map<std::string, TokenUsage> token_usage; // per stage, cached replies included
    std::vector<StageRecord> transcript;
    std::vector<std::string> warnings;
    nlohmann::json config_snapshot;

    TokenUsage total_tokens() const;
};

nlohmann::json to_json(const PipelineState& state);
PipelineState pipeline_state_from_json(const nlohmann::json& j);

// Content-addressed store of stage replies: <dir>/<sha256>.json.
class StageCache {
public:
    explicit StageCache(std::filesystem::path dir);

    std::optional<ChatReply> get(const std::string& key) const;
    void put(const std::string& key, const ChatReply& reply, std::string_view stage,
             std::string_view object) const;
    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
};

std::string stage_cache_key(std::string_view image_sha256, std::string_view stage,
                            std::string_view object, std::string_view prompt,
                            std::string_view model);

struct RunStats {
    std::size_t backend_calls = 0; // attempts, including retries
    std::size_t cache_hits = 0;
    TokenUsage fresh_tokens;       // tokens of replies not served from cache
};

struct PipelineResult {
    PipelineState state;
    RunStats stats;
};

// Runs all stages on one image. The image must be readable; stage failures
// degrade to empty results with a warning, except a total ObjectPerceiver
// failure, which throws PipelineError.
PipelineResult run_pipeline(const std::filesystem::path& image_path, const std::string& image_id,
                            const PipelineConfig& config, ChatBackend& backend);

// agent_raw annotation built from the final records.
ImageAnnotation to_annotation(const PipelineState& state, const std::string& image_uri);

} // namespace semanom::agent
