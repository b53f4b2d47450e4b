#include "semanom/agent/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "semanom/anomaly_parser.hpp"
#include "semanom/dataset_io.hpp"
#include "semanom/util/hash.hpp"
#include "semanom/util/parallel.hpp"
#include "semanom/util/retry.hpp"

namespace semanom::agent {

using nlohmann::json;

// ---------------------------------------------------------------- config

void PipelineConfig::validate() const {
    if (repetitions < 1) throw ValidationError(fmt::format("T must be >= 1 (got {})", repetitions));
    if (parallelism < 1) throw ValidationError("parallelism must be >= 1");
    if (retry_budget < 0) throw ValidationError("retry_budget must be >= 0");
    if (model.empty()) throw ValidationError("model must not be empty");
}

namespace {

void apply_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value) {
    auto as_int = [&](long long lo) {
        try {
            std::size_t used = 0;
            const auto v = std::stoll(value, &used);
            if (used != value.size() || v < lo) throw std::invalid_argument(value);
            return v;
        } catch (const std::exception&) {
            throw ValidationError(fmt::format("config key '{}' needs an integer >= {} (got '{}')", key, lo, value));
        }
    };
    if (key == "endpoint") cfg.endpoint = value;
    else if (key == "model") cfg.model = value;
    else if (key == "T" || key == "repetitions") cfg.repetitions = static_cast<int>(as_int(1));
    else if (key == "parallelism") cfg.parallelism = static_cast<std::size_t>(as_int(1));
    else if (key == "retry_budget") cfg.retry_budget = static_cast<int>(as_int(0));
    else if (key == "backoff_ms") cfg.initial_backoff = std::chrono::milliseconds(as_int(0));
    else if (key == "cache_dir") cfg.cache_dir = value.empty() ? std::nullopt : std::optional<std::filesystem::path>(value);
    else if (key == "api_key_env") cfg.api_key_env = value;
    else if (key == "timeout_s") cfg.timeout = std::chrono::seconds(as_int(1));
    else throw ValidationError(fmt::format("unknown config key '{}'", key));
}

} // namespace

PipelineConfig parse_pipeline_config(std::string_view text) {
    PipelineConfig cfg;
    const auto body = trim(text);
    if (!body.empty() && body.front() == '{') {
        json j;
        try {
            j = json::parse(body);
        } catch (const json::parse_error& e) {
            throw ValidationError(fmt::format("config is not valid JSON: {}", e.what()));
        }
        for (const auto& [key, value] : j.items()) {
            apply_config_value(cfg, key, value.is_string() ? value.get<std::string>() : value.dump());
        }
    } else {
        std::istringstream in{std::string(text)};
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const auto stripped = trim(line);
            if (stripped.empty()) continue;
            const auto eq = stripped.find('=');
            if (eq == std::string::npos)
                throw ValidationError(fmt::format("config line {}: expected key = value", line_no));
            apply_config_value(cfg, trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
        }
    }
    cfg.validate();
    return cfg;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    auto cfg = parse_pipeline_config(read_text_file(path));
    // A relative cache directory is taken relative to the config file.
    if (cfg.cache_dir && cfg.cache_dir->is_relative() && path.has_parent_path())
        cfg.cache_dir = path.parent_path() / *cfg.cache_dir;
    return cfg;
}

json to_json(const PipelineConfig& config) {
    return {{"endpoint", config.endpoint},
            {"model", config.model},
            {"T", config.repetitions},
            {"parallelism", config.parallelism},
            {"retry_budget", config.retry_budget},
            {"backoff_ms", config.initial_backoff.count()},
            {"cache_dir", config.cache_dir ? config.cache_dir->string() : ""},
            {"api_key_env", config.api_key_env},
            {"timeout_s", config.timeout.count()}};
}

// ---------------------------------------------------------------- state

TokenUsage PipelineState::total_tokens() const {
    TokenUsage total;
    for (const auto& [stage, usage] : token_usage) total += usage;
    return total;
}

namespace {

json usage_json(const TokenUsage& u) {
    return {{"prompt_tokens", u.prompt_tokens}, {"completion_tokens", u.completion_tokens}};
}

TokenUsage usage_from_json(const json& j) {
    return {j.at("prompt_tokens").get<std::uint64_t>(), j.at("completion_tokens").get<std::uint64_t>()};
}

json candidates_json(const std::vector<CandidateAnomaly>& list) {
    json out = json::array();
    for (const auto& c : list)
        out.push_back({{"origin", to_string(c.origin)}, {"subject_object", c.subject_object}, {"text", c.text}});
    return out;
}

std::vector<CandidateAnomaly> candidates_from_json(const json& j) {
    std::vector<CandidateAnomaly> out;
    for (const auto& c : j)
        out.push_back({parse_candidate_origin(c.at("origin").get<std::string>()),
                       c.value("subject_object", ""), c.at("text").get<std::string>()});
    return out;
}

} // namespace

json to_json(const PipelineState& state) {
    json objects = json::array();
    for (const auto& o : state.objects) objects.push_back({{"name", o.name}, {"description", o.description}});
    json attr = json::object();
    for (const auto& [k, v] : state.attr_candidates) attr[k] = candidates_json(v);
    json rel = json::object();
    for (const auto& [k, v] : state.rel_candidates) rel[k] = candidates_json(v);
    json final_list = json::array();
    for (const auto& r : state.final_anomalies) final_list.push_back(to_json(r));
    json usage = json::object();
    for (const auto& [k, v] : state.token_usage) usage[k] = usage_json(v);
    json transcript = json::array();
    for (const auto& r : state.transcript) {
        transcript.push_back({{"stage", r.stage},
                              {"object", r.object},
                              {"cache_key", r.cache_key},
                              {"response", r.response},
                              {"tokens", usage_json(r.tokens)}});
    }
    return {{"image_id", state.image_id},
            {"image_sha256", state.image_sha256},
            {"objects", objects},
            {"attr_candidates", attr},
            {"rel_candidates", rel},
            {"integrated", candidates_json(state.integrated)},
            {"final", final_list},
            {"token_usage", usage},
            {"token_total", usage_json(state.total_tokens())},
            {"transcript", transcript},
            {"warnings", state.warnings},
            {"config_snapshot", state.config_snapshot}};
}

PipelineState pipeline_state_from_json(const json& j) {
    PipelineState s;
    s.image_id = j.at("image_id").get<std::string>();
    s.image_sha256 = j.value("image_sha256", "");
    for (const auto& o : j.at("objects"))
        s.objects.push_back({o.at("name").get<std::string>(), o.value("description", "")});
    for (const auto& [k, v] : j.at("attr_candidates").items()) s.attr_candidates[k] = candidates_from_json(v);
    for (const auto& [k, v] : j.at("rel_candidates").items()) s.rel_candidates[k] = candidates_from_json(v);
    s.integrated = candidates_from_json(j.at("integrated"));
    for (const auto& r : j.at("final")) s.final_anomalies.push_back(anomaly_from_json(r));
    for (const auto& [k, v] : j.at("token_usage").items()) s.token_usage[k] = usage_from_json(v);
    for (const auto& r : j.value("transcript", json::array())) {
        s.transcript.push_back({r.at("stage").get<std::string>(), r.value("object", ""),
                                r.value("cache_key", ""), r.at("response").get<std::string>(),
                                usage_from_json(r.at("tokens"))});
    }
    s.warnings = j.value("warnings", std::vector<std::string>{});
    s.config_snapshot = j.value("config_snapshot", json::object());
    return s;
}

ImageAnnotation to_annotation(const PipelineState& state, const std::string& image_uri) {
    ImageAnnotation a;
    a.image_id = state.image_id;
    a.image_uri = image_uri;
    a.anomalies = state.final_anomalies;
    a.provenance = Provenance::AgentRaw;
    return a;
}

// ---------------------------------------------------------------- cache

std::string stage_cache_key(std::string_view image_sha256, std::string_view stage,
                            std::string_view object, std::string_view prompt, std::string_view model) {
    return util::sha256_hex(
        fmt::format("{}\n{}\n{}\n{}\n{}", image_sha256, stage, object, util::sha256_hex(prompt), model));
}

StageCache::StageCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::optional<ChatReply> StageCache::get(const std::string& key) const {
    const auto path = dir_ / (key + ".json");
    std::ifstream in(path);
    if (!in) return std::nullopt;
    try {
        const auto j = json::parse(in);
        return ChatReply{j.at("text").get<std::string>(), j.at("prompt_tokens").get<std::uint64_t>(),
                         j.at("completion_tokens").get<std::uint64_t>()};
    } catch (const json::exception& e) {
        spdlog::warn("ignoring unreadable cache entry {}: {}", path.string(), e.what());
        return std::nullopt;
    }
}

void StageCache::put(const std::string& key, const ChatReply& reply, std::string_view stage,
                     std::string_view object) const {
    const json j = {{"stage", stage},
                    {"object", object},
                    {"text", reply.text},
                    {"prompt_tokens", reply.prompt_tokens},
                    {"completion_tokens", reply.completion_tokens}};
    // Write-then-rename so a concurrent reader never sees a partial file.
    static std::atomic<unsigned> counter{0};
    const auto tmp = dir_ / fmt::format("{}.json.tmp{}", key, counter.fetch_add(1));
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IoError(fmt::format("cannot write cache entry '{}'", tmp.string()));
        out << j.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, dir_ / (key + ".json"));
}

// ---------------------------------------------------------------- runner

namespace {

std::string image_mime(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".webp") return "image/webp";
    if (ext == ".gif") return "image/gif";
    if (ext == ".bmp") return "image/bmp";
    return "application/octet-stream";
}

std::string join_texts(const std::vector<CandidateAnomaly>& list) {
    std::string out;
    for (const auto& c : list) {
        if (!out.empty()) out += "\n\n";
        out += c.text;
    }
    return out.empty() ? std::string("None reported.") : out;
}

struct CallOutcome {
    std::optional<ChatReply> reply;
    std::string error;
};

struct ObjectWork {
    std::vector<StageRecord> records;
    std::vector<CandidateAnomaly> attr;
    std::vector<CandidateAnomaly> rel;
    std::vector<std::string> warnings;
};

class Runner {
public:
    Runner(const PipelineConfig& config, ChatBackend& backend, std::string image_sha,
           std::string image_url)
        : config_(config), backend_(backend), image_sha_(std::move(image_sha)),
          image_url_(std::move(image_url)) {
        if (config_.cache_dir) cache_.emplace(*config_.cache_dir);
    }

    // Sends one stage prompt (image attached) through cache and retries.
    CallOutcome call(Stage stage, const std::string& object, const std::string& prompt,
                     std::vector<StageRecord>& records) {
        const auto name = std::string(stage_name(stage));
        const auto key = stage_cache_key(image_sha_, name, object, prompt, config_.model);
        if (cache_) {
            if (auto hit = cache_->get(key)) {
                cache_hits_.fetch_add(1);
                records.push_back({name, object, key, hit->text, {hit->prompt_tokens, hit->completion_tokens}});
                return {std::move(hit), {}};
            }
        }

        ChatRequest request;
        request.model = config_.model;
        request.stage = name;
        request.object = object;
        ChatMessage message;
        message.content.push_back({ContentPart::Kind::Text, prompt, {}});
        message.content.push_back({ContentPart::Kind::Image, {}, image_url_});
        request.messages.push_back(std::move(message));

        const util::RetryPolicy policy{config_.retry_budget, config_.initial_backoff, 2.0};
        try {
            auto reply = util::with_retries(policy, [&] {
                calls_.fetch_add(1);
                return backend_.send(request);
            });
            {
                std::lock_guard lock(fresh_mutex_);
                fresh_ += TokenUsage{reply.prompt_tokens, reply.completion_tokens};
            }
            if (cache_) cache_->put(key, reply, name, object);
            records.push_back({name, object, key, reply.text, {reply.prompt_tokens, reply.completion_tokens}});
            return {std::move(reply), {}};
        } catch (const Error& e) {
            return {std::nullopt, e.what()};
        }
    }

    RunStats stats() const {
        std::lock_guard lock(fresh_mutex_);
        return {calls_.load(), cache_hits_.load(), fresh_};
    }

private:
    const PipelineConfig& config_;
    ChatBackend& backend_;
    std::string image_sha_;
    std::string image_url_;
    std::optional<StageCache> cache_;
    std::atomic<std::size_t> calls_{0};
    std::atomic<std::size_t> cache_hits_{0};
    mutable std::mutex fresh_mutex_;
    TokenUsage fresh_;
};

std::vector<CandidateAnomaly> to_candidates(const std::string& text, CandidateOrigin origin,
                                            const std::string& object) {
    std::vector<CandidateAnomaly> out;
    for (auto& item : split_numbered_items(text)) out.push_back({origin, object, std::move(item)});
    return out;
}

// Attribute analysis followed by relation reasoning for one object.
ObjectWork mine_object(Runner& runner, const DetectedObject& obj, const std::vector<DetectedObject>& all) {
    ObjectWork work;
    const auto& name = obj.name;

    auto a1 = runner.call(Stage::AttributeStep1, name, attribute_step1_prompt(name), work.records);
    if (!a1.reply) {
        work.warnings.push_back(fmt::format("attribute analysis of '{}' failed: {}", name, a1.error));
    } else {
        auto a2 = runner.call(Stage::AttributeStep2, name, attribute_step2_prompt(name, a1.reply->text),
                              work.records);
        if (!a2.reply)
            work.warnings.push_back(fmt::format("attribute structuring of '{}' failed: {}", name, a2.error));
        else
            work.attr = to_candidates(a2.reply->text, CandidateOrigin::Attribute, name);
    }

    std::vector<std::string> others;
    for (const auto& o : all)
        if (normalize_object_name(o.name) != normalize_object_name(name)) others.push_back(o.name);
    if (others.empty()) return work; // no relation to reason about

    const auto others_text = join_names(others);
    auto r1 = runner.call(Stage::RelationStep1, name,
                          relation_step1_prompt(name, others_text, join_texts(work.attr)), work.records);
    if (!r1.reply) {
        work.warnings.push_back(fmt::format("relation analysis of '{}' failed: {}", name, r1.error));
        return work;
    }
    auto r2 = runner.call(Stage::RelationStep2, name, relation_step2_prompt(name, others_text, r1.reply->text),
                          work.records);
    if (!r2.reply)
        work.warnings.push_back(fmt::format("relation structuring of '{}' failed: {}", name, r2.error));
    else
        work.rel = to_candidates(r2.reply->text, CandidateOrigin::Relation, name);
    return work;
}

} // namespace

PipelineResult run_pipeline(const std::filesystem::path& image_path, const std::string& image_id,
                            const PipelineConfig& config, ChatBackend& backend) {
    config.validate();
    std::ifstream in(image_path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot read image '{}'", image_path.string()));
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError(fmt::format("error reading image '{}'", image_path.string()));

    PipelineState state;
    state.image_id = image_id;
    state.image_sha256 = util::sha256_hex(bytes);
    state.config_snapshot = to_json(config);
    for (Stage s : kAllStages) state.token_usage[std::string(stage_name(s))] = {};

    Runner runner(config, backend, state.image_sha256,
                  fmt::format("data:{};base64,{}", image_mime(image_path), util::base64_encode(bytes)));

    // Stage 1: T perceiver passes, merged by name.
    const auto T = static_cast<std::size_t>(config.repetitions);
    std::vector<std::vector<StageRecord>> pass_records(T);
    std::vector<std::optional<std::vector<DetectedObject>>> passes(T);
    std::vector<std::string> pass_errors(T);
    util::parallel_for(T, config.parallelism, [&](std::size_t t) {
        const int pass = static_cast<int>(t) + 1;
        auto out = runner.call(Stage::ObjectPerceiver, fmt::format("pass{}", pass),
                               object_perceiver_prompt(pass, config.repetitions), pass_records[t]);
        if (out.reply) passes[t] = parse_object_list(out.reply->text);
        else pass_errors[t] = out.error;
    });
    std::vector<std::vector<DetectedObject>> ok_runs;
    for (std::size_t t = 0; t < T; ++t) {
        for (auto& r : pass_records[t]) state.transcript.push_back(std::move(r));
        if (passes[t]) ok_runs.push_back(std::move(*passes[t]));
        else state.warnings.push_back(fmt::format("object perception pass {} failed: {}", t + 1, pass_errors[t]));
    }
    if (ok_runs.empty())
        throw PipelineError(fmt::format("image '{}': all {} object perception passes failed; last error: {}",
                                        image_id, T, pass_errors.back()));
    state.objects = merge_object_lists(ok_runs);
    if (state.objects.empty()) state.warnings.push_back("object perception found no objects");

    // Stage 2: objects in parallel, attribute before relation within each.
    std::vector<ObjectWork> work(state.objects.size());
    util::parallel_for(state.objects.size(), config.parallelism,
                       [&](std::size_t i) { work[i] = mine_object(runner, state.objects[i], state.objects); });
    bool any_candidates = false;
    for (std::size_t i = 0; i < work.size(); ++i) {
        const auto& name = state.objects[i].name;
        for (auto& r : work[i].records) state.transcript.push_back(std::move(r));
        for (auto& w : work[i].warnings) state.warnings.push_back(std::move(w));
        any_candidates = any_candidates || !work[i].attr.empty() || !work[i].rel.empty();
        state.attr_candidates[name] = work[i].attr;
        state.rel_candidates[name] = work[i].rel;
    }

    if (!any_candidates) {
        state.warnings.push_back("no candidate anomalies; integration and formatting skipped");
    } else {
        // Stage 3a: per-object consolidation.
        std::vector<std::optional<std::string>> step1(state.objects.size());
        std::vector<std::vector<StageRecord>> step1_records(state.objects.size());
        std::vector<std::string> step1_warnings(state.objects.size());
        util::parallel_for(state.objects.size(), config.parallelism, [&](std::size_t i) {
            const auto& name = state.objects[i].name;
            if (work[i].attr.empty() && work[i].rel.empty()) return;
            std::vector<std::string> others;
            for (const auto& o : state.objects)
                if (o.name != name) others.push_back(o.name);
            auto out = runner.call(Stage::IntegratorStep1, name,
                                   integrator_step1_prompt(name, join_names(others), join_texts(work[i].attr),
                                                           join_texts(work[i].rel)),
                                   step1_records[i]);
            if (out.reply) {
                step1[i] = out.reply->text;
            } else {
                step1_warnings[i] = fmt::format("integration of '{}' failed, passing raw candidates on: {}",
                                                name, out.error);
                auto raw = work[i].attr;
                raw.insert(raw.end(), work[i].rel.begin(), work[i].rel.end());
                step1[i] = join_texts(raw);
            }
        });

        std::string merged;
        for (std::size_t i = 0; i < state.objects.size(); ++i) {
            for (auto& r : step1_records[i]) state.transcript.push_back(std::move(r));
            if (!step1_warnings[i].empty()) state.warnings.push_back(step1_warnings[i]);
            if (!step1[i]) continue;
            const auto& name = state.objects[i].name;
            auto items = to_candidates(*step1[i], CandidateOrigin::Integrated, name);
            if (items.empty()) items.push_back({CandidateOrigin::Integrated, name, trim(*step1[i])});
            for (auto& c : items) state.integrated.push_back(std::move(c));
            if (!merged.empty()) merged += "\n\n";
            merged += fmt::format("Object: {}\n{}", name, *step1[i]);
        }

        // Stage 3b: global consolidation, then formatting.
        std::string formatter_input = merged;
        auto s2 = runner.call(Stage::IntegratorStep2, "", integrator_step2_prompt(merged), state.transcript);
        if (s2.reply)
            formatter_input = s2.reply->text;
        else
            state.warnings.push_back(fmt::format("global integration failed, formatting per-object results: {}", s2.error));

        auto fmt_out = runner.call(Stage::Formatter, "", formatter_prompt(formatter_input), state.transcript);
        if (!fmt_out.reply) {
            state.warnings.push_back(fmt::format("formatting failed: {}", fmt_out.error));
        } else {
            auto report = parse_structured_list(fmt_out.reply->text);
            for (const auto& s : report.skipped_blocks)
                state.warnings.push_back(fmt::format("formatter block {} skipped: {}", s.block_index + 1, s.reason));
            if (report.records.empty()) state.warnings.push_back("formatter output had no parseable anomalies");
            for (auto& r : report.records) {
                validate(r);
                state.final_anomalies.push_back(std::move(r));
            }
        }
    }

    for (const auto& r : state.transcript) state.token_usage[r.stage] += r.tokens;
    return {std::move(state), runner.stats()};
}

} // namespace semanom::agent
