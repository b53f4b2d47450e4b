#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "semanom/core_model.hpp"
#include "semanom/errors.hpp"
#include "semanom/util/retry.hpp"

namespace semanom {

struct TextPair {
    std::string hypothesis;
    std::string reference;
};

// Text-to-text similarity in [0,1]. Implementations must be deterministic for
// a fixed configuration, return 1 for identical non-empty texts, and be safe
// to call from several threads.
class SimilarityBackend {
public:
    virtual ~SimilarityBackend() = default;

    virtual std::string backend_id() const = 0;
    virtual double score(std::string_view hypothesis, std::string_view reference) const = 0;
    // Default implementation scores pair by pair.
    virtual std::vector<double> score_batch(std::span<const TextPair> pairs) const;
};

// Lowercased tokens split on Unicode whitespace and punctuation.
std::vector<std::string> surrogate_tokens(std::string_view text);

// Token-overlap F1: multiset intersection over hypothesis tokens (precision)
// and reference tokens (recall), combined harmonically. Both empty -> 1,
// exactly one empty -> 0.
double surrogate_score(std::string_view hypothesis, std::string_view reference);

class SurrogateBackend final : public SimilarityBackend {
public:
    std::string backend_id() const override { return "surrogate"; }
    double score(std::string_view hypothesis, std::string_view reference) const override {
        return surrogate_score(hypothesis, reference);
    }
};

// Remote scorer failure, carrying the index of the offending pair within the
// batch that was being scored.
class ScoringError : public TransportError {
public:
    ScoringError(std::size_t pair_index, const std::string& message)
        : TransportError(message), pair_index_(pair_index) {}
    std::size_t pair_index() const { return pair_index_; }

private:
    std::size_t pair_index_;
};

// Concurrent score cache keyed by (backend_id, sha256(h), sha256(r)).
// Persisted as JSONL {"backend_id","h_hash","r_hash","score"}; identical keys
// always carry identical values, so concurrent writers simply overwrite.
class ScoreCache {
public:
    ScoreCache() = default;
    explicit ScoreCache(std::optional<std::filesystem::path> file);

    std::optional<double> get(const std::string& backend_id, const std::string& h_hash,
                              const std::string& r_hash) const;
    void put(const std::string& backend_id, const std::string& h_hash, const std::string& r_hash,
             double score);
    std::size_t size() const;

    // Appends entries added since the last flush to the backing file.
    void flush();

private:
    using Key = std::tuple<std::string, std::string, std::string>;

    std::optional<std::filesystem::path> file_;
    mutable std::shared_mutex mutex_;
    std::map<Key, double> entries_;
    std::vector<Key> unflushed_;
};

struct RemoteScorerOptions {
    // Full URL of the scoring route, e.g. http://127.0.0.1:8765/score
    std::string endpoint;
    std::string backend_id = "bertscore:distilbert-base-uncased";
    util::RetryPolicy retry{};
    std::chrono::seconds timeout{60};
    std::size_t batch_size = 256;
    std::optional<std::filesystem::path> cache_file;
};

// Client of the scoring sidecar: POST {"pairs": [[h, r], ...]} and expects
// {"scores": [f, ...]}. Scores are clamped to [0,1] and cached.
class RemoteScoreBackend final : public SimilarityBackend {
public:
    explicit RemoteScoreBackend(RemoteScorerOptions options);
    ~RemoteScoreBackend() override;

    std::string backend_id() const override { return options_.backend_id; }
    double score(std::string_view hypothesis, std::string_view reference) const override;
    std::vector<double> score_batch(std::span<const TextPair> pairs) const override;

    // HTTP attempts made so far, including failed ones and retries.
    std::size_t request_count() const { return requests_.load(); }
    const ScoreCache& cache() const { return cache_; }
    void flush_cache() { cache_.flush(); }

private:
    std::vector<double> post_batch(std::span<const TextPair> pairs, std::size_t offset) const;

    RemoteScorerOptions options_;
    mutable ScoreCache cache_;
    mutable std::atomic<std::size_t> requests_{0};
};

// One-off convenience wrapper around RemoteScoreBackend.
double remote_score(std::string_view hypothesis, std::string_view reference,
                    const std::string& endpoint);

struct ViewScore {
    double phe = 0.0;
    double rea = 0.0;
    double full = 0.0;

    double get(View view) const;
    bool operator==(const ViewScore&) const = default;
};

// alpha * phe + (1 - alpha) * rea
double mix_full(double phe, double rea, double alpha);

// Compares phenomenon with phenomenon and reasoning with reasoning. Name and
// severity never contribute.
ViewScore view_similarity(const AnomalyRecord& pred, const AnomalyRecord& gt,
                          const SimilarityConfig& cfg, const SimilarityBackend& backend);

// Builds a backend from an id: "surrogate" or "remote" (needs options).
std::unique_ptr<SimilarityBackend> make_similarity_backend(
    std::string_view id, const std::optional<RemoteScorerOptions>& remote = std::nullopt);

} // namespace semanom
