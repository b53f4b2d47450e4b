#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "semanom/core_model.hpp"

namespace semanom::review {

struct ItemKey {
    std::string image_id;
    std::size_t anomaly_index = 0;

    auto operator<=>(const ItemKey&) const = default;
};

std::string to_string(const ItemKey& key); // "image_id#index"

struct QueueItem {
    ItemKey key;
    AnomalyRecord anomaly;
    std::string image_uri;
};

struct Progress {
    std::size_t total = 0;
    std::size_t pending = 0;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t unsure = 0;

    bool operator==(const Progress&) const = default;
};

nlohmann::json to_json(const Progress& progress);

// Candidate list plus the decisions implied by a verdict log. A pure function
// of (annotations, verdicts applied in order): the latest verdict for an item
// governs, whoever submitted it.
class ReviewQueue {
public:
    ReviewQueue() = default;
    explicit ReviewQueue(std::span<const ImageAnnotation> annotations);

    // Throws NotFoundError for an unknown item.
    void apply(const Verdict& verdict);

    const std::vector<QueueItem>& items() const { return items_; }
    const QueueItem* find(const ItemKey& key) const;
    std::optional<Decision> decision(const ItemKey& key) const;
    const Verdict* latest_verdict(const ItemKey& key) const;
    Progress progress() const;
    std::vector<ItemKey> pending() const;

private:
    std::vector<QueueItem> items_; // sorted by key
    std::map<ItemKey, std::size_t> index_;
    std::map<ItemKey, Verdict> latest_;
};

enum class NextStatus { Item, Exhausted, Waiting };

struct NextResult {
    NextStatus status = NextStatus::Exhausted;
    std::optional<QueueItem> item;
    std::size_t pending = 0;
};

struct ServiceOptions {
    // A served, undecided item is held for its annotator this long before
    // another annotator may receive it.
    std::chrono::seconds lease{15 * 60};
};

// Thread-safe queue backed by an append-only JSONL verdict log. Verdicts are
// flushed and fsync'ed before submit() returns.
class ReviewService {
public:
    ReviewService(std::vector<ImageAnnotation> annotations, std::filesystem::path log_path,
                  ServiceOptions options = {});
    ~ReviewService();
    ReviewService(const ReviewService&) = delete;
    ReviewService& operator=(const ReviewService&) = delete;

    // First pending item in (image_id, anomaly_index) order that is not leased
    // to someone else. Repeated calls by the same annotator return the same
    // item until it is decided.
    NextResult next_item(const std::string& annotator_id);

    // Stamps the verdict with the server time, persists it, then applies it.
    Verdict submit(const std::string& image_id, std::size_t anomaly_index, Decision decision,
                   const std::string& annotator_id);

    Progress progress() const;
    std::vector<Verdict> verdicts() const;
    const ImageAnnotation* annotation(const std::string& image_id) const;
    ReviewQueue snapshot() const;

private:
    struct Lease {
        std::string annotator_id;
        std::chrono::steady_clock::time_point expires;
    };

    std::vector<ImageAnnotation> annotations_;
    std::map<std::string, std::size_t> by_image_;
    std::filesystem::path log_path_;
    ServiceOptions options_;

    mutable std::shared_mutex state_mutex_;
    ReviewQueue queue_;
    std::vector<Verdict> log_;
    std::map<ItemKey, Lease> leases_;
    std::map<std::string, ItemKey> current_; // annotator -> item last served

    std::mutex write_mutex_;
    std::FILE* log_file_ = nullptr;
};

struct FinalizeOptions {
    bool partial = false; // drop pending items instead of failing
};

struct ItemDecision {
    ItemKey key;
    std::string name;
    std::optional<Decision> decision; // empty: pending
    std::string annotator_id;
};

struct FinalizeResult {
    std::vector<ImageAnnotation> annotations; // hitl_verified, accepted anomalies only
    std::vector<ItemDecision> decisions;      // every candidate, for audit
    std::size_t images = 0;
    std::size_t candidates_before = 0;
    std::size_t candidates_after = 0;
    std::size_t rejected = 0;
    std::size_t unsure = 0;
    std::size_t pending = 0;

    double mean_before() const { return images ? double(candidates_before) / double(images) : 0.0; }
    double mean_after() const { return images ? double(candidates_after) / double(images) : 0.0; }
};

// Keeps exactly the candidates whose latest verdict is accept, preserving
// order. Without `partial`, any candidate lacking a verdict is an error that
// lists them all.
FinalizeResult finalize(std::span<const ImageAnnotation> annotations, std::span<const Verdict> verdicts,
                        FinalizeOptions options = {});

nlohmann::json summary_json(const FinalizeResult& result);
std::string decisions_jsonl(const FinalizeResult& result);

} // namespace semanom::review
