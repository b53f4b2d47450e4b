#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "semanom/dataset_io.hpp"
#include "semanom/errors.hpp"
#include "semanom/review.hpp"

namespace semanom::review {

using nlohmann::json;

std::string to_string(const ItemKey& key) {
    return fmt::format("{}#{}", key.image_id, key.anomaly_index);
}

json to_json(const Progress& p) {
    return {{"total", p.total},
            {"pending", p.pending},
            {"accepted", p.accepted},
            {"rejected", p.rejected},
            {"unsure", p.unsure}};
}

ReviewQueue::ReviewQueue(std::span<const ImageAnnotation> annotations) {
    for (const auto& a : annotations) {
        for (std::size_t i = 0; i < a.anomalies.size(); ++i)
            items_.push_back({{a.image_id, i}, a.anomalies[i], a.image_uri});
    }
    std::sort(items_.begin(), items_.end(),
              [](const QueueItem& x, const QueueItem& y) { return x.key < y.key; });
    for (std::size_t i = 0; i < items_.size(); ++i) {
        if (!index_.emplace(items_[i].key, i).second)
            throw ValidationError(fmt::format("duplicate review item {}", to_string(items_[i].key)));
    }
}

void ReviewQueue::apply(const Verdict& verdict) {
    const ItemKey key{verdict.image_id, verdict.anomaly_index};
    if (!index_.count(key)) throw NotFoundError(fmt::format("no review item {}", to_string(key)));
    latest_.insert_or_assign(key, verdict);
}

const QueueItem* ReviewQueue::find(const ItemKey& key) const {
    auto it = index_.find(key);
    return it == index_.end() ? nullptr : &items_[it->second];
}

std::optional<Decision> ReviewQueue::decision(const ItemKey& key) const {
    auto it = latest_.find(key);
    if (it == latest_.end()) return std::nullopt;
    return it->second.decision;
}

const Verdict* ReviewQueue::latest_verdict(const ItemKey& key) const {
    auto it = latest_.find(key);
    return it == latest_.end() ? nullptr : &it->second;
}

Progress ReviewQueue::progress() const {
    Progress p;
    p.total = items_.size();
    for (const auto& [key, v] : latest_) {
        switch (v.decision) {
        case Decision::Accept: ++p.accepted; break;
        case Decision::Reject: ++p.rejected; break;
        case Decision::Unsure: ++p.unsure; break;
        }
    }
    p.pending = p.total - latest_.size();
    return p;
}

std::vector<ItemKey> ReviewQueue::pending() const {
    std::vector<ItemKey> out;
    for (const auto& item : items_)
        if (!latest_.count(item.key)) out.push_back(item.key);
    return out;
}

// ---------------------------------------------------------------- service

ReviewService::ReviewService(std::vector<ImageAnnotation> annotations, std::filesystem::path log_path,
                             ServiceOptions options)
    : annotations_(std::move(annotations)), log_path_(std::move(log_path)), options_(options),
      queue_(annotations_) {
    for (std::size_t i = 0; i < annotations_.size(); ++i) by_image_.emplace(annotations_[i].image_id, i);

    if (std::filesystem::exists(log_path_)) {
        for (auto& v : load_verdicts(log_path_)) {
            try {
                queue_.apply(v);
            } catch (const NotFoundError& e) {
                throw ValidationError(
                    fmt::format("verdict log '{}' does not match the annotations: {}", log_path_.string(), e.what()));
            }
            log_.push_back(std::move(v));
        }
        spdlog::info("replayed {} verdicts from {}", log_.size(), log_path_.string());
    } else if (log_path_.has_parent_path()) {
        std::filesystem::create_directories(log_path_.parent_path());
    }
    log_file_ = std::fopen(log_path_.c_str(), "a");
    if (!log_file_)
        throw IoError(fmt::format("cannot open verdict log '{}': {}", log_path_.string(), std::strerror(errno)));
}

ReviewService::~ReviewService() {
    if (log_file_) std::fclose(log_file_);
}

NextResult ReviewService::next_item(const std::string& annotator_id) {
    if (annotator_id.empty()) throw ValidationError("annotator id must not be empty");
    const auto now = std::chrono::steady_clock::now();
    std::unique_lock lock(state_mutex_);

    auto serve = [&](const QueueItem& item) {
        leases_[item.key] = {annotator_id, now + options_.lease};
        current_[annotator_id] = item.key;
        return NextResult{NextStatus::Item, item, queue_.progress().pending};
    };

    if (auto it = current_.find(annotator_id); it != current_.end() && !queue_.decision(it->second)) {
        auto lease = leases_.find(it->second);
        if (lease == leases_.end() || lease->second.annotator_id == annotator_id || lease->second.expires <= now)
            return serve(*queue_.find(it->second));
    }

    std::size_t pending = 0;
    for (const auto& item : queue_.items()) {
        if (queue_.decision(item.key)) continue;
        ++pending;
        auto lease = leases_.find(item.key);
        if (lease != leases_.end() && lease->second.annotator_id != annotator_id && lease->second.expires > now)
            continue;
        return serve(item);
    }
    return {pending == 0 ? NextStatus::Exhausted : NextStatus::Waiting, std::nullopt, pending};
}

Verdict ReviewService::submit(const std::string& image_id, std::size_t anomaly_index, Decision decision,
                              const std::string& annotator_id) {
    if (annotator_id.empty()) throw ValidationError("annotator_id must not be empty");
    const ItemKey key{image_id, anomaly_index};
    {
        std::shared_lock lock(state_mutex_);
        if (!queue_.find(key)) throw NotFoundError(fmt::format("no review item {}", to_string(key)));
    }

    // One writer at a time: the log order is the order verdicts take effect.
    std::lock_guard writer(write_mutex_);
    Verdict v{image_id, anomaly_index, decision, annotator_id, now_utc()};
    const auto line = to_json(v).dump() + "\n";
    if (std::fwrite(line.data(), 1, line.size(), log_file_) != line.size() || std::fflush(log_file_) != 0 ||
        ::fsync(::fileno(log_file_)) != 0)
        throw IoError(fmt::format("cannot persist verdict to '{}': {}", log_path_.string(), std::strerror(errno)));

    std::unique_lock lock(state_mutex_);
    queue_.apply(v);
    log_.push_back(v);
    leases_.erase(key);
    if (auto it = current_.find(annotator_id); it != current_.end() && it->second == key) current_.erase(it);
    return v;
}

Progress ReviewService::progress() const {
    std::shared_lock lock(state_mutex_);
    return queue_.progress();
}

std::vector<Verdict> ReviewService::verdicts() const {
    std::shared_lock lock(state_mutex_);
    return log_;
}

const ImageAnnotation* ReviewService::annotation(const std::string& image_id) const {
    auto it = by_image_.find(image_id);
    return it == by_image_.end() ? nullptr : &annotations_[it->second];
}

ReviewQueue ReviewService::snapshot() const {
    std::shared_lock lock(state_mutex_);
    return queue_;
}

// ---------------------------------------------------------------- finalize

FinalizeResult finalize(std::span<const ImageAnnotation> annotations, std::span<const Verdict> verdicts,
                        FinalizeOptions options) {
    ReviewQueue queue(annotations);
    for (const auto& v : verdicts) queue.apply(v);

    const auto pending = queue.pending();
    if (!pending.empty() && !options.partial) {
        std::vector<std::string> names;
        for (const auto& k : pending) names.push_back(to_string(k));
        throw ValidationError(fmt::format("{} candidate(s) have no verdict (use --partial to drop them): {}",
                                          pending.size(), fmt::join(names, ", ")));
    }

    FinalizeResult result;
    result.images = annotations.size();
    result.pending = pending.size();
    for (const auto& a : annotations) {
        ImageAnnotation out = a;
        out.anomalies.clear();
        out.provenance = Provenance::HitlVerified;
        for (std::size_t i = 0; i < a.anomalies.size(); ++i) {
            const ItemKey key{a.image_id, i};
            const auto* v = queue.latest_verdict(key);
            ++result.candidates_before;
            result.decisions.push_back({key, a.anomalies[i].name,
                                        v ? std::optional<Decision>(v->decision) : std::nullopt,
                                        v ? v->annotator_id : std::string()});
            if (!v) continue;
            switch (v->decision) {
            case Decision::Accept: out.anomalies.push_back(a.anomalies[i]); break;
            case Decision::Reject: ++result.rejected; break;
            case Decision::Unsure: ++result.unsure; break;
            }
        }
        result.candidates_after += out.anomalies.size();
        result.annotations.push_back(std::move(out));
    }
    return result;
}

json summary_json(const FinalizeResult& r) {
    return {{"images", r.images},
            {"candidates_before", r.candidates_before},
            {"candidates_after", r.candidates_after},
            {"mean_per_image_before", r.mean_before()},
            {"mean_per_image_after", r.mean_after()},
            {"rejected", r.rejected},
            {"unsure", r.unsure},
            {"pending_dropped", r.pending}};
}

std::string decisions_jsonl(const FinalizeResult& r) {
    std::string out;
    for (const auto& d : r.decisions) {
        json j = {{"image_id", d.key.image_id},
                  {"anomaly_index", d.key.anomaly_index},
                  {"name", d.name},
                  {"decision", d.decision ? std::string(to_string(*d.decision)) : std::string("pending")},
                  {"annotator_id", d.annotator_id},
                  {"kept", d.decision == Decision::Accept}};
        out += j.dump() + "\n";
    }
    return out;
}

} // namespace semanom::review
