#include <algorithm>
#include <fstream>
#include <unordered_map>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "semanom/similarity.hpp"
#include "semanom/util/hash.hpp"
#include "semanom/util/net.hpp"

namespace semanom {

using nlohmann::json;

ScoreCache::ScoreCache(std::optional<std::filesystem::path> file) : file_(std::move(file)) {
    if (!file_) return;
    std::ifstream in(*file_);
    if (!in) return; // first use: nothing cached yet
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto j = json::parse(line);
            entries_[{j.at("backend_id").get<std::string>(), j.at("h_hash").get<std::string>(),
                      j.at("r_hash").get<std::string>()}] = j.at("score").get<double>();
        } catch (const json::exception& e) {
            spdlog::warn("score cache {}:{} ignored: {}", file_->string(), line_no, e.what());
        }
    }
}

std::optional<double> ScoreCache::get(const std::string& backend_id, const std::string& h_hash,
                                      const std::string& r_hash) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find({backend_id, h_hash, r_hash});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void ScoreCache::put(const std::string& backend_id, const std::string& h_hash,
                     const std::string& r_hash, double score) {
    std::unique_lock lock(mutex_);
    Key key{backend_id, h_hash, r_hash};
    auto [it, inserted] = entries_.insert_or_assign(key, score);
    if (inserted) unflushed_.push_back(std::move(key));
}

std::size_t ScoreCache::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

void ScoreCache::flush() {
    std::unique_lock lock(mutex_);
    if (!file_ || unflushed_.empty()) return;
    if (file_->has_parent_path()) std::filesystem::create_directories(file_->parent_path());
    std::ofstream out(*file_, std::ios::app);
    if (!out) throw IoError(fmt::format("cannot append to score cache '{}'", file_->string()));
    for (const auto& key : unflushed_) {
        const auto& [backend, h, r] = key;
        out << json{{"backend_id", backend}, {"h_hash", h}, {"r_hash", r}, {"score", entries_.at(key)}}.dump()
            << '\n';
    }
    unflushed_.clear();
}

RemoteScoreBackend::RemoteScoreBackend(RemoteScorerOptions options)
    : options_(std::move(options)),
      cache_(options_.cache_file) {
    util::split_endpoint(options_.endpoint); // validates the URL early
    if (options_.batch_size == 0) options_.batch_size = 1;
}

RemoteScoreBackend::~RemoteScoreBackend() {
    try {
        cache_.flush();
    } catch (const std::exception& e) {
        spdlog::warn("score cache flush failed: {}", e.what());
    }
}

double RemoteScoreBackend::score(std::string_view hypothesis, std::string_view reference) const {
    const TextPair pair{std::string(hypothesis), std::string(reference)};
    return score_batch(std::span<const TextPair>(&pair, 1)).at(0);
}

std::vector<double> RemoteScoreBackend::post_batch(std::span<const TextPair> pairs,
                                                   std::size_t offset) const {
    json body = {{"pairs", json::array()}};
    for (const auto& p : pairs) body["pairs"].push_back({p.hypothesis, p.reference});
    const auto payload = body.dump();
    const auto endpoint = util::split_endpoint(options_.endpoint);

    auto attempt = [&]() -> std::vector<double> {
        requests_.fetch_add(1);
        util::note_outbound_request();
        httplib::Client client(endpoint.scheme_host_port);
        client.set_connection_timeout(options_.timeout);
        client.set_read_timeout(options_.timeout);
        client.set_write_timeout(options_.timeout);
        auto res = client.Post(endpoint.path, payload, "application/json");
        if (!res)
            throw ScoringError(offset, fmt::format("scoring request for pair {} failed: {}", offset,
                                                   httplib::to_string(res.error())));
        if (res->status >= 500 || res->status == 429)
            throw ScoringError(offset, fmt::format("scoring service returned HTTP {} for pair {}",
                                                   res->status, offset));
        if (res->status != 200)
            throw ProtocolError(fmt::format("scoring service returned HTTP {} for pair {}: {}",
                                            res->status, offset, res->body));
        json reply;
        try {
            reply = json::parse(res->body);
        } catch (const json::parse_error&) {
            throw ProtocolError(fmt::format("scoring reply for pair {} is not JSON", offset));
        }
        if (!reply.is_object() || !reply.contains("scores") || !reply["scores"].is_array() ||
            reply["scores"].size() != pairs.size())
            throw ProtocolError(
                fmt::format("scoring reply for pair {} lacks a scores array of length {}", offset,
                            pairs.size()));
        std::vector<double> out;
        out.reserve(pairs.size());
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const auto& v = reply["scores"][i];
            if (!v.is_number())
                throw ProtocolError(fmt::format("non-numeric score for pair {}", offset + i));
            out.push_back(std::clamp(v.get<double>(), 0.0, 1.0));
        }
        return out;
    };
    return util::with_retries(options_.retry, attempt);
}

std::vector<double> RemoteScoreBackend::score_batch(std::span<const TextPair> pairs) const {
    std::vector<double> out(pairs.size(), 0.0);
    std::vector<std::pair<std::string, std::string>> hashes;
    hashes.reserve(pairs.size());

    // Unique uncached pairs, remembered with every position they fill.
    std::vector<TextPair> misses;
    std::vector<std::size_t> miss_first_index;
    std::unordered_map<std::string, std::size_t> miss_slot;
    std::vector<std::vector<std::size_t>> miss_targets;

    for (std::size_t i = 0; i < pairs.size(); ++i) {
        auto h = util::sha256_hex(pairs[i].hypothesis);
        auto r = util::sha256_hex(pairs[i].reference);
        if (auto cached = cache_.get(options_.backend_id, h, r)) {
            out[i] = *cached;
        } else {
            const auto key = h + ":" + r;
            auto [it, inserted] = miss_slot.emplace(key, misses.size());
            if (inserted) {
                misses.push_back(pairs[i]);
                miss_first_index.push_back(i);
                miss_targets.emplace_back();
            }
            miss_targets[it->second].push_back(i);
        }
        hashes.emplace_back(std::move(h), std::move(r));
    }

    for (std::size_t begin = 0; begin < misses.size(); begin += options_.batch_size) {
        const auto n = std::min(options_.batch_size, misses.size() - begin);
        const auto scores =
            post_batch(std::span<const TextPair>(misses.data() + begin, n), miss_first_index[begin]);
        for (std::size_t k = 0; k < n; ++k) {
            for (auto target : miss_targets[begin + k]) out[target] = scores[k];
            const auto first = miss_first_index[begin + k];
            cache_.put(options_.backend_id, hashes[first].first, hashes[first].second, scores[k]);
        }
    }
    return out;
}

double remote_score(std::string_view hypothesis, std::string_view reference,
                    const std::string& endpoint) {
    RemoteScorerOptions options;
    options.endpoint = endpoint;
    return RemoteScoreBackend(options).score(hypothesis, reference);
}

std::unique_ptr<SimilarityBackend> make_similarity_backend(
    std::string_view id, const std::optional<RemoteScorerOptions>& remote) {
    if (id == "surrogate") return std::make_unique<SurrogateBackend>();
    if (id == "remote") {
        if (!remote || remote->endpoint.empty())
            throw ValidationError("remote similarity backend needs an endpoint");
        return std::make_unique<RemoteScoreBackend>(*remote);
    }
    throw ValidationError(fmt::format("unknown similarity backend '{}' (expected surrogate|remote)", id));
}

} // namespace semanom
