#include "semanom/core_model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <ctime>

#include <fmt/format.h>

#include "semanom/errors.hpp"

namespace semanom {

namespace {

std::string lower(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

} // namespace

std::string_view to_string(SourceLabel label) {
    return label == SourceLabel::Real ? "real" : "ai";
}

std::string_view to_string(Provenance provenance) {
    switch (provenance) {
    case Provenance::AgentRaw: return "agent_raw";
    case Provenance::HitlVerified: return "hitl_verified";
    case Provenance::ModelPrediction: return "model_prediction";
    case Provenance::Human: return "human";
    }
    return "human";
}

std::string_view to_string(Decision decision) {
    switch (decision) {
    case Decision::Accept: return "accept";
    case Decision::Reject: return "reject";
    case Decision::Unsure: return "unsure";
    }
    return "unsure";
}

std::string_view to_string(View view) {
    switch (view) {
    case View::Phe: return "Phe";
    case View::Rea: return "Rea";
    case View::Full: return "Full";
    }
    return "Full";
}

SourceLabel parse_source_label(std::string_view text) {
    const auto l = lower(text);
    if (l == "real") return SourceLabel::Real;
    if (l == "ai") return SourceLabel::Ai;
    throw ValidationError(fmt::format("unknown source label '{}' (expected real|ai)", text));
}

Provenance parse_provenance(std::string_view text) {
    if (text == "agent_raw") return Provenance::AgentRaw;
    if (text == "hitl_verified") return Provenance::HitlVerified;
    if (text == "model_prediction") return Provenance::ModelPrediction;
    if (text == "human") return Provenance::Human;
    throw ValidationError(fmt::format(
        "unknown provenance '{}' (expected agent_raw|hitl_verified|model_prediction|human)", text));
}

Decision parse_decision(std::string_view text) {
    const auto l = lower(text);
    if (l == "accept") return Decision::Accept;
    if (l == "reject") return Decision::Reject;
    if (l == "unsure") return Decision::Unsure;
    throw ValidationError(fmt::format("unknown decision '{}' (expected accept|reject|unsure)", text));
}

View parse_view(std::string_view text) {
    const auto l = lower(text);
    if (l == "phe") return View::Phe;
    if (l == "rea") return View::Rea;
    if (l == "full") return View::Full;
    throw ValidationError(fmt::format("unknown view '{}' (expected Phe|Rea|Full)", text));
}

std::string format_timestamp(Timestamp ts) {
    using namespace std::chrono;
    const auto secs = floor<seconds>(ts);
    const auto millis = (ts - secs).count();
    const std::time_t t = system_clock::to_time_t(secs);
    std::tm tm{};
    gmtime_r(&t, &tm);
    return fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:{:02d}:{:02d}.{:03d}Z", tm.tm_year + 1900,
                       tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, millis);
}

Timestamp parse_timestamp(std::string_view text) {
    std::tm tm{};
    int millis = 0;
    const std::string s(text);
    int consumed = 0;
    const int n = std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%n", &tm.tm_year, &tm.tm_mon,
                              &tm.tm_mday, &tm.tm_hour, &tm.tm_min, &tm.tm_sec, &consumed);
    if (n != 6) throw ValidationError(fmt::format("malformed timestamp '{}'", text));
    std::string_view rest = std::string_view(s).substr(static_cast<std::size_t>(consumed));
    if (!rest.empty() && rest.front() == '.') {
        rest.remove_prefix(1);
        int digits = 0;
        while (!rest.empty() && std::isdigit(static_cast<unsigned char>(rest.front()))) {
            if (digits < 3) millis = millis * 10 + (rest.front() - '0');
            ++digits;
            rest.remove_prefix(1);
        }
        for (; digits < 3; ++digits) millis *= 10;
    }
    if (rest != "Z" && rest != "+00:00" && !rest.empty())
        throw ValidationError(fmt::format("timestamp '{}' must be UTC", text));
    tm.tm_year -= 1900;
    tm.tm_mon -= 1;
    const std::time_t t = timegm(&tm);
    using namespace std::chrono;
    return time_point_cast<milliseconds>(system_clock::from_time_t(t)) + milliseconds(millis);
}

Timestamp now_utc() {
    return std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
}

ThresholdSet::ThresholdSet() : thresholds_{0.7, 0.8, 0.9} {}

ThresholdSet::ThresholdSet(std::vector<double> thresholds) : thresholds_(std::move(thresholds)) {
    if (thresholds_.empty()) throw ValidationError("threshold set must not be empty");
    for (std::size_t i = 0; i < thresholds_.size(); ++i) {
        const double t = thresholds_[i];
        if (!(t > 0.0 && t <= 1.0))
            throw ValidationError(fmt::format("threshold {} outside (0,1]", t));
        if (i > 0 && !(t > thresholds_[i - 1]))
            throw ValidationError("thresholds must be strictly increasing");
    }
}

void SimilarityConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw ValidationError(fmt::format("alpha {} outside [0,1]", alpha));
}

std::string trim(std::string_view text) {
    const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    std::size_t b = 0;
    std::size_t e = text.size();
    while (b < e && is_space(static_cast<unsigned char>(text[b]))) ++b;
    while (e > b && is_space(static_cast<unsigned char>(text[e - 1]))) --e;
    return std::string(text.substr(b, e - b));
}

void validate(const AnomalyRecord& record) {
    if (trim(record.name).empty()) throw ValidationError("name must be non-empty");
    if (trim(record.phenomenon).empty()) throw ValidationError("phenomenon must be non-empty");
    if (trim(record.reasoning).empty()) throw ValidationError("reasoning must be non-empty");
    if (!std::isfinite(record.severity) || record.severity < 0.0 || record.severity > 100.0)
        throw ValidationError(
            fmt::format("severity out of range [0,100] (got {})", record.severity));
}

namespace {

void validate_anomalies(std::string_view image_id, const std::vector<AnomalyRecord>& anomalies) {
    for (std::size_t i = 0; i < anomalies.size(); ++i) {
        try {
            validate(anomalies[i]);
        } catch (const ValidationError& e) {
            throw ValidationError(
                fmt::format("image '{}': anomalies[{}]: {}", image_id, i, e.what()));
        }
    }
}

} // namespace

void validate(const ImageAnnotation& annotation) {
    if (annotation.image_id.empty()) throw ValidationError("image_id must be non-empty");
    validate_anomalies(annotation.image_id, annotation.anomalies);
}

void validate(const PredictionSet& prediction) {
    if (prediction.image_id.empty()) throw ValidationError("image_id must be non-empty");
    validate_anomalies(prediction.image_id, prediction.anomalies);
}

} // namespace semanom
