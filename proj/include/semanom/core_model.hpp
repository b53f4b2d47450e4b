#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace semanom {

enum class SourceLabel { Real, Ai };

enum class Provenance { AgentRaw, HitlVerified, ModelPrediction, Human };

// accept <-> h(a)=1, reject <-> 0, unsure <-> undecided
enum class Decision { Accept, Reject, Unsure };

// Which text fields a similarity compares.
enum class View { Phe, Rea, Full };

inline constexpr View kAllViews[] = {View::Phe, View::Rea, View::Full};

std::string_view to_string(SourceLabel label);
std::string_view to_string(Provenance provenance);
std::string_view to_string(Decision decision);
std::string_view to_string(View view);

// Parsers accept the lowercase wire spelling; "AI" is accepted for the label too.
SourceLabel parse_source_label(std::string_view text);
Provenance parse_provenance(std::string_view text);
Decision parse_decision(std::string_view text);
View parse_view(std::string_view text);

// One structured anomaly: what is wrong, how it looks, why it is wrong, and
// how realistic it still is (0 = completely implausible, 100 = fully real).
struct AnomalyRecord {
    std::string name;
    std::string phenomenon;
    std::string reasoning;
    double severity = 0.0;
    // Unknown JSON fields, carried through load/save untouched.
    nlohmann::json extra = nlohmann::json::object();

    bool operator==(const AnomalyRecord&) const = default;
};

struct ImageAnnotation {
    std::string image_id;
    std::string image_uri;
    std::optional<SourceLabel> source_label;
    std::optional<std::string> generator_tag;
    std::vector<AnomalyRecord> anomalies;
    Provenance provenance = Provenance::Human;
    nlohmann::json extra = nlohmann::json::object();

    bool operator==(const ImageAnnotation&) const = default;
};

struct PredictionSet {
    std::string image_id;
    std::optional<SourceLabel> predicted_label;
    std::vector<AnomalyRecord> anomalies;
    nlohmann::json extra = nlohmann::json::object();

    bool operator==(const PredictionSet&) const = default;
};

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

struct Verdict {
    std::string image_id;
    std::size_t anomaly_index = 0;
    Decision decision = Decision::Unsure;
    std::string annotator_id;
    Timestamp timestamp{};

    bool operator==(const Verdict&) const = default;
};

// ISO-8601 UTC with millisecond precision, e.g. 2025-01-31T08:15:00.250Z.
std::string format_timestamp(Timestamp ts);
Timestamp parse_timestamp(std::string_view text);
Timestamp now_utc();

// Similarity thresholds; strictly increasing, each in (0, 1].
class ThresholdSet {
public:
    ThresholdSet();
    explicit ThresholdSet(std::vector<double> thresholds);

    const std::vector<double>& values() const& { return thresholds_; }
    // By value on temporaries so `for (t : ThresholdSet().values())` is safe.
    std::vector<double> values() && { return std::move(thresholds_); }
    std::size_t size() const { return thresholds_.size(); }
    double operator[](std::size_t i) const { return thresholds_[i]; }

    bool operator==(const ThresholdSet&) const = default;

private:
    std::vector<double> thresholds_;
};

struct SimilarityConfig {
    double alpha = 0.5;
    View view = View::Full;
    std::string backend_id = "surrogate";

    void validate() const;
};

// Invariant checks. Each throws ValidationError naming the offending field.
void validate(const AnomalyRecord& record);
void validate(const ImageAnnotation& annotation);
void validate(const PredictionSet& prediction);

std::string trim(std::string_view text);

} // namespace semanom
