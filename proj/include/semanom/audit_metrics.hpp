#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "semanom/core_model.hpp"

namespace semanom {

struct ImageAudit {
    std::string image_id;
    double mai = 0.0; // sum of (100 - s)/100; a sum despite the "mean" in its name
    std::size_t af = 0;
    double cap = 0.0; // mai * af
};

ImageAudit audit_image(std::span<const AnomalyRecord> anomalies, std::string image_id = {});

struct GeneratorAudit {
    std::string generator_tag;
    double mean_mai = 0.0;
    double mean_af = 0.0;
    double mean_cap = 0.0; // mean of per-image products, not product of means
    std::size_t image_count = 0;
};

// Per-tag means sorted by mean_cap, then mean_mai, then tag.
std::vector<GeneratorAudit> audit_generator(std::span<const std::pair<std::string, ImageAudit>> images);

// Groups annotations by generator_tag (untagged images go to "unknown") and
// audits each group.
std::vector<GeneratorAudit> audit_annotations(std::span<const ImageAnnotation> annotations,
                                              std::size_t jobs = 1);

inline constexpr const char* kUnknownTag = "unknown";

nlohmann::json to_json(const std::vector<GeneratorAudit>& leaderboard);
std::string leaderboard_table(const std::vector<GeneratorAudit>& leaderboard);

// Ten bins of width 10; the last bin is closed, [90,100].
using SeverityHistogram = std::array<std::size_t, 10>;

std::size_t severity_bin(double severity);

struct GroupStats {
    std::size_t image_count = 0;
    std::size_t anomaly_count = 0;
    double mean_anomalies = 0.0;
    SeverityHistogram histogram{};
};

struct DatasetStats {
    std::map<std::string, GroupStats> per_tag;
    GroupStats overall;
};

DatasetStats dataset_stats(std::span<const ImageAnnotation> annotations);

nlohmann::json to_json(const GroupStats& stats);
nlohmann::json to_json(const DatasetStats& stats);

// Side-by-side report of two datasets (typically raw agent output and the
// reviewed set). `after` may be absent for a single-column report.
nlohmann::json stats_comparison_json(const DatasetStats& before, const std::optional<DatasetStats>& after);
std::string stats_table(const DatasetStats& before, const std::optional<DatasetStats>& after);

} // namespace semanom
