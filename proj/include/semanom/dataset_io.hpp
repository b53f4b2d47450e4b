#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "semanom/core_model.hpp"

namespace semanom {

// JSON mapping for the dataset schema. from_json validates invariants and
// keeps unrecognised keys in `extra`.
nlohmann::json to_json(const AnomalyRecord& record);
nlohmann::json to_json(const ImageAnnotation& annotation);
nlohmann::json to_json(const PredictionSet& prediction);
nlohmann::json to_json(const Verdict& verdict);

AnomalyRecord anomaly_from_json(const nlohmann::json& j);
ImageAnnotation annotation_from_json(const nlohmann::json& j);
PredictionSet prediction_from_json(const nlohmann::json& j);
Verdict verdict_from_json(const nlohmann::json& j);

// JSONL readers. Blank lines are skipped. Any malformed line or invariant
// violation aborts the whole load with a message carrying the 1-based line
// number (and image_id when known); no partial result is ever returned.
std::vector<ImageAnnotation> load_annotations(const std::filesystem::path& path);
std::vector<PredictionSet> load_predictions(const std::filesystem::path& path);
std::vector<Verdict> load_verdicts(const std::filesystem::path& path);

void save_annotations(std::span<const ImageAnnotation> records, const std::filesystem::path& path);
void save_predictions(std::span<const PredictionSet> records, const std::filesystem::path& path);

// Serialised single line, without the trailing newline.
std::string to_jsonl_line(const ImageAnnotation& annotation);
std::string to_jsonl_line(const PredictionSet& prediction);

// Writes `content` to `path`, creating parent directories.
void write_text_file(const std::filesystem::path& path, std::string_view content);
std::string read_text_file(const std::filesystem::path& path);

} // namespace semanom
