#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semanom/core_model.hpp"
#include "semanom/similarity.hpp"

namespace semanom {

// How a prediction's ranking confidence is derived from its record.
enum class ConfidenceMode {
    InvSeverity, // 100 - severity: the less realistic, the more confident
    Severity,    // raw severity
    Order,       // input order
};

ConfidenceMode parse_confidence_mode(std::string_view text);
std::string_view to_string(ConfidenceMode mode);

struct RankedPrediction {
    AnomalyRecord record;
    double confidence = 0.0;
    std::size_t original_index = 0;
};

// Confidence-descending order; ties go to the lower original index.
bool ranks_before(const RankedPrediction& a, const RankedPrediction& b);

std::vector<RankedPrediction> rank_predictions(std::span<const AnomalyRecord> predictions,
                                               ConfidenceMode mode);

struct Assignment {
    std::size_t rank = 0;       // 1-based position in the ranked prediction list
    std::size_t pred_index = 0; // original index of the prediction
    std::size_t gt_index = 0;   // index into the ground-truth list
    double similarity = 0.0;    // sim_v of the matched pair

    bool operator==(const Assignment&) const = default;
};

struct MatchResult {
    double threshold = 0.0;
    View view = View::Full;
    std::vector<Assignment> assignments; // in rank order
    std::vector<std::size_t> fp_ranks;   // 1-based, ascending
    std::size_t fn_count = 0;

    std::size_t tp_count() const { return assignments.size(); }
    std::size_t prediction_count() const { return assignments.size() + fp_ranks.size(); }
};

// View scores of every (ranked prediction, ground truth) pair, row-major with
// rows in rank order.
class SimilarityMatrix {
public:
    SimilarityMatrix() = default;
    SimilarityMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), cells_(rows * cols) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    ViewScore& at(std::size_t r, std::size_t c) { return cells_[r * cols_ + c]; }
    const ViewScore& at(std::size_t r, std::size_t c) const { return cells_[r * cols_ + c]; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<ViewScore> cells_;
};

// Scores all pairs in one backend batch. Backend failures are rethrown with
// the (prediction, ground truth) pair they concern when it is known.
SimilarityMatrix compute_similarities(std::span<const RankedPrediction> ranked,
                                      std::span<const AnomalyRecord> gts,
                                      const SimilarityConfig& cfg, const SimilarityBackend& backend);

// Greedy one-to-one assignment over precomputed scores. Rows are scanned in
// order; each takes the unmatched ground truth with the highest sim_v that
// clears tau, ties resolved by higher sim_Full and then lower index.
// `pred_indices[r]` is the original index of row r.
MatchResult match_scored(const SimilarityMatrix& sims, std::span<const std::size_t> pred_indices,
                         View view, double tau);

// Ranks `preds`, scores them against `gts` and runs match_scored.
MatchResult match_image(std::span<const RankedPrediction> preds, std::span<const AnomalyRecord> gts,
                        View view, double tau, const SimilarityConfig& cfg,
                        const SimilarityBackend& backend);

// Average precision of one match: sum over true-positive ranks of
// precision-at-rank times the recall step 1/gt_count.
//   no ground truth and no predictions -> 1
//   no ground truth but predictions    -> 0
//   ground truth but no true positive  -> 0
double ap_of_match(const MatchResult& result, std::size_t gt_count);

// F1 over the whole prediction list. Both sets empty -> 1; any other
// undefined ratio -> 0.
double f1_of_match(const MatchResult& result, std::size_t gt_count);

struct EvaluationOptions {
    ThresholdSet thresholds{};
    SimilarityConfig similarity{};
    ConfidenceMode confidence = ConfidenceMode::InvSeverity;
    std::size_t jobs = 1;
};

struct ThresholdMetrics {
    double threshold = 0.0;
    double ap = 0.0;
    double f1 = 0.0;
};

struct ViewMetrics {
    View view = View::Full;
    double sem_ap = 0.0;
    double sem_f1 = 0.0;
    std::vector<ThresholdMetrics> per_threshold;
};

struct ImageMetrics {
    std::string image_id;
    std::size_t gt_count = 0;
    std::size_t pred_count = 0;
    // [view][threshold]
    std::array<std::vector<ThresholdMetrics>, 3> per_view;
};

struct MetricsReport {
    std::array<ViewMetrics, 3> views; // Phe, Rea, Full
    std::size_t image_count = 0;
    std::vector<ImageMetrics> per_image; // ground-truth order

    const ViewMetrics& view(View v) const { return views[static_cast<std::size_t>(v)]; }
};

// Dataset SemAP/SemF1. Predictions for images absent from `predictions` count
// as empty; a prediction whose image_id is not in the ground truth is an error.
MetricsReport evaluate(std::span<const ImageAnnotation> ground_truth,
                       std::span<const PredictionSet> predictions, const EvaluationOptions& options,
                       const SimilarityBackend& backend);

struct ClassifiedReport {
    double accuracy = 0.0;
    std::size_t image_count = 0;
    std::size_t correct_count = 0;
    // sem_ap / sem_f1 fields hold CSemAP / CSemF1 here.
    std::array<ViewMetrics, 3> csem;
    MetricsReport ungated;
    std::vector<bool> correct; // per image, ground-truth order

    const ViewMetrics& view(View v) const { return csem[static_cast<std::size_t>(v)]; }
};

// Accuracy plus classification-gated metrics: an image contributes its AP/F1
// only when its predicted source label equals the ground-truth label.
ClassifiedReport evaluate_classified(std::span<const ImageAnnotation> ground_truth,
                                     std::span<const PredictionSet> predictions,
                                     const EvaluationOptions& options,
                                     const SimilarityBackend& backend);

nlohmann::json to_json(const MetricsReport& report);
nlohmann::json to_json(const ClassifiedReport& report);

// image_id,view,threshold,gt,pred,ap,f1 rows for debugging.
std::string per_image_csv(const MetricsReport& report);

} // namespace semanom
