#include "semanom/match_metrics.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

#include <fmt/format.h>

#include "semanom/errors.hpp"
#include "semanom/util/parallel.hpp"

namespace semanom {

using nlohmann::json;

ConfidenceMode parse_confidence_mode(std::string_view text) {
    if (text == "inv_severity") return ConfidenceMode::InvSeverity;
    if (text == "severity") return ConfidenceMode::Severity;
    if (text == "order") return ConfidenceMode::Order;
    throw ValidationError(
        fmt::format("unknown confidence mode '{}' (expected inv_severity|severity|order)", text));
}

std::string_view to_string(ConfidenceMode mode) {
    switch (mode) {
    case ConfidenceMode::InvSeverity: return "inv_severity";
    case ConfidenceMode::Severity: return "severity";
    case ConfidenceMode::Order: return "order";
    }
    return "inv_severity";
}

bool ranks_before(const RankedPrediction& a, const RankedPrediction& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.original_index < b.original_index;
}

std::vector<RankedPrediction> rank_predictions(std::span<const AnomalyRecord> predictions,
                                               ConfidenceMode mode) {
    std::vector<RankedPrediction> ranked;
    ranked.reserve(predictions.size());
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        double confidence = 0.0;
        switch (mode) {
        case ConfidenceMode::InvSeverity: confidence = 100.0 - predictions[i].severity; break;
        case ConfidenceMode::Severity: confidence = predictions[i].severity; break;
        case ConfidenceMode::Order: confidence = 0.0; break; // index tie-break gives input order
        }
        ranked.push_back({predictions[i], confidence, i});
    }
    std::stable_sort(ranked.begin(), ranked.end(), ranks_before);
    return ranked;
}

SimilarityMatrix compute_similarities(std::span<const RankedPrediction> ranked,
                                      std::span<const AnomalyRecord> gts,
                                      const SimilarityConfig& cfg, const SimilarityBackend& backend) {
    cfg.validate();
    SimilarityMatrix sims(ranked.size(), gts.size());
    if (ranked.empty() || gts.empty()) return sims;

    std::vector<TextPair> pairs;
    pairs.reserve(ranked.size() * gts.size() * 2);
    for (const auto& p : ranked) {
        for (const auto& g : gts) {
            pairs.push_back({p.record.phenomenon, g.phenomenon});
            pairs.push_back({p.record.reasoning, g.reasoning});
        }
    }
    std::vector<double> scores;
    try {
        scores = backend.score_batch(pairs);
    } catch (const ScoringError& e) {
        const auto cell = e.pair_index() / 2;
        const auto row = cell / gts.size();
        throw ScoringError(e.pair_index(),
                           fmt::format("prediction {} vs ground truth {}: {}",
                                       ranked[row].original_index, cell % gts.size(), e.what()));
    }
    if (scores.size() != pairs.size())
        throw ProtocolError(fmt::format("backend '{}' returned {} scores for {} pairs",
                                        backend.backend_id(), scores.size(), pairs.size()));
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        for (std::size_t c = 0; c < gts.size(); ++c) {
            const auto k = 2 * (r * gts.size() + c);
            auto& cell = sims.at(r, c);
            cell.phe = std::clamp(scores[k], 0.0, 1.0);
            cell.rea = std::clamp(scores[k + 1], 0.0, 1.0);
            cell.full = mix_full(cell.phe, cell.rea, cfg.alpha);
        }
    }
    return sims;
}

MatchResult match_scored(const SimilarityMatrix& sims, std::span<const std::size_t> pred_indices,
                         View view, double tau) {
    if (!(tau > 0.0 && tau <= 1.0)) throw ValidationError(fmt::format("threshold {} outside (0,1]", tau));
    if (pred_indices.size() != sims.rows())
        throw ValidationError("pred_indices must have one entry per similarity row");

    MatchResult result;
    result.threshold = tau;
    result.view = view;
    std::vector<bool> taken(sims.cols(), false);

    for (std::size_t r = 0; r < sims.rows(); ++r) {
        std::optional<std::size_t> best;
        for (std::size_t c = 0; c < sims.cols(); ++c) {
            if (taken[c]) continue;
            const auto& cell = sims.at(r, c);
            const double s = cell.get(view);
            if (s < tau) continue;
            if (!best) {
                best = c;
                continue;
            }
            const auto& incumbent = sims.at(r, *best);
            const double bs = incumbent.get(view);
            // lower index already wins full ties because columns ascend
            if (s > bs || (s == bs && cell.full > incumbent.full)) best = c;
        }
        if (best) {
            taken[*best] = true;
            result.assignments.push_back({r + 1, pred_indices[r], *best, sims.at(r, *best).get(view)});
        } else {
            result.fp_ranks.push_back(r + 1);
        }
    }
    result.fn_count = sims.cols() - result.assignments.size();
    return result;
}

MatchResult match_image(std::span<const RankedPrediction> preds, std::span<const AnomalyRecord> gts,
                        View view, double tau, const SimilarityConfig& cfg,
                        const SimilarityBackend& backend) {
    std::vector<RankedPrediction> ranked(preds.begin(), preds.end());
    std::stable_sort(ranked.begin(), ranked.end(), ranks_before);
    const auto sims = compute_similarities(ranked, gts, cfg, backend);
    std::vector<std::size_t> indices;
    indices.reserve(ranked.size());
    for (const auto& p : ranked) indices.push_back(p.original_index);
    return match_scored(sims, indices, view, tau);
}

double ap_of_match(const MatchResult& result, std::size_t gt_count) {
    const auto n_pred = result.prediction_count();
    if (gt_count == 0) return n_pred == 0 ? 1.0 : 0.0;
    if (result.assignments.empty()) return 0.0;

    // Each true positive raises recall by exactly 1/gt_count, so the sum of
    // P(k) * dR(k) is (sum of P(k) over TP ranks) / gt_count.
    double precision_sum = 0.0;
    std::size_t tp = 0;
    for (const auto& a : result.assignments) {
        ++tp;
        precision_sum += static_cast<double>(tp) / static_cast<double>(a.rank);
    }
    return precision_sum / static_cast<double>(gt_count);
}

double f1_of_match(const MatchResult& result, std::size_t gt_count) {
    const auto n_pred = result.prediction_count();
    if (gt_count == 0 && n_pred == 0) return 1.0;
    const auto tp = result.tp_count();
    if (tp == 0) return 0.0;
    // 2PR/(P+R) with P = tp/n_pred and R = tp/gt_count.
    return 2.0 * static_cast<double>(tp) / static_cast<double>(n_pred + gt_count);
}

namespace {

ImageMetrics evaluate_image(const ImageAnnotation& gt, std::span<const AnomalyRecord> predicted,
                            const EvaluationOptions& options, const SimilarityBackend& backend) {
    ImageMetrics metrics;
    metrics.image_id = gt.image_id;
    metrics.gt_count = gt.anomalies.size();
    metrics.pred_count = predicted.size();

    const auto ranked = rank_predictions(predicted, options.confidence);
    SimilarityMatrix sims;
    try {
        sims = compute_similarities(ranked, gt.anomalies, options.similarity, backend);
    } catch (const ScoringError& e) {
        throw ScoringError(e.pair_index(), fmt::format("image '{}': {}", gt.image_id, e.what()));
    } catch (const ProtocolError& e) {
        throw ProtocolError(fmt::format("image '{}': {}", gt.image_id, e.what()));
    }
    std::vector<std::size_t> indices;
    indices.reserve(ranked.size());
    for (const auto& p : ranked) indices.push_back(p.original_index);

    for (View view : kAllViews) {
        auto& row = metrics.per_view[static_cast<std::size_t>(view)];
        for (double tau : options.thresholds.values()) {
            const auto match = match_scored(sims, indices, view, tau);
            row.push_back({tau, ap_of_match(match, metrics.gt_count), f1_of_match(match, metrics.gt_count)});
        }
    }
    return metrics;
}

// Sum of per-image (optionally gated) metrics, divided by |D| and |T| as the
// dataset means require.
std::array<ViewMetrics, 3> aggregate(const std::vector<ImageMetrics>& images,
                                     const ThresholdSet& thresholds, const std::vector<bool>* gate) {
    std::array<ViewMetrics, 3> views;
    const auto n_images = static_cast<double>(images.size());
    const auto n_tau = static_cast<double>(thresholds.size());
    for (View view : kAllViews) {
        const auto v = static_cast<std::size_t>(view);
        auto& out = views[v];
        out.view = view;
        std::vector<double> ap_sum(thresholds.size(), 0.0);
        std::vector<double> f1_sum(thresholds.size(), 0.0);
        double sem_ap = 0.0;
        double sem_f1 = 0.0;
        for (std::size_t i = 0; i < images.size(); ++i) {
            if (gate && !(*gate)[i]) continue;
            double image_ap = 0.0;
            double image_f1 = 0.0;
            for (std::size_t t = 0; t < thresholds.size(); ++t) {
                const auto& m = images[i].per_view[v][t];
                ap_sum[t] += m.ap;
                f1_sum[t] += m.f1;
                image_ap += m.ap;
                image_f1 += m.f1;
            }
            sem_ap += image_ap / n_tau;
            sem_f1 += image_f1 / n_tau;
        }
        out.sem_ap = n_images > 0 ? sem_ap / n_images : 0.0;
        out.sem_f1 = n_images > 0 ? sem_f1 / n_images : 0.0;
        for (std::size_t t = 0; t < thresholds.size(); ++t) {
            out.per_threshold.push_back({thresholds[t], n_images > 0 ? ap_sum[t] / n_images : 0.0,
                                         n_images > 0 ? f1_sum[t] / n_images : 0.0});
        }
    }
    return views;
}

std::unordered_map<std::string, const PredictionSet*> index_predictions(
    std::span<const ImageAnnotation> ground_truth, std::span<const PredictionSet> predictions) {
    std::unordered_map<std::string, const ImageAnnotation*> known;
    for (const auto& g : ground_truth) {
        if (!known.emplace(g.image_id, &g).second)
            throw ValidationError(fmt::format("duplicate ground-truth image_id '{}'", g.image_id));
    }
    std::unordered_map<std::string, const PredictionSet*> by_id;
    std::vector<std::string> unknown;
    for (const auto& p : predictions) {
        if (!known.count(p.image_id)) {
            unknown.push_back(p.image_id);
            continue;
        }
        if (!by_id.emplace(p.image_id, &p).second)
            throw ValidationError(fmt::format("duplicate prediction image_id '{}'", p.image_id));
    }
    if (!unknown.empty()) {
        std::sort(unknown.begin(), unknown.end());
        throw ValidationError(fmt::format("predictions reference unknown image_id(s): {}",
                                          fmt::join(unknown, ", ")));
    }
    return by_id;
}

json view_to_json(const ViewMetrics& v, const char* ap_key, const char* f1_key) {
    json per = json::object();
    for (const auto& t : v.per_threshold) per[fmt::format("{}", t.threshold)] = {{"ap", t.ap}, {"f1", t.f1}};
    return {{ap_key, v.sem_ap}, {f1_key, v.sem_f1}, {"per_threshold", per}};
}

} // namespace

MetricsReport evaluate(std::span<const ImageAnnotation> ground_truth,
                       std::span<const PredictionSet> predictions, const EvaluationOptions& options,
                       const SimilarityBackend& backend) {
    options.similarity.validate();
    if (ground_truth.empty()) throw ValidationError("ground truth contains no images");
    const auto by_id = index_predictions(ground_truth, predictions);

    MetricsReport report;
    report.image_count = ground_truth.size();
    report.per_image.resize(ground_truth.size());
    util::parallel_for(ground_truth.size(), options.jobs, [&](std::size_t i) {
        const auto& gt = ground_truth[i];
        auto it = by_id.find(gt.image_id);
        std::span<const AnomalyRecord> predicted;
        if (it != by_id.end()) predicted = it->second->anomalies;
        report.per_image[i] = evaluate_image(gt, predicted, options, backend);
    });
    report.views = aggregate(report.per_image, options.thresholds, nullptr);
    return report;
}

ClassifiedReport evaluate_classified(std::span<const ImageAnnotation> ground_truth,
                                     std::span<const PredictionSet> predictions,
                                     const EvaluationOptions& options,
                                     const SimilarityBackend& backend) {
    if (ground_truth.empty()) throw ValidationError("ground truth contains no images");
    const auto by_id = index_predictions(ground_truth, predictions);

    std::vector<std::string> missing_gt;
    std::vector<std::string> missing_pred;
    for (const auto& g : ground_truth) {
        if (!g.source_label) missing_gt.push_back(g.image_id);
        auto it = by_id.find(g.image_id);
        if (it == by_id.end() || !it->second->predicted_label) missing_pred.push_back(g.image_id);
    }
    if (!missing_gt.empty() || !missing_pred.empty()) {
        std::string msg = "missing source labels";
        if (!missing_gt.empty()) msg += fmt::format("; ground truth: {}", fmt::join(missing_gt, ", "));
        if (!missing_pred.empty()) msg += fmt::format("; predictions: {}", fmt::join(missing_pred, ", "));
        throw ValidationError(msg);
    }

    ClassifiedReport report;
    report.ungated = evaluate(ground_truth, predictions, options, backend);
    report.image_count = ground_truth.size();
    report.correct.resize(ground_truth.size());
    for (std::size_t i = 0; i < ground_truth.size(); ++i) {
        const auto& g = ground_truth[i];
        report.correct[i] = by_id.at(g.image_id)->predicted_label == g.source_label;
        if (report.correct[i]) ++report.correct_count;
    }
    report.accuracy = static_cast<double>(report.correct_count) / static_cast<double>(report.image_count);
    report.csem = aggregate(report.ungated.per_image, options.thresholds, &report.correct);
    return report;
}

json to_json(const MetricsReport& report) {
    json j = json::object();
    for (const auto& v : report.views) j[std::string(to_string(v.view))] = view_to_json(v, "sem_ap", "sem_f1");
    j["images"] = report.image_count;
    return j;
}

json to_json(const ClassifiedReport& report) {
    json j = json::object();
    j["accuracy"] = report.accuracy;
    j["images"] = report.image_count;
    j["correct"] = report.correct_count;
    for (const auto& v : report.csem) j[std::string(to_string(v.view))] = view_to_json(v, "csem_ap", "csem_f1");
    j["ungated"] = to_json(report.ungated);
    return j;
}

std::string per_image_csv(const MetricsReport& report) {
    std::string out = "image_id,view,threshold,gt,pred,ap,f1\n";
    for (const auto& img : report.per_image) {
        for (View view : kAllViews) {
            for (const auto& t : img.per_view[static_cast<std::size_t>(view)]) {
                out += fmt::format("{},{},{},{},{},{},{}\n", img.image_id, to_string(view), t.threshold,
                                   img.gt_count, img.pred_count, t.ap, t.f1);
            }
        }
    }
    return out;
}

} // namespace semanom
