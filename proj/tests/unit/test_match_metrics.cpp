#include <doctest.h>

#include <algorithm>

#include "semanom/errors.hpp"
#include "semanom/match_metrics.hpp"
#include "test_support.hpp"

using namespace semanom;

namespace {

const SurrogateBackend kSurrogate;

std::vector<RankedPrediction> ranked(const std::vector<AnomalyRecord>& preds) {
    return rank_predictions(preds, ConfidenceMode::InvSeverity);
}

} // namespace

TEST_CASE("ranking follows confidence with index tie-break") {
    const std::vector<AnomalyRecord> preds = {testing::record("a", "p", "r", 50), testing::record("b", "p", "r", 10),
                                              testing::record("c", "p", "r", 50), testing::record("d", "p", "r", 90)};
    auto names = [](const std::vector<RankedPrediction>& r) {
        std::string s;
        for (const auto& p : r) s += p.record.name;
        return s;
    };
    CHECK(names(rank_predictions(preds, ConfidenceMode::InvSeverity)) == "bacd");
    CHECK(names(rank_predictions(preds, ConfidenceMode::Severity)) == "dacb");
    CHECK(names(rank_predictions(preds, ConfidenceMode::Order)) == "abcd");
    CHECK(rank_predictions(preds, ConfidenceMode::InvSeverity)[0].confidence == 90.0);
    CHECK(parse_confidence_mode("severity") == ConfidenceMode::Severity);
    CHECK_THROWS_AS(parse_confidence_mode("random"), ValidationError);
}

TEST_CASE("hand-simulated fixture: AP 5/6 and F1 0.8 at every threshold") {
    const auto f = testing::ap_fixture();
    const auto preds = ranked(f.pred.anomalies);
    const ThresholdSet thresholds;
    for (double tau : thresholds.values()) {
        CAPTURE(tau);
        const auto m = match_image(preds, f.gt.anomalies, View::Full, tau, SimilarityConfig{}, kSurrogate);
        REQUIRE(m.tp_count() == 2);
        CHECK(m.assignments[0].rank == 1);
        CHECK(m.assignments[0].gt_index == 0);
        CHECK(m.assignments[1].rank == 3);
        CHECK(m.assignments[1].gt_index == 1);
        CHECK(m.fp_ranks == std::vector<std::size_t>{2});
        CHECK(m.fn_count == 0);
        CHECK(ap_of_match(m, 2) == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
        CHECK(f1_of_match(m, 2) == doctest::Approx(0.8).epsilon(1e-12));
    }
    const std::vector<ImageAnnotation> gt{f.gt};
    const std::vector<PredictionSet> pred{f.pred};
    const auto report = evaluate(gt, pred, EvaluationOptions{}, kSurrogate);
    CHECK(report.view(View::Full).sem_ap == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
    CHECK(report.view(View::Full).sem_f1 == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("empty-set conventions") {
    const std::vector<AnomalyRecord> none;
    const std::vector<AnomalyRecord> one{testing::record("n", "p", "r", 1)};
    auto m = match_image(ranked(none), none, View::Full, 0.7, {}, kSurrogate);
    CHECK(ap_of_match(m, 0) == 1.0);
    CHECK(f1_of_match(m, 0) == 1.0);
    m = match_image(ranked(one), none, View::Full, 0.7, {}, kSurrogate);
    CHECK(ap_of_match(m, 0) == 0.0);
    CHECK(f1_of_match(m, 0) == 0.0);
    m = match_image(ranked(none), one, View::Full, 0.7, {}, kSurrogate);
    CHECK(ap_of_match(m, 1) == 0.0);
    CHECK(f1_of_match(m, 1) == 0.0);
    CHECK(m.fn_count == 1);
}

TEST_CASE("greedy tie-breaks: higher sim_Full, then lower index") {
    testing::TableBackend b;
    const std::vector<AnomalyRecord> gts = {testing::record("g", "P0", "Q0", 1), testing::record("g", "P1", "Q1", 1),
                                            testing::record("g", "P2", "Q2", 1)};
    const std::vector<AnomalyRecord> preds = {testing::record("p", "p0", "q0", 1)};
    b.set("p0", "P0", 0.8);
    b.set("p0", "P1", 0.8);
    b.set("p0", "P2", 0.8);
    b.set("q0", "Q0", 0.1);
    b.set("q0", "Q1", 0.5);
    b.set("q0", "Q2", 0.5);
    auto m = match_image(ranked(preds), gts, View::Phe, 0.7, {}, b);
    REQUIRE(m.tp_count() == 1);
    CHECK(m.assignments[0].gt_index == 1);
    CHECK(m.assignments[0].similarity == 0.8);

    b.set("q0", "Q1", 0.1);
    b.set("q0", "Q2", 0.1);
    m = match_image(ranked(preds), gts, View::Phe, 0.7, {}, b);
    CHECK(m.assignments[0].gt_index == 0);
}

TEST_CASE("threshold gate is inclusive") {
    testing::TableBackend b;
    const std::vector<AnomalyRecord> gts = {testing::record("g", "P", "Q", 1)};
    const std::vector<AnomalyRecord> preds = {testing::record("p", "p", "q", 1)};
    b.set("p", "P", 0.7);
    CHECK(match_image(ranked(preds), gts, View::Phe, 0.7, {}, b).tp_count() == 1);
    CHECK(match_image(ranked(preds), gts, View::Phe, 0.7000001, {}, b).tp_count() == 0);
    CHECK_THROWS_AS(match_image(ranked(preds), gts, View::Phe, 0.0, {}, b), ValidationError);
    CHECK_THROWS_AS(match_image(ranked(preds), gts, View::Phe, 1.5, {}, b), ValidationError);
}

TEST_CASE("matching agrees with an independent simulation of the greedy scan") {
    testing::Rng rng(99);
    for (int i = 0; i < 500; ++i) {
        const auto inst = testing::random_match_instance(rng, 5, 5);
        SimilarityConfig cfg;
        cfg.alpha = 0.5;
        const auto preds = ranked(inst.preds);
        for (View view : kAllViews) {
            for (double tau : {0.7, 0.8, 0.9}) {
                const auto m = match_image(preds, inst.gts, view, tau, cfg, inst.backend);
                const auto o = testing::oracle_greedy(inst, view, tau, cfg.alpha);
                std::vector<std::optional<std::size_t>> got(inst.preds.size());
                for (const auto& a : m.assignments) got[a.rank - 1] = a.gt_index;
                CHECK(got == o.matched);
                for (std::size_t r = 0; r < preds.size(); ++r) CHECK(preds[r].original_index == o.order[r]);
                CHECK(ap_of_match(m, inst.gts.size()) == doctest::Approx(testing::oracle_ap(o, inst.gts.size())));
                CHECK(f1_of_match(m, inst.gts.size()) == doctest::Approx(testing::oracle_f1(o, inst.gts.size())));
            }
        }
    }
}

TEST_CASE("AP and F1 are non-increasing in the threshold") {
    testing::Rng rng(3);
    const std::vector<double> taus = {0.1, 0.5, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0};
    for (int i = 0; i < 300; ++i) {
        const auto inst = testing::random_match_instance(rng, 5, 5);
        const auto preds = ranked(inst.preds);
        for (View view : kAllViews) {
            double prev_ap = 2.0, prev_f1 = 2.0;
            for (double tau : taus) {
                const auto m = match_image(preds, inst.gts, view, tau, {}, inst.backend);
                const double ap = ap_of_match(m, inst.gts.size());
                const double f1 = f1_of_match(m, inst.gts.size());
                CHECK(ap <= prev_ap);
                CHECK(f1 <= prev_f1);
                prev_ap = ap;
                prev_f1 = f1;
            }
        }
    }
}

TEST_CASE("metrics are invariant to the input order of predictions with distinct confidence") {
    testing::Rng rng(17);
    auto gt = testing::synthetic_dataset(rng, 10, 5);
    std::vector<PredictionSet> preds;
    for (const auto& g : gt) {
        PredictionSet p;
        p.image_id = g.image_id;
        for (std::size_t k = 0; k < g.anomalies.size(); ++k) {
            auto r = g.anomalies[k];
            if (k % 2) r.phenomenon = testing::random_sentence(rng);
            r.severity = static_cast<double>(k * 7 + 1);
            p.anomalies.push_back(r);
        }
        p.anomalies.push_back(testing::record("x", testing::random_sentence(rng), testing::random_sentence(rng), 99));
        preds.push_back(p);
    }
    const auto base = evaluate(gt, preds, {}, kSurrogate);
    for (int trial = 0; trial < 5; ++trial) {
        auto shuffled = preds;
        for (auto& p : shuffled) std::shuffle(p.anomalies.begin(), p.anomalies.end(), rng);
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        const auto again = evaluate(gt, shuffled, {}, kSurrogate);
        for (View v : kAllViews) {
            CHECK(again.view(v).sem_ap == doctest::Approx(base.view(v).sem_ap).epsilon(1e-12));
            CHECK(again.view(v).sem_f1 == doctest::Approx(base.view(v).sem_f1).epsilon(1e-12));
        }
    }
}

TEST_CASE("alpha 1 makes the Full view equal the Phe view") {
    testing::Rng rng(23);
    const auto gt = testing::synthetic_dataset(rng, 15, 4);
    auto preds = testing::perfect_predictions(gt);
    for (auto& p : preds)
        for (auto& r : p.anomalies) r.reasoning = testing::random_sentence(rng);
    EvaluationOptions opts;
    opts.similarity.alpha = 1.0;
    const auto report = evaluate(gt, preds, opts, kSurrogate);
    CHECK(report.view(View::Full).sem_ap == report.view(View::Phe).sem_ap);
    CHECK(report.view(View::Full).sem_f1 == report.view(View::Phe).sem_f1);
}

TEST_CASE("identity, empty and both-empty datasets") {
    testing::Rng rng(1);
    auto gt = testing::synthetic_dataset(rng, 20, 6);
    gt[0].anomalies.clear();
    const auto perfect = testing::perfect_predictions(gt);
    const auto report = evaluate(gt, perfect, {}, kSurrogate);
    for (View v : kAllViews) {
        CHECK(report.view(v).sem_ap == 1.0);
        CHECK(report.view(v).sem_f1 == 1.0);
    }
    const auto classified = evaluate_classified(gt, perfect, {}, kSurrogate);
    CHECK(classified.accuracy == 1.0);
    for (View v : kAllViews) {
        CHECK(classified.view(v).sem_ap == 1.0);
        CHECK(classified.view(v).sem_f1 == 1.0);
    }

    // no predictions at all: only images without ground truth score
    std::vector<ImageAnnotation> nonempty;
    for (const auto& g : gt)
        if (!g.anomalies.empty()) nonempty.push_back(g);
    const auto empty = evaluate(nonempty, {}, {}, kSurrogate);
    for (View v : kAllViews) {
        CHECK(empty.view(v).sem_ap == 0.0);
        CHECK(empty.view(v).sem_f1 == 0.0);
    }
}

TEST_CASE("classification gating") {
    testing::Rng rng(8);
    const auto gt = testing::synthetic_dataset(rng, 12, 4);
    auto preds = testing::perfect_predictions(gt);
    for (auto& p : preds)
        if (!p.anomalies.empty()) p.anomalies.pop_back();

    const auto base = evaluate_classified(gt, preds, {}, kSurrogate);
    CHECK(base.accuracy == 1.0);
    for (View v : kAllViews) CHECK(base.view(v).sem_ap == base.ungated.view(v).sem_ap);

    auto flipped = preds;
    for (auto& p : flipped) p.predicted_label = *p.predicted_label == SourceLabel::Ai ? SourceLabel::Real : SourceLabel::Ai;
    const auto gated = evaluate_classified(gt, flipped, {}, kSurrogate);
    CHECK(gated.accuracy == 0.0);
    for (View v : kAllViews) {
        CHECK(gated.view(v).sem_ap == 0.0);
        CHECK(gated.view(v).sem_f1 == 0.0);
        for (const auto& t : gated.view(v).per_threshold) {
            CHECK(t.ap == 0.0);
            CHECK(t.f1 == 0.0);
        }
        CHECK(gated.ungated.view(v).sem_ap == base.ungated.view(v).sem_ap);
        CHECK(gated.ungated.view(v).sem_f1 == base.ungated.view(v).sem_f1);
    }

    // half flipped: gated mean divides by all images, not by the correct ones
    auto half = preds;
    for (std::size_t i = 0; i < half.size(); i += 2) half[i].predicted_label = flipped[i].predicted_label;
    const auto h = evaluate_classified(gt, half, {}, kSurrogate);
    CHECK(h.accuracy == 0.5);
    double expected = 0.0;
    for (std::size_t i = 1; i < gt.size(); i += 2) {
        double s = 0.0;
        for (const auto& t : h.ungated.per_image[i].per_view[2]) s += t.ap;
        expected += s / 3.0;
    }
    CHECK(h.view(View::Full).sem_ap == doctest::Approx(expected / static_cast<double>(gt.size())));
}

TEST_CASE("input errors") {
    testing::Rng rng(2);
    const auto gt = testing::synthetic_dataset(rng, 3, 2);
    auto preds = testing::perfect_predictions(gt);
    preds.push_back(preds[0]);
    preds.back().image_id = "zz";
    preds.push_back(preds[0]);
    preds.back().image_id = "aa";
    try {
        evaluate(gt, preds, {}, kSurrogate);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()) == "predictions reference unknown image_id(s): aa, zz");
    }

    auto dupes = testing::perfect_predictions(gt);
    dupes.push_back(dupes[0]);
    CHECK_THROWS_AS(evaluate(gt, dupes, {}, kSurrogate), ValidationError);
    CHECK_THROWS_AS(evaluate({}, {}, {}, kSurrogate), ValidationError);

    auto unlabelled = testing::perfect_predictions(gt);
    unlabelled[1].predicted_label.reset();
    try {
        evaluate_classified(gt, unlabelled, {}, kSurrogate);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()) == "missing source labels; predictions: img1");
    }
}

TEST_CASE("missing predictions count as empty") {
    const auto f = testing::ap_fixture();
    auto other = f.gt;
    other.image_id = "other";
    const std::vector<ImageAnnotation> gt{f.gt, other};
    const std::vector<PredictionSet> preds{f.pred};
    const auto report = evaluate(gt, preds, {}, kSurrogate);
    CHECK(report.view(View::Full).sem_ap == doctest::Approx(5.0 / 12.0));
    CHECK(report.per_image[1].pred_count == 0);
}

TEST_CASE("parallel evaluation is deterministic") {
    testing::Rng rng(44);
    const auto gt = testing::synthetic_dataset(rng, 40, 6);
    auto preds = testing::perfect_predictions(gt);
    for (auto& p : preds)
        for (auto& r : p.anomalies)
            if (rng() % 2) r.phenomenon = testing::random_sentence(rng);
    EvaluationOptions serial;
    EvaluationOptions parallel;
    parallel.jobs = 8;
    const auto a = to_json(evaluate(gt, preds, serial, kSurrogate));
    const auto b = to_json(evaluate(gt, preds, parallel, kSurrogate));
    CHECK(a == b);
}

TEST_CASE("report JSON and CSV shapes") {
    const auto f = testing::ap_fixture();
    const std::vector<ImageAnnotation> gt{f.gt};
    const std::vector<PredictionSet> preds{f.pred};
    const auto j = to_json(evaluate_classified(gt, preds, {}, kSurrogate));
    CHECK(j["accuracy"] == 1.0);
    CHECK(j["Full"]["csem_ap"].get<double>() == doctest::Approx(5.0 / 6.0));
    CHECK(j["Full"]["per_threshold"].contains("0.8"));
    CHECK(j["ungated"]["Phe"].contains("sem_ap"));

    const auto csv = per_image_csv(evaluate(gt, preds, {}, kSurrogate));
    CHECK(csv.rfind("image_id,view,threshold,gt,pred,ap,f1\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3 * 3);
}

TEST_CASE("scoring failures name the image and pair") {
    struct Failing final : SimilarityBackend {
        std::string backend_id() const override { return "failing"; }
        double score(std::string_view, std::string_view) const override { return 0; }
        std::vector<double> score_batch(std::span<const TextPair>) const override {
            throw ScoringError(3, "boom");
        }
    };
    const auto f = testing::ap_fixture();
    const std::vector<ImageAnnotation> gt{f.gt};
    const std::vector<PredictionSet> preds{f.pred};
    try {
        evaluate(gt, preds, {}, Failing{});
        FAIL("expected ScoringError");
    } catch (const ScoringError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("image 'fixture'") != std::string::npos);
        CHECK(msg.find("prediction") != std::string::npos);
    }
}
