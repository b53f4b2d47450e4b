#include <doctest.h>

#include "semanom/errors.hpp"
#include "semanom/similarity.hpp"
#include "semanom/util/net.hpp"
#include "test_support.hpp"

using namespace semanom;

TEST_CASE("surrogate tokens are lowercased and split on spaces and punctuation") {
    CHECK(surrogate_tokens("The cat, sat-on THE mat!") ==
          std::vector<std::string>{"the", "cat", "sat", "on", "the", "mat"});
    CHECK(surrogate_tokens("ÉCOLE Ωmega") == std::vector<std::string>{"école", "ωmega"});
    CHECK(surrogate_tokens("  ...  ").empty());
}

TEST_CASE("surrogate score on a worked example") {
    // 4 shared tokens (the, cat, on, mat) over 6 + 6 tokens.
    CHECK(surrogate_score("the cat sat on the mat", "the cat lay on a mat") ==
          doctest::Approx(8.0 / 12.0).epsilon(1e-12));
    CHECK(surrogate_score("a a a", "a") == doctest::Approx(0.5));
}

TEST_CASE("surrogate conventions") {
    CHECK(surrogate_score("", "") == 1.0);
    CHECK(surrogate_score("", "x") == 0.0);
    CHECK(surrogate_score("x", "") == 0.0);
    CHECK(surrogate_score("!!", "") == 1.0);
    CHECK(surrogate_score("alpha", "beta") == 0.0);
}

TEST_CASE("surrogate is symmetric, bounded and 1 on identical text") {
    testing::Rng rng(5);
    for (int i = 0; i < 500; ++i) {
        const auto a = testing::random_sentence(rng);
        const auto b = testing::random_sentence(rng);
        const auto s = surrogate_score(a, b);
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
        CHECK(s == surrogate_score(b, a));
        CHECK(surrogate_score(a, a) == 1.0);
        const auto n = testing::random_nasty_string(rng);
        CHECK(surrogate_score(n, n) == 1.0);
    }
}

TEST_CASE("view similarity compares matching fields and mixes with alpha") {
    const SurrogateBackend backend;
    const auto pred = testing::record("ignored name", "the cat sat on the mat", "gravity", 10);
    const auto gt = testing::record("other", "the cat lay on a mat", "gravity pulls", 90);

    SimilarityConfig cfg;
    cfg.alpha = 0.25;
    const auto v = view_similarity(pred, gt, cfg, backend);
    CHECK(v.phe == doctest::Approx(8.0 / 12.0));
    CHECK(v.rea == doctest::Approx(2.0 / 3.0));
    CHECK(v.full == doctest::Approx(0.25 * v.phe + 0.75 * v.rea));
    CHECK(v.get(View::Phe) == v.phe);
    CHECK(v.get(View::Rea) == v.rea);

    cfg.alpha = 1.0;
    const auto w = view_similarity(pred, gt, cfg, backend);
    CHECK(w.full == w.phe);
    cfg.alpha = 0.0;
    CHECK(view_similarity(pred, gt, cfg, backend).full == w.rea);

    // Name and severity never contribute.
    auto renamed = pred;
    renamed.name = "completely different";
    renamed.severity = 77;
    cfg.alpha = 0.5;
    CHECK(view_similarity(renamed, gt, cfg, backend) == view_similarity(pred, gt, cfg, backend));

    cfg.alpha = 2.0;
    CHECK_THROWS_AS(view_similarity(pred, gt, cfg, backend), ValidationError);
}

TEST_CASE("backend factory") {
    CHECK(make_similarity_backend("surrogate")->backend_id() == "surrogate");
    CHECK_THROWS_AS(make_similarity_backend("remote"), ValidationError);
    CHECK_THROWS_AS(make_similarity_backend("bleu"), ValidationError);
}

TEST_CASE("the surrogate never touches the network") {
    const auto before = util::outbound_request_count();
    const SurrogateBackend backend;
    std::vector<TextPair> pairs(100, TextPair{"a b", "b c"});
    backend.score_batch(pairs);
    CHECK(util::outbound_request_count() == before);
}

TEST_CASE("score cache persists across instances") {
    testing::TempDir dir;
    const auto file = dir / "cache.jsonl";
    {
        ScoreCache cache(file);
        cache.put("b", "h1", "r1", 0.25);
        cache.put("b", "h2", "r2", 0.5);
        cache.flush();
        cache.put("b", "h3", "r3", 0.75);
        cache.flush();
    }
    ScoreCache again(file);
    CHECK(again.size() == 3);
    CHECK(again.get("b", "h3", "r3") == 0.75);
    CHECK_FALSE(again.get("other", "h1", "r1"));
}
