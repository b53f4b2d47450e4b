#include <doctest.h>

#include <fstream>

#include "semanom/dataset_io.hpp"
#include "semanom/errors.hpp"
#include "test_support.hpp"

using namespace semanom;
using nlohmann::json;

namespace {

ImageAnnotation random_annotation(testing::Rng& rng, std::size_t i) {
    ImageAnnotation a;
    a.image_id = "img-" + std::to_string(i) + testing::random_nasty_string(rng, 4);
    a.image_uri = testing::random_nasty_string(rng);
    if (rng() % 3) a.source_label = rng() % 2 ? SourceLabel::Ai : SourceLabel::Real;
    if (rng() % 2) a.generator_tag = testing::random_nasty_string(rng, 8);
    a.provenance = static_cast<Provenance>(rng() % 4);
    const auto n = rng() % 6;
    for (std::size_t k = 0; k < n; ++k) {
        a.anomalies.push_back(testing::record("n" + testing::random_nasty_string(rng),
                                              "p" + testing::random_nasty_string(rng),
                                              "r" + testing::random_nasty_string(rng),
                                              testing::random_severity(rng)));
    }
    return a;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
    std::ofstream out(path);
    for (const auto& l : lines) out << l << '\n';
}

std::string load_error(const std::filesystem::path& path) {
    try {
        load_annotations(path);
    } catch (const ValidationError& e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST_CASE("annotations survive a save/load round-trip with arbitrary text") {
    testing::Rng rng(7);
    testing::TempDir dir;
    std::vector<ImageAnnotation> records;
    for (std::size_t i = 0; i < 200; ++i) records.push_back(random_annotation(rng, i));
    save_annotations(records, dir / "a.jsonl");
    CHECK(load_annotations(dir / "a.jsonl") == records);
}

TEST_CASE("predictions survive a round-trip") {
    testing::Rng rng(11);
    testing::TempDir dir;
    std::vector<PredictionSet> preds;
    for (std::size_t i = 0; i < 50; ++i) {
        PredictionSet p;
        p.image_id = "p" + std::to_string(i);
        if (i % 2) p.predicted_label = SourceLabel::Ai;
        for (int k = 0; k < 3; ++k) p.anomalies.push_back(testing::random_record(rng));
        preds.push_back(p);
    }
    save_predictions(preds, dir / "p.jsonl");
    CHECK(load_predictions(dir / "p.jsonl") == preds);
}

TEST_CASE("unknown keys are preserved at every level") {
    const json in = {{"image_id", "x"},
                     {"anomalies",
                      json::array({{{"name", "n"},
                                    {"phenomenon", "p"},
                                    {"reasoning", "r"},
                                    {"severity", 12},
                                    {"bbox", {1, 2, 3, 4}}}})},
                     {"split", "test"}};
    const auto a = annotation_from_json(in);
    CHECK(a.extra["split"] == "test");
    CHECK(a.anomalies[0].extra["bbox"] == json({1, 2, 3, 4}));
    const auto out = to_json(a);
    CHECK(out["split"] == "test");
    CHECK(out["anomalies"][0]["bbox"] == json({1, 2, 3, 4}));
    CHECK(out["anomalies"][0]["severity"].is_number_integer());
}

TEST_CASE("optional fields accept absence and null") {
    const auto a = annotation_from_json(
        json{{"image_id", "x"}, {"source_label", nullptr}, {"generator_tag", nullptr}, {"anomalies", json::array()}});
    CHECK_FALSE(a.source_label);
    CHECK_FALSE(a.generator_tag);
    CHECK(a.provenance == Provenance::Human);
    const auto b = annotation_from_json(json{{"image_id", "y"}, {"anomalies", json::array()}});
    CHECK(b.image_uri.empty());
}

TEST_CASE("load errors carry the line number and image id") {
    testing::TempDir dir;
    const std::string good = R"({"image_id":"a","anomalies":[]})";

    write_lines(dir / "bad_json.jsonl", {good, "", "{not json"});
    CHECK(load_error(dir / "bad_json.jsonl").find(":3: malformed JSON") != std::string::npos);

    write_lines(dir / "bad_sev.jsonl",
                {good, R"({"image_id":"b","anomalies":[{"name":"n","phenomenon":"p","reasoning":"r","severity":101}]})"});
    const auto msg = load_error(dir / "bad_sev.jsonl");
    CHECK(msg.find(":2:") != std::string::npos);
    CHECK(msg.find("image 'b'") != std::string::npos);
    CHECK(msg.find("severity out of range [0,100] (got 101)") != std::string::npos);

    write_lines(dir / "missing.jsonl", {R"({"image_id":"c","anomalies":[{"name":"n","reasoning":"r","severity":1}]})"});
    CHECK(load_error(dir / "missing.jsonl").find("missing field 'phenomenon'") != std::string::npos);

    write_lines(dir / "array.jsonl", {"[1,2]"});
    CHECK(load_error(dir / "array.jsonl").find("expected a JSON object") != std::string::npos);

    write_lines(dir / "dupe.jsonl", {good, good});
    CHECK(load_error(dir / "dupe.jsonl").find("duplicate image_id 'a'") != std::string::npos);

    write_lines(dir / "empty_name.jsonl",
                {R"({"image_id":"d","anomalies":[{"name":"  ","phenomenon":"p","reasoning":"r","severity":1}]})"});
    CHECK(load_error(dir / "empty_name.jsonl").find("name must be non-empty") != std::string::npos);

    write_lines(dir / "label.jsonl", {R"({"image_id":"e","source_label":"fake","anomalies":[]})"});
    CHECK(load_error(dir / "label.jsonl").find("unknown source label") != std::string::npos);

    CHECK_THROWS_AS(load_annotations(dir / "nope.jsonl"), IoError);
}

TEST_CASE("CRLF line endings and blank lines are tolerated") {
    testing::TempDir dir;
    {
        std::ofstream out(dir / "crlf.jsonl", std::ios::binary);
        out << R"({"image_id":"a","anomalies":[]})" << "\r\n\r\n"
            << R"({"image_id":"b","anomalies":[]})" << "\r\n";
    }
    CHECK(load_annotations(dir / "crlf.jsonl").size() == 2);
}

TEST_CASE("verdicts parse with and without timestamps") {
    const auto v = verdict_from_json(json{{"image_id", "a"},
                                          {"anomaly_index", 2},
                                          {"decision", "reject"},
                                          {"annotator_id", "ann"},
                                          {"timestamp", "2025-03-01T10:00:00.000Z"}});
    CHECK(v.anomaly_index == 2);
    CHECK(v.decision == Decision::Reject);
    CHECK(verdict_from_json(to_json(v)) == v);
    CHECK_THROWS_AS(verdict_from_json(json{{"image_id", "a"}, {"anomaly_index", -1}, {"decision", "accept"}, {"annotator_id", "x"}}),
                    ValidationError);
    CHECK_THROWS_AS(verdict_from_json(json{{"image_id", "a"}, {"anomaly_index", 0}, {"decision", "accept"}, {"annotator_id", ""}}),
                    ValidationError);
}

TEST_CASE("saving refuses invalid records") {
    testing::TempDir dir;
    ImageAnnotation a;
    a.image_id = "x";
    a.anomalies.push_back(testing::record("n", "p", "r", 150));
    std::vector<ImageAnnotation> v{a};
    CHECK_THROWS_AS(save_annotations(v, dir / "o.jsonl"), ValidationError);
}
