#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "semanom/dataset_io.hpp"
#include "test_support.hpp"

using namespace semanom;
using nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

// Runs the CLI with stdout captured to a file and stderr discarded.
Run cli(const testing::TempDir& dir, const std::string& args) {
    const auto out = dir / "stdout.txt";
    const auto cmd = std::string(SEMANOM_CLI_PATH) + " " + args + " > '" + out.string() + "' 2>/dev/null";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out);
    std::stringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    return r;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

json read_json(const std::filesystem::path& p) { return json::parse(read_text_file(p)); }

} // namespace

TEST_CASE("evaluate and evaluate-deepfake write reports and manifests") {
    testing::TempDir dir;
    testing::Rng rng(3);
    const auto gt = testing::synthetic_dataset(rng, 6, 3);
    save_annotations(gt, dir / "gt.jsonl");
    save_predictions(testing::perfect_predictions(gt), dir / "pred.jsonl");

    auto r = cli(dir, "evaluate --gt " + q(dir / "gt.jsonl") + " --pred " + q(dir / "pred.jsonl") + " --out " +
                          q(dir / "report.json") + " --csv " + q(dir / "per_image.csv"));
    REQUIRE(r.code == 0);
    const auto report = read_json(dir / "report.json");
    CHECK(report == json::parse(r.out));
    CHECK(report.dump().find("1.0") != std::string::npos);
    CHECK(read_json(dir / "report.manifest.json")["command"] == "evaluate");
    CHECK(read_text_file(dir / "per_image.csv").rfind("image_id,view,threshold,gt,pred,ap,f1", 0) == 0);

    r = cli(dir, "evaluate-deepfake --gt " + q(dir / "gt.jsonl") + " --pred " + q(dir / "pred.jsonl"));
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["accuracy"] == 1.0);

    // bad thresholds and unreachable scorers are hard failures
    CHECK(cli(dir, "evaluate --gt " + q(dir / "gt.jsonl") + " --pred " + q(dir / "pred.jsonl") +
                       " --thresholds 0.9,0.7")
              .code == 2);
    CHECK(cli(dir, "evaluate --gt " + q(dir / "gt.jsonl") + " --pred " + q(dir / "pred.jsonl") +
                       " --backend remote --retries 0 --endpoint http://127.0.0.1:" +
                       std::to_string(testing::unused_port()) + "/score")
              .code == 2);
    CHECK(cli(dir, "evaluate --gt " + q(dir / "missing.jsonl") + " --pred " + q(dir / "pred.jsonl")).code == 2);
}

TEST_CASE("audit and stats") {
    testing::TempDir dir;
    testing::Rng rng(4);
    auto anns = testing::synthetic_dataset(rng, 12, 4);
    save_annotations(anns, dir / "a.jsonl");

    auto r = cli(dir, "audit --annotations " + q(dir / "a.jsonl") + " --out " + q(dir / "board.json"));
    REQUIRE(r.code == 0);
    CHECK(r.out.find("CAP") != std::string::npos);
    CHECK(read_json(dir / "board.json").size() == 4);
    CHECK(cli(dir, "audit --annotations " + q(dir / "a.jsonl") + " --group-by image_id").code == 2);

    anns.resize(6);
    save_annotations(anns, dir / "b.jsonl");
    r = cli(dir, "stats --annotations " + q(dir / "a.jsonl") + " --after " + q(dir / "b.jsonl") + " --out " +
                     q(dir / "stats.json"));
    REQUIRE(r.code == 0);
    const auto j = read_json(dir / "stats.json");
    CHECK(j["before"]["overall"]["images"] == 12);
    CHECK(j["after"]["overall"]["images"] == 6);
}

TEST_CASE("finalize is strict unless --partial") {
    testing::TempDir dir;
    ImageAnnotation a;
    a.image_id = "x";
    a.image_uri = "x.png";
    a.provenance = Provenance::AgentRaw;
    a.anomalies = {testing::record("one", "p", "r", 5), testing::record("two", "p", "r", 50)};
    save_annotations(std::vector<ImageAnnotation>{a}, dir / "raw.jsonl");
    const Verdict v{"x", 1, Decision::Accept, "ann", now_utc()};
    write_text_file(dir / "v.jsonl", to_json(v).dump() + "\n");

    const auto base = "finalize --annotations " + q(dir / "raw.jsonl") + " --verdicts " + q(dir / "v.jsonl") +
                      " --out " + q(dir / "final.jsonl");
    CHECK(cli(dir, base).code == 2);
    const auto r = cli(dir, base + " --partial");
    REQUIRE(r.code == 0);
    const auto final = load_annotations(dir / "final.jsonl");
    REQUIRE(final.size() == 1);
    REQUIRE(final[0].anomalies.size() == 1);
    CHECK(final[0].anomalies[0].name == "two");
    CHECK(final[0].provenance == Provenance::HitlVerified);
    CHECK(std::filesystem::exists(dir / "final.decisions.jsonl"));
    CHECK(read_json(dir / "final.manifest.json")["summary"]["pending_dropped"] == 1);
}

TEST_CASE("parse converts raw answers") {
    testing::TempDir dir;
    const json line1 = {{"image_id", "i1"},
                        {"answer", "@1. **Cup**: handle\n**Phenomenon**: the handle is inside the cup\n"
                                   "**Reasoning**: handles sit outside\n**Severity Score**: 15."},
                        {"source_answer", "AI-generated"}};
    const json line2 = {{"image_id", "i2"}, {"answer", "nothing odd here"}};
    write_text_file(dir / "raw.jsonl", line1.dump() + "\n" + line2.dump() + "\n");
    const auto r = cli(dir, "parse --raw " + q(dir / "raw.jsonl") + " --out " + q(dir / "pred.jsonl"));
    CHECK(r.code == 0);
    const auto preds = load_predictions(dir / "pred.jsonl");
    REQUIRE(preds.size() == 2);
    REQUIRE(preds[0].anomalies.size() == 1);
    CHECK(preds[0].anomalies[0].severity == 15.0);
    CHECK(preds[0].predicted_label == SourceLabel::Ai);
    CHECK(preds[1].anomalies.empty());
}

TEST_CASE("annotate with the mock backend, cold then warm") {
    testing::TempDir dir;
    std::filesystem::create_directories(dir / "imgs");
    for (const auto* name : {"a.png", "b.jpg"}) std::ofstream(dir / "imgs" / name, std::ios::binary) << "bytes";
    std::ofstream(dir / "imgs" / "notes.txt") << "ignored";

    const auto args = "annotate --backend mock --images " + q(dir / "imgs") + " --out " + q(dir / "out");
    REQUIRE(cli(dir, args).code == 0);
    const auto cold = read_json(dir / "out" / "manifest.json");
    CHECK(cold["backend_calls"].get<int>() > 0);
    const auto anns = load_annotations(dir / "out" / "annotations.jsonl");
    REQUIRE(anns.size() == 2);
    CHECK(anns[0].image_id == "a");
    CHECK_FALSE(anns[0].anomalies.empty());
    CHECK(anns[0].provenance == Provenance::AgentRaw);
    CHECK(std::filesystem::exists(dir / "out" / "states" / "a.json"));

    REQUIRE(cli(dir, args).code == 0);
    const auto warm = read_json(dir / "out" / "manifest.json");
    CHECK(warm["backend_calls"] == 0);
    CHECK(warm["new_tokens"]["total"] == 0);
    CHECK(warm["tokens"] == cold["tokens"]);
    CHECK(load_annotations(dir / "out" / "annotations.jsonl") == anns);
}

TEST_CASE("annotate against an unreachable endpoint fails with a hint") {
    testing::TempDir dir;
    std::filesystem::create_directories(dir / "imgs");
    std::ofstream(dir / "imgs" / "a.png", std::ios::binary) << "bytes";
    write_text_file(dir / "cfg.txt", "endpoint = http://127.0.0.1:" + std::to_string(testing::unused_port()) +
                                         "/v1/chat/completions\nretry_budget = 0\nbackoff_ms = 0\n");
    const auto r = cli(dir, "annotate --images " + q(dir / "imgs") + " --config " + q(dir / "cfg.txt") + " --out " +
                                q(dir / "out"));
    CHECK(r.code == 2);
    CHECK(cli(dir, "annotate --images " + q(dir / "imgs") + " --out " + q(dir / "out2")).code == 2);
}

TEST_CASE("usage errors exit with 2") {
    testing::TempDir dir;
    CHECK(cli(dir, "").code == 2);
    CHECK(cli(dir, "frobnicate").code == 2);
    CHECK(cli(dir, "--help").code == 0);
}
