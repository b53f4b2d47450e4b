#include <doctest.h>

#include <fstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "semanom/dataset_io.hpp"
#include "semanom/review_server.hpp"
#include "test_support.hpp"

using namespace semanom;
using namespace semanom::review;
using nlohmann::json;

namespace {

// Review server on an ephemeral port, run on a background thread.
class RunningServer {
public:
    RunningServer(std::shared_ptr<ReviewService> svc, ServerOptions opts)
        : server_(std::move(svc), std::move(opts)) {
        port_ = server_.bind("127.0.0.1", 0);
        thread_ = std::thread([this] { server_.listen(); });
        server_.wait_until_ready();
    }
    ~RunningServer() {
        server_.stop();
        thread_.join();
    }
    httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

private:
    ReviewServer server_;
    int port_ = 0;
    std::thread thread_;
};

std::vector<ImageAnnotation> fixture(const testing::TempDir& dir) {
    std::ofstream(dir / "a.png", std::ios::binary) << "PNGDATA";
    ImageAnnotation a;
    a.image_id = "a";
    a.image_uri = "a.png";
    a.anomalies = {testing::record("hand", "six fingers", "hands have five", 5),
                   testing::record("chair", "floats", "gravity", 10)};
    ImageAnnotation b;
    b.image_id = "b x";
    b.image_uri = "missing.jpg";
    b.anomalies = {testing::record("sign", "garbled text", "letters", 30)};
    ImageAnnotation c;
    c.image_id = "c";
    c.image_uri = "https://example.org/c.png";
    return {a, b, c};
}

std::string verdict_body(const std::string& id, std::size_t idx, const std::string& decision,
                         const std::string& who = "alice") {
    return json{{"image_id", id}, {"anomaly_index", idx}, {"decision", decision}, {"annotator_id", who}}.dump();
}

} // namespace

TEST_CASE("review API round trip") {
    testing::TempDir dir;
    auto svc = std::make_shared<ReviewService>(fixture(dir), dir / "verdicts.jsonl");
    RunningServer server(svc, {dir.path(), std::nullopt});
    auto cli = server.client();

    auto res = cli.Get("/api/queue/next?annotator=alice");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->get_header_value("Content-Type") == "application/json");
    CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");
    auto body = json::parse(res->body);
    CHECK(body["status"] == "item");
    CHECK(body["image_id"] == "a");
    CHECK(body["anomaly_index"] == 0);
    CHECK(body["anomaly"]["name"] == "hand");
    CHECK(body["image_url"] == "/api/images/a");
    CHECK(body["pending"] == 3);

    res = cli.Post("/api/verdicts", verdict_body("a", 0, "accept"), "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    body = json::parse(res->body);
    CHECK(body["status"] == "ok");
    CHECK(body["verdict"]["decision"] == "accept");
    CHECK(body["progress"]["accepted"] == 1);

    res = cli.Get("/api/progress");
    REQUIRE(res);
    CHECK(json::parse(res->body) == json{{"total", 3}, {"pending", 2}, {"accepted", 1}, {"rejected", 0}, {"unsure", 0}});

    res = cli.Get("/api/images/a");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->body == "PNGDATA");
    CHECK(res->get_header_value("Content-Type") == "image/png");

    res = cli.Get("/api/images/b%20x");
    REQUIRE(res);
    CHECK(res->status == 404);
    res = cli.Get("/api/images/nope");
    REQUIRE(res);
    CHECK(res->status == 404);
    res = cli.Get("/api/images/c");
    REQUIRE(res);
    CHECK(res->status == 302);
    CHECK(res->get_header_value("Location") == "https://example.org/c.png");

    // the verdict reached the log on disk
    CHECK(load_verdicts(dir / "verdicts.jsonl").size() == 1);
}

TEST_CASE("review API input errors") {
    testing::TempDir dir;
    auto svc = std::make_shared<ReviewService>(fixture(dir), dir / "verdicts.jsonl");
    RunningServer server(svc, {dir.path(), std::nullopt});
    auto cli = server.client();

    auto status = [&](const std::string& body) {
        auto res = cli.Post("/api/verdicts", body, "application/json");
        REQUIRE(res);
        return res->status;
    };
    CHECK(status("not json") == 400);
    CHECK(status("[]") == 400);
    CHECK(status(R"({"image_id":"a","anomaly_index":-1,"decision":"accept","annotator_id":"x"})") == 400);
    CHECK(status(R"({"image_id":"a","anomaly_index":0,"decision":"maybe","annotator_id":"x"})") == 400);
    CHECK(status(R"({"image_id":"a","anomaly_index":0,"decision":"accept"})") == 400);
    CHECK(status(verdict_body("a", 0, "accept", "")) == 400);
    CHECK(status(verdict_body("a", 7, "accept")) == 404);
    CHECK(status(verdict_body("zz", 0, "reject")) == 404);
    CHECK(svc->verdicts().empty());

    auto res = cli.Get("/api/queue/next");
    REQUIRE(res);
    CHECK(res->status == 400);

    res = cli.Options("/api/verdicts");
    REQUIRE(res);
    CHECK(res->status == 204);
    CHECK(res->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);
}

TEST_CASE("queue reports waiting and exhausted") {
    testing::TempDir dir;
    auto anns = fixture(dir);
    anns.resize(1);
    anns[0].anomalies.resize(1);
    auto svc = std::make_shared<ReviewService>(anns, dir / "verdicts.jsonl");
    RunningServer server(svc, {dir.path(), std::nullopt});
    auto cli = server.client();

    CHECK(json::parse(cli.Get("/api/queue/next?annotator=alice")->body)["status"] == "item");
    auto bob = json::parse(cli.Get("/api/queue/next?annotator=bob")->body);
    CHECK(bob["status"] == "waiting");
    CHECK(bob["pending"] == 1);
    cli.Post("/api/verdicts", verdict_body("a", 0, "unsure"), "application/json");
    auto done = json::parse(cli.Get("/api/queue/next?annotator=bob")->body);
    CHECK(done["status"] == "exhausted");
    CHECK(done["progress"]["unsure"] == 1);
}

TEST_CASE("without a loaded queue every API route answers 409") {
    RunningServer server(nullptr, {});
    auto cli = server.client();
    CHECK(cli.Get("/api/queue/next?annotator=a")->status == 409);
    CHECK(cli.Get("/api/progress")->status == 409);
    CHECK(cli.Get("/api/images/x")->status == 409);
    CHECK(cli.Post("/api/verdicts", verdict_body("a", 0, "accept"), "application/json")->status == 409);
}

TEST_CASE("static UI files are served when configured") {
    testing::TempDir dir;
    write_text_file(dir / "ui" / "index.html", "<html>review</html>");
    auto svc = std::make_shared<ReviewService>(fixture(dir), dir / "v.jsonl");
    RunningServer server(svc, {dir.path(), dir / "ui"});
    auto res = server.client().Get("/index.html");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->body == "<html>review</html>");
}

TEST_CASE("content types by extension") {
    CHECK(content_type_for("x.PNG") == "image/png");
    CHECK(content_type_for("x.jpeg") == "image/jpeg");
    CHECK(content_type_for("x.webp") == "image/webp");
    CHECK(content_type_for("x") == "application/octet-stream");
}
