#include "semanom/review_server.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "semanom/dataset_io.hpp"
#include "semanom/errors.hpp"

namespace semanom::review {

using nlohmann::json;

std::string content_type_for(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".webp") return "image/webp";
    if (ext == ".gif") return "image/gif";
    if (ext == ".bmp") return "image/bmp";
    if (ext == ".svg") return "image/svg+xml";
    return "application/octet-stream";
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, {{"error", message}});
}

} // namespace

ReviewServer::ReviewServer(std::shared_ptr<ReviewService> service, ServerOptions options)
    : service_(std::move(service)), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
    install_routes();
}

ReviewServer::~ReviewServer() {
    stop();
}

void ReviewServer::install_routes() {
    auto& srv = *server_;
    srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                             {"Access-Control-Allow-Headers", "Content-Type"},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    srv.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    srv.Get("/api/queue/next", [this](const httplib::Request& req, httplib::Response& res) {
        if (!service_) return send_error(res, 409, "review queue not loaded");
        const auto annotator = req.get_param_value("annotator");
        if (annotator.empty()) return send_error(res, 400, "missing annotator parameter");
        const auto next = service_->next_item(annotator);
        if (next.status != NextStatus::Item) {
            return send_json(res, 200,
                             {{"status", next.status == NextStatus::Exhausted ? "exhausted" : "waiting"},
                              {"pending", next.pending},
                              {"progress", to_json(service_->progress())}});
        }
        const auto& item = *next.item;
        send_json(res, 200,
                  {{"status", "item"},
                   {"image_id", item.key.image_id},
                   {"anomaly_index", item.key.anomaly_index},
                   {"anomaly", to_json(item.anomaly)},
                   {"image_uri", item.image_uri},
                   {"image_url", "/api/images/" + httplib::detail::encode_url(item.key.image_id)},
                   {"pending", next.pending}});
    });

    srv.Post("/api/verdicts", [this](const httplib::Request& req, httplib::Response& res) {
        if (!service_) return send_error(res, 409, "review queue not loaded");
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::parse_error&) {
            return send_error(res, 400, "body is not JSON");
        }
        if (!body.is_object() || !body.contains("image_id") || !body["image_id"].is_string() ||
            !body.contains("anomaly_index") || !body["anomaly_index"].is_number_unsigned() ||
            !body.contains("decision") || !body["decision"].is_string() || !body.contains("annotator_id") ||
            !body["annotator_id"].is_string())
            return send_error(res, 400,
                              "expected {image_id: string, anomaly_index: non-negative integer, "
                              "decision: accept|reject|unsure, annotator_id: string}");
        Decision decision;
        try {
            decision = parse_decision(body["decision"].get<std::string>());
        } catch (const ValidationError& e) {
            return send_error(res, 400, e.what());
        }
        try {
            const auto v = service_->submit(body["image_id"].get<std::string>(),
                                            body["anomaly_index"].get<std::size_t>(), decision,
                                            body["annotator_id"].get<std::string>());
            send_json(res, 200, {{"status", "ok"}, {"verdict", to_json(v)}, {"progress", to_json(service_->progress())}});
        } catch (const NotFoundError& e) {
            send_error(res, 404, e.what());
        } catch (const ValidationError& e) {
            send_error(res, 400, e.what());
        }
    });

    srv.Get("/api/progress", [this](const httplib::Request&, httplib::Response& res) {
        if (!service_) return send_error(res, 409, "review queue not loaded");
        send_json(res, 200, to_json(service_->progress()));
    });

    srv.Get(R"(/api/images/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
        if (!service_) return send_error(res, 409, "review queue not loaded");
        const auto image_id = httplib::detail::decode_url(req.matches[1].str(), false);
        const auto* annotation = service_->annotation(image_id);
        if (!annotation) return send_error(res, 404, fmt::format("unknown image '{}'", image_id));
        const auto& uri = annotation->image_uri;
        if (uri.rfind("http://", 0) == 0 || uri.rfind("https://", 0) == 0) {
            res.set_redirect(uri);
            return;
        }
        std::filesystem::path path = uri.rfind("file://", 0) == 0 ? uri.substr(7) : uri;
        if (path.is_relative()) path = options_.image_root / path;
        std::ifstream in(path, std::ios::binary);
        if (uri.empty() || !in) return send_error(res, 404, fmt::format("image file for '{}' not found", image_id));
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        res.set_content(std::move(bytes), content_type_for(path));
    });

    srv.set_exception_handler([](const httplib::Request& req, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        spdlog::error("{} {}: {}", req.method, req.path, what);
        send_error(res, 500, what);
    });

    if (options_.static_dir && !srv.set_mount_point("/", options_.static_dir->string()))
        spdlog::warn("static directory '{}' not found; UI not served", options_.static_dir->string());
}

int ReviewServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = server_->bind_to_any_port(host);
        if (bound < 0) throw IoError(fmt::format("cannot bind to {}", host));
        return bound;
    }
    if (!server_->bind_to_port(host, port)) throw IoError(fmt::format("cannot bind to {}:{}", host, port));
    return port;
}

void ReviewServer::listen() {
    server_->listen_after_bind();
}

void ReviewServer::stop() {
    if (server_) server_->stop();
}

bool ReviewServer::running() const {
    return server_->is_running();
}

void ReviewServer::wait_until_ready() const {
    server_->wait_until_ready();
}

} // namespace semanom::review
