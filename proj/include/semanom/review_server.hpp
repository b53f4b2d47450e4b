#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "semanom/review.hpp"

namespace httplib {
class Server;
}

namespace semanom::review {

struct ServerOptions {
    // Base for relative image_uri values.
    std::filesystem::path image_root = ".";
    // Optional directory of static files served at "/" (the review UI build).
    std::optional<std::filesystem::path> static_dir;
};

// HTTP front end of a ReviewService:
//   GET  /api/queue/next?annotator=ID
//   POST /api/verdicts        {image_id, anomaly_index, decision, annotator_id}
//   GET  /api/progress
//   GET  /api/images/{image_id}
// Without a service every queue route answers 409.
class ReviewServer {
public:
    ReviewServer(std::shared_ptr<ReviewService> service, ServerOptions options = {});
    ~ReviewServer();

    // Binds to `port` (0 picks a free one) and returns the bound port.
    int bind(const std::string& host, int port);
    // Blocks until stop().
    void listen();
    void stop();
    bool running() const;
    void wait_until_ready() const;

private:
    void install_routes();

    std::shared_ptr<ReviewService> service_;
    ServerOptions options_;
    std::unique_ptr<httplib::Server> server_;
};

std::string content_type_for(const std::filesystem::path& path);

} // namespace semanom::review
