#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace semanom::util {

// "http://host:8080/v1/chat" -> {"http://host:8080", "/v1/chat"}
struct Endpoint {
    std::string scheme_host_port;
    std::string path;
};

Endpoint split_endpoint(std::string_view url);

// Count of HTTP requests issued by any client in this process. The offline
// test suites assert it stays at zero.
std::uint64_t outbound_request_count();
void note_outbound_request();

} // namespace semanom::util
