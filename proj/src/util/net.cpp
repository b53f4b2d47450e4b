#include "semanom/util/net.hpp"

#include <atomic>

#include <fmt/format.h>

#include "semanom/errors.hpp"

namespace semanom::util {

namespace {
std::atomic<std::uint64_t> g_outbound{0};
}

Endpoint split_endpoint(std::string_view url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos)
        throw ValidationError(fmt::format("endpoint '{}' must start with http:// or https://", url));
    const auto scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https")
        throw ValidationError(fmt::format("unsupported scheme in endpoint '{}'", url));
    const auto path_begin = url.find('/', scheme_end + 3);
    if (path_begin == std::string_view::npos) return {std::string(url), "/"};
    return {std::string(url.substr(0, path_begin)), std::string(url.substr(path_begin))};
}

std::uint64_t outbound_request_count() {
    return g_outbound.load();
}

void note_outbound_request() {
    g_outbound.fetch_add(1);
}

} // namespace semanom::util
