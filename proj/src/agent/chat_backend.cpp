#include "semanom/agent/chat_backend.hpp"

#include <cctype>

#include <fmt/format.h>
#include <httplib.h>

#include "semanom/errors.hpp"
#include "semanom/util/net.hpp"

namespace semanom::agent {

using nlohmann::json;

std::string ChatRequest::text() const {
    std::string out;
    for (const auto& m : messages) {
        for (const auto& p : m.content) {
            if (p.kind != ContentPart::Kind::Text) continue;
            if (!out.empty()) out += '\n';
            out += p.text;
        }
    }
    return out;
}

json to_wire(const ChatRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages) {
        json parts = json::array();
        for (const auto& p : m.content) {
            if (p.kind == ContentPart::Kind::Text)
                parts.push_back({{"type", "text"}, {"text", p.text}});
            else
                parts.push_back({{"type", "image_url"}, {"image_url", {{"url", p.image_url}}}});
        }
        messages.push_back({{"role", m.role}, {"content", parts}});
    }
    return {{"model", request.model}, {"messages", messages}};
}

ChatReply reply_from_wire(const json& body) {
    if (!body.is_object() || !body.contains("choices") || !body["choices"].is_array() ||
        body["choices"].empty())
        throw ProtocolError("chat reply has no choices");
    const auto& message = body["choices"][0].value("message", json::object());
    if (!message.contains("content") || !message["content"].is_string())
        throw ProtocolError("chat reply has no text content");
    ChatReply reply;
    reply.text = message["content"].get<std::string>();
    if (body.contains("usage") && body["usage"].is_object()) {
        const auto& usage = body["usage"];
        reply.prompt_tokens = usage.value("prompt_tokens", std::uint64_t{0});
        reply.completion_tokens = usage.value("completion_tokens", std::uint64_t{0});
    }
    return reply;
}

HttpChatBackend::HttpChatBackend(HttpChatOptions options) : options_(std::move(options)) {
    util::split_endpoint(options_.endpoint);
}

ChatReply HttpChatBackend::send(const ChatRequest& request) {
    const auto endpoint = util::split_endpoint(options_.endpoint);
    util::note_outbound_request();
    httplib::Client client(endpoint.scheme_host_port);
    client.set_connection_timeout(options_.timeout);
    client.set_read_timeout(options_.timeout);
    client.set_write_timeout(options_.timeout);
    httplib::Headers headers;
    if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

    auto res = client.Post(endpoint.path, headers, to_wire(request).dump(), "application/json");
    if (!res)
        throw TransportError(fmt::format("chat request to {} failed: {}", options_.endpoint,
                                         httplib::to_string(res.error())));
    if (res->status >= 500 || res->status == 429)
        throw TransportError(fmt::format("chat endpoint returned HTTP {}", res->status));
    if (res->status != 200)
        throw ProtocolError(fmt::format("chat endpoint returned HTTP {}: {}", res->status, res->body));
    json body;
    try {
        body = json::parse(res->body);
    } catch (const json::parse_error&) {
        throw ProtocolError("chat reply is not JSON");
    }
    return reply_from_wire(body);
}

ChatReply ScriptedChatBackend::send(const ChatRequest& request) {
    calls_.fetch_add(1);
    return handler_(request);
}

std::uint64_t count_words(std::string_view text) {
    std::uint64_t n = 0;
    bool in_word = false;
    for (unsigned char c : text) {
        const bool space = std::isspace(c) != 0;
        if (!space && !in_word) ++n;
        in_word = !space;
    }
    return n;
}

namespace {

std::string canned_text(const ChatRequest& request) {
    const auto& stage = request.stage;
    const auto& obj = request.object;
    if (stage == "object_perceiver") {
        return "#Person#: A man with three arms, one of which is unnaturally attached to his back. "
               "He wears a blue jacket.\n\n"
               "#Chair#: A wooden chair that appears to be floating without support, casting no shadow.";
    }
    if (stage == "attribute_step1") {
        if (obj == "Person")
            return "The person has a third arm growing from the middle of the back. The extra arm has "
                   "no shoulder joint and its sleeve does not match the jacket.";
        return fmt::format("The {} has no visible legs and hovers above the floor.", obj);
    }
    if (stage == "attribute_step2") {
        if (obj == "Person")
            return "1. **Abnormal Phenomenon Name**: Extra arm on back\n"
                   "**Observed Issue**: A third arm is attached to the middle of the man's back.\n"
                   "**Explanation**: Human anatomy has two arms attached at the shoulders.";
        return fmt::format("1. **Abnormal Phenomenon Name**: {} without legs\n"
                           "**Observed Issue**: The {} has no legs or other support.\n"
                           "**Explanation**: Furniture needs legs or a base to stand.",
                           obj, obj);
    }
    if (stage == "relation_step1") {
        return fmt::format("- **Relationship**: {} and the floor\n"
                           "- **Observed Issue**: No contact shadow between the {} and the floor.\n"
                           "- **Explanation**: Objects resting on a surface cast a shadow onto it.",
                           obj, obj);
    }
    if (stage == "relation_step2") {
        if (obj == "Chair")
            return "1. **Objects Involved**: Chair, floor\n"
                   "**Observed Issue**: The chair is floating without support above the floor.\n"
                   "**Reasoning**: Gravity would pull an unsupported chair down.";
        return fmt::format("1. **Objects Involved**: {}, Chair\n"
                           "**Observed Issue**: The {} ignores the floating chair next to him.\n"
                           "**Reasoning**: The scene treats an impossible event as ordinary.",
                           obj, obj);
    }
    if (stage == "integrator_step1") {
        return fmt::format("1. **Observed Phenomenon**: Implausible {}\n"
                           "   - **Sources**: Both\n"
                           "   - **Details**: See the attribute and relation findings for the {}.\n"
                           "   - **Explanation**: The configuration cannot occur physically.",
                           obj, obj);
    }
    if (stage == "integrator_step2") {
        return "1. **Object Name**: Person\n"
               "**Phenomenon**: The man has an extra arm attached to his back.\n"
               "**Explanation**: Humans have exactly two arms.\n"
               "2. **Object Name**: Chair\n"
               "**Phenomenon**: The chair floats above the ground without support.\n"
               "**Explanation**: Unsupported objects fall under gravity.";
    }
    if (stage == "formatter") {
        return "@1. **Name**: Abnormal number of hands\n"
               "- **Observed Phenomenon**: The person on the left shows a second left hand growing "
               "out of the forearm.\n"
               "- **Reasoning**: A person has exactly one left hand.\n"
               "- **Severity Score**: 5/100 (highly unrealistic)\n\n"
               "@2. **Name**: Suspended chair without support\n"
               "- **Observed Phenomenon**: A chair hovers above the floor with nothing holding it up.\n"
               "- **Reasoning**: Without contact or suspension the chair would fall.\n"
               "- **Severity Score**: 10/100 (extremely unnatural)";
    }
    return "";
}

} // namespace

ChatReply canned_reply(const ChatRequest& request) {
    ChatReply reply;
    reply.text = canned_text(request);
    reply.prompt_tokens = count_words(request.text());
    reply.completion_tokens = count_words(reply.text);
    return reply;
}

} // namespace semanom::agent
