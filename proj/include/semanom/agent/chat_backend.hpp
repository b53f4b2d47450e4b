#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semanom/util/retry.hpp"

namespace semanom::agent {

struct ContentPart {
    enum class Kind { Text, Image };
    Kind kind = Kind::Text;
    std::string text;      // Kind::Text
    std::string image_url; // Kind::Image: data:<mime>;base64,... or a plain URL
};

struct ChatMessage {
    std::string role = "user";
    std::vector<ContentPart> content;
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    // Routing metadata; never sent over the wire.
    std::string stage;
    std::string object;

    // Concatenated text parts of all messages.
    std::string text() const;
};

struct ChatReply {
    std::string text;
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;
};

// Chat-completions style model endpoint. send() throws TransportError for
// failures worth retrying and ProtocolError for malformed exchanges.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatReply send(const ChatRequest& request) = 0;
};

nlohmann::json to_wire(const ChatRequest& request);
ChatReply reply_from_wire(const nlohmann::json& body);

struct HttpChatOptions {
    std::string endpoint; // e.g. https://api.openai.com/v1/chat/completions
    std::string api_key;  // sent as a bearer token when non-empty
    std::chrono::seconds timeout{120};
};

class HttpChatBackend final : public ChatBackend {
public:
    explicit HttpChatBackend(HttpChatOptions options);
    ChatReply send(const ChatRequest& request) override;

private:
    HttpChatOptions options_;
};

// Test double: forwards to a callback and counts calls. The callback must be
// thread-safe because stage-2 work runs concurrently.
class ScriptedChatBackend final : public ChatBackend {
public:
    using Handler = std::function<ChatReply(const ChatRequest&)>;

    explicit ScriptedChatBackend(Handler handler) : handler_(std::move(handler)) {}
    ChatReply send(const ChatRequest& request) override;
    std::size_t calls() const { return calls_.load(); }

private:
    Handler handler_;
    std::atomic<std::size_t> calls_{0};
};

// Canned, deterministic answers for every stage, used by `annotate --backend
// mock` and the offline tests. Token counts are whitespace word counts of the
// request text and of the reply.
ChatReply canned_reply(const ChatRequest& request);

std::uint64_t count_words(std::string_view text);

} // namespace semanom::agent
