#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tokenbudget/model.hpp"

namespace tokenbudget {

/// Incremental server-sent-event parser. Feed arbitrary byte chunks; complete
/// events (joined `data:` lines) come out once their blank line arrives.
class SseParser {
public:
    std::vector<std::string> feed(std::string_view chunk) {
        buffer_.append(chunk);
        std::vector<std::string> events;
        std::size_t start = 0;
        for (auto nl = buffer_.find('\n', start); nl != std::string::npos; nl = buffer_.find('\n', start)) {
            std::string_view line(buffer_.data() + start, nl - start);
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            start = nl + 1;
            if (line.empty()) {
                if (has_data_) events.push_back(std::move(data_));
                data_.clear();
                has_data_ = false;
                continue;
            }
            if (line.front() == ':') continue;  // comment / keep-alive
            if (line.starts_with("data:")) {
                auto value = line.substr(5);
                if (!value.empty() && value.front() == ' ') value.remove_prefix(1);
                if (has_data_) data_ += '\n';
                data_.append(value);
                has_data_ = true;
            }
            // event:, id:, retry: are not used by chat completion streams
        }
        buffer_.erase(0, start);
        return events;
    }

    /// Flushes a final event that was not followed by a blank line.
    std::vector<std::string> finish() {
        std::vector<std::string> events;
        if (!buffer_.empty()) {
            auto rest = feed("\n");
            events.insert(events.end(), rest.begin(), rest.end());
        }
        if (has_data_) events.push_back(std::move(data_));
        data_.clear();
        has_data_ = false;
        return events;
    }

private:
    std::string buffer_;
    std::string data_;
    bool has_data_ = false;
};

struct ChatRequest {
    std::string model;
    Conversation messages;
    Tokens max_tokens = 16;
    std::optional<std::uint64_t> seed;
    std::optional<double> temperature;
    bool stream = true;
};

inline std::string to_json_body(const ChatRequest& r) {
    nlohmann::json j;
    j["model"] = r.model;
    j["messages"] = nlohmann::json::array();
    for (const auto& m : r.messages) j["messages"].push_back({{"role", m.role}, {"content", m.content}});
    j["max_tokens"] = r.max_tokens;
    if (r.seed) j["seed"] = *r.seed;
    if (r.temperature) j["temperature"] = *r.temperature;
    j["stream"] = r.stream;
    if (r.stream) j["stream_options"] = {{"include_usage", true}};
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

inline ChatRequest parse_chat_request(std::string_view body) {
    const auto j = nlohmann::json::parse(body);
    ChatRequest r;
    r.model = j.at("model").get<std::string>();
    for (const auto& m : j.at("messages"))
        r.messages.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
    if (auto it = j.find("max_tokens"); it != j.end()) r.max_tokens = it->get<Tokens>();
    if (auto it = j.find("max_completion_tokens"); it != j.end()) r.max_tokens = it->get<Tokens>();
    if (auto it = j.find("seed"); it != j.end() && !it->is_null()) r.seed = it->get<std::uint64_t>();
    if (auto it = j.find("temperature"); it != j.end() && !it->is_null()) r.temperature = it->get<double>();
    r.stream = j.value("stream", false);
    return r;
}

/// Accumulates a streamed chat completion from its `data:` payloads.
struct StreamAccumulator {
    std::string text;
    std::optional<std::string> finish_reason;
    std::optional<Tokens> completion_tokens;
    bool done = false;

    /// Returns false if the payload is not valid chunk JSON.
    bool consume(const std::string& payload) {
        if (payload == "[DONE]") {
            done = true;
            return true;
        }
        const auto j = nlohmann::json::parse(payload, nullptr, false);
        if (j.is_discarded() || !j.is_object()) return false;
        if (auto it = j.find("choices"); it != j.end() && it->is_array()) {
            for (const auto& c : *it) {
                if (auto d = c.find("delta"); d != c.end()) {
                    if (auto content = d->find("content"); content != d->end() && content->is_string())
                        text += content->get<std::string>();
                }
                if (auto f = c.find("finish_reason"); f != c.end() && f->is_string())
                    finish_reason = f->get<std::string>();
            }
        }
        if (auto u = j.find("usage"); u != j.end() && u->is_object())
            if (auto ct = u->find("completion_tokens"); ct != u->end() && ct->is_number_integer())
                completion_tokens = ct->get<Tokens>();
        return true;
    }
};

}  // namespace tokenbudget
