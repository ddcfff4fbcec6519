#pragma once

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "tokenbudget/chat_protocol.hpp"
#include "tokenbudget/model.hpp"

namespace tokenbudget {

/// Splits generated text into stream chunks: each non-space run together with
/// the whitespace after it. For the mock this is one chunk per token.
inline std::vector<std::string> stream_chunks(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    auto space = [](char c) { return c == ' ' || c == '\n' || c == '\t' || c == '\r'; };
    while (i < text.size()) {
        const auto start = i;
        while (i < text.size() && !space(text[i])) ++i;
        while (i < text.size() && space(text[i])) ++i;
        out.emplace_back(text.substr(start, i - start));
    }
    return out;
}

/// Local chat-completion server backed by in-process model handles. Speaks the
/// same request/SSE format as ChatEndpointModel and counts concurrent requests.
class FakeChatEndpoint {
public:
    struct Options {
        std::string host = "127.0.0.1";
        int port = 0;  // 0: any free port
        std::chrono::microseconds token_delay{0};
        bool report_usage = true;
        int fail_first_n = 0;  // answer the first n requests with 503
        std::size_t threads = 32;
    };

    FakeChatEndpoint() : FakeChatEndpoint(Options{}) {}

    explicit FakeChatEndpoint(Options opts) : opts_(std::move(opts)) {
        const auto threads = opts_.threads;
        server_.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
        auto handler = [this](const httplib::Request& req, httplib::Response& res) { handle(req, res); };
        server_.Post("/v1/chat/completions", handler);
        server_.Post("/chat/completions", handler);
    }

    FakeChatEndpoint(const FakeChatEndpoint&) = delete;
    FakeChatEndpoint& operator=(const FakeChatEndpoint&) = delete;

    ~FakeChatEndpoint() { stop(); }

    void add_model(std::shared_ptr<ModelHandle> model) {
        std::lock_guard lock(mu_);
        const auto id = model->model_id();
        models_[id] = std::move(model);
    }

    /// Binds and serves on a background thread; returns the bound port.
    int start() {
        port_ = opts_.port == 0 ? server_.bind_to_any_port(opts_.host) : opts_.port;
        if (opts_.port != 0 && !server_.bind_to_port(opts_.host, opts_.port)) port_ = -1;
        if (port_ < 0) throw std::runtime_error("fake endpoint could not bind " + opts_.host);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port_;
    }

    /// Blocks serving on the calling thread (for the serve-mock subcommand).
    bool listen() {
        port_ = opts_.port == 0 ? server_.bind_to_any_port(opts_.host) : opts_.port;
        if (opts_.port != 0 && !server_.bind_to_port(opts_.host, opts_.port)) return false;
        return server_.listen_after_bind();
    }

    void stop() {
        if (server_.is_running()) server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    int port() const { return port_; }
    std::string base_url() const { return "http://" + opts_.host + ":" + std::to_string(port_) + "/v1"; }

    int max_in_flight() const { return max_in_flight_.load(); }
    int in_flight() const { return in_flight_.load(); }
    long requests() const { return requests_.load(); }

private:
    void enter() {
        const int now = ++in_flight_;
        int seen = max_in_flight_.load();
        while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
        }
    }
    void leave() { --in_flight_; }

    static void error(httplib::Response& res, int status, const std::string& message) {
        res.status = status;
        res.set_content(nlohmann::json{{"error", {{"message", message}}}}.dump(), "application/json");
    }

    void handle(const httplib::Request& req, httplib::Response& res) {
        const long n = ++requests_;
        enter();
        bool handed_off = false;
        struct Guard {
            FakeChatEndpoint* self;
            bool& handed_off;
            ~Guard() {
                if (!handed_off) self->leave();
            }
        } guard{this, handed_off};

        if (n <= opts_.fail_first_n) return error(res, 503, "temporarily unavailable");

        ChatRequest chat;
        try {
            chat = parse_chat_request(req.body);
        } catch (const std::exception& e) {
            return error(res, 400, std::string("bad request: ") + e.what());
        }
        if (chat.max_tokens < 1) return error(res, 400, "max_tokens must be >= 1");

        std::shared_ptr<ModelHandle> model;
        {
            std::lock_guard lock(mu_);
            if (auto it = models_.find(chat.model); it != models_.end()) model = it->second;
        }
        if (!model) return error(res, 404, "unknown model " + chat.model);

        GenerateOptions opts;
        opts.cap = chat.max_tokens;
        opts.seed = chat.seed.value_or(0);
        opts.temperature = chat.temperature;
        Generation g;
        try {
            g = generate(*model, chat.messages, opts);
        } catch (const std::exception& e) {
            return error(res, 400, e.what());
        }
        if (g.stop == StopReason::transport_error) return error(res, 502, g.error);
        const std::string finish = g.stop == StopReason::cap ? "length" : "stop";

        if (!chat.stream) {
            nlohmann::json j{{"object", "chat.completion"},
                             {"model", chat.model},
                             {"choices",
                              {{{"index", 0},
                                {"message", {{"role", "assistant"}, {"content", g.text}}},
                                {"finish_reason", finish}}}}};
            if (opts_.report_usage) j["usage"] = {{"completion_tokens", g.tokens_used}};
            res.set_content(j.dump(), "application/json");
            return;
        }

        auto chunks = std::make_shared<std::vector<std::string>>(stream_chunks(g.text));
        const auto tokens = g.tokens_used;
        const auto delay = opts_.token_delay;
        const bool usage = opts_.report_usage;
        const std::string model_name = chat.model;
        // Leave before the final event so a client never observes completion
        // while the request still counts as in flight.
        auto left = std::make_shared<std::atomic<bool>>(false);
        auto leave_once = [this, left] {
            if (!left->exchange(true)) leave();
        };
        handed_off = true;
        res.set_chunked_content_provider(
            "text/event-stream",
            [chunks, tokens, delay, usage, finish, model_name, leave_once](std::size_t, httplib::DataSink& sink) {
                auto send = [&sink](const std::string& payload) {
                    const std::string line = "data: " + payload + "\n\n";
                    return sink.write(line.data(), line.size());
                };
                auto chunk = [&](nlohmann::json delta, nlohmann::json fin) {
                    return nlohmann::json{{"object", "chat.completion.chunk"},
                                          {"model", model_name},
                                          {"choices", {{{"index", 0}, {"delta", delta}, {"finish_reason", fin}}}}}
                        .dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
                };
                if (!send(chunk({{"role", "assistant"}}, nullptr))) return false;
                for (const auto& c : *chunks) {
                    if (delay.count() > 0) std::this_thread::sleep_for(delay);
                    if (!send(chunk({{"content", c}}, nullptr))) return false;
                }
                if (!send(chunk(nlohmann::json::object(), finish))) return false;
                if (usage &&
                    !send(nlohmann::json{{"object", "chat.completion.chunk"},
                                         {"choices", nlohmann::json::array()},
                                         {"usage", {{"completion_tokens", tokens}}}}
                              .dump()))
                    return false;
                leave_once();
                if (!send("[DONE]")) return false;
                sink.done();
                return true;
            },
            [leave_once](bool) { leave_once(); });
    }

    Options opts_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = -1;
    std::mutex mu_;
    std::map<std::string, std::shared_ptr<ModelHandle>> models_;
    std::atomic<int> in_flight_{0};
    std::atomic<int> max_in_flight_{0};
    std::atomic<long> requests_{0};
};

}  // namespace tokenbudget
