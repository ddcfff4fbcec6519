#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <memory>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <thread>

#include "httplib.h"
#include "tokenbudget/chat_protocol.hpp"
#include "tokenbudget/model.hpp"

namespace tokenbudget {

struct EndpointConfig {
    std::string base_url;  // e.g. http://127.0.0.1:8080/v1 or https://api.example.com
    std::string api_key;
    std::string model;
    std::optional<double> temperature;
    int retries = 2;
    std::chrono::milliseconds backoff{200};  // doubled after every failed attempt
    std::chrono::seconds connect_timeout{10};
    std::chrono::seconds read_timeout{300};
    int concurrency_limit = 4;
    double chars_per_token = 4.0;
    bool honors_seed = true;
    Tokens max_context = 1 << 17;
};

/// Splits "scheme://host:port/path" into the origin and the request path.
inline std::pair<std::string, std::string> split_endpoint_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw std::invalid_argument("endpoint url needs a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!path.empty() && path.back() == '/') path.pop_back();
    if (path.ends_with("/chat/completions")) return {origin, path};
    if (path.empty()) path = "/v1";
    return {origin, path + "/chat/completions"};
}

/// Chat-completion client over HTTP with SSE streaming. Thread-safe; at most
/// `concurrency_limit` requests are in flight at once.
class ChatEndpointModel : public ModelHandle {
public:
    explicit ChatEndpointModel(EndpointConfig cfg) : cfg_(std::move(cfg)) {
        if (cfg_.concurrency_limit < 1) throw std::invalid_argument("concurrency limit must be >= 1");
        if (cfg_.retries < 0) throw std::invalid_argument("retries must be >= 0");
        if (cfg_.chars_per_token <= 0) throw std::invalid_argument("chars per token must be > 0");
        std::tie(origin_, path_) = split_endpoint_url(cfg_.base_url);
        slots_ = std::make_unique<std::counting_semaphore<>>(cfg_.concurrency_limit);
    }

    const std::string& model_id() const override { return cfg_.model; }

    Capabilities capabilities() const override {
        Capabilities c;
        c.reports_usage = true;  // per request; estimated_tokens flags the fallback
        c.max_context = cfg_.max_context;
        c.concurrency_limit = cfg_.concurrency_limit;
        c.honors_seed = cfg_.honors_seed;
        return c;
    }

    const EndpointConfig& config() const { return cfg_; }

    Tokens count_tokens(std::string_view text) const override { return approx_tokens(text, cfg_.chars_per_token); }

    Generation generate(const Conversation& context, const GenerateOptions& options) override {
        ChatRequest req;
        req.model = cfg_.model;
        req.messages = context;
        req.max_tokens = options.cap;
        req.seed = options.seed;
        req.temperature = options.temperature ? options.temperature : cfg_.temperature;
        const std::string body = to_json_body(req);

        slots_->acquire();
        struct Release {
            std::counting_semaphore<>& s;
            ~Release() { s.release(); }
        } release{*slots_};

        auto delay = cfg_.backoff;
        std::string last_error;
        for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(delay);
                delay *= 2;
            }
            Attempt a = post(body, options.cap);
            if (a.ok) return std::move(a.generation);
            last_error = std::move(a.error);
            if (!a.retryable) break;
        }
        Generation g;
        g.stop = StopReason::transport_error;
        g.error = last_error;
        return g;
    }

private:
    struct Attempt {
        bool ok = false;
        bool retryable = false;
        std::string error;
        Generation generation;
    };

    Attempt post(const std::string& body, Tokens cap) const {
        httplib::Client cli(origin_);
        cli.set_connection_timeout(cfg_.connect_timeout);
        cli.set_read_timeout(cfg_.read_timeout);

        httplib::Request req;
        req.method = "POST";
        req.path = path_;
        req.body = body;
        req.set_header("Content-Type", "application/json");
        req.set_header("Accept", "text/event-stream");
        if (!cfg_.api_key.empty()) req.set_header("Authorization", "Bearer " + cfg_.api_key);

        int status = 0;
        std::string raw;  // error bodies
        SseParser sse;
        StreamAccumulator acc;
        bool malformed = false;
        req.response_handler = [&](const httplib::Response& r) {
            status = r.status;
            return true;
        };
        req.content_receiver = [&](const char* data, std::size_t n, std::uint64_t, std::uint64_t) {
            if (status != 200) {
                raw.append(data, n);
                return true;
            }
            for (const auto& ev : sse.feed(std::string_view(data, n)))
                if (!acc.consume(ev)) malformed = true;
            return true;
        };

        httplib::Response res;
        httplib::Error err = httplib::Error::Success;
        const bool sent = cli.send(req, res, err);

        Attempt a;
        if (!sent && status == 0) {
            a.retryable = true;
            a.error = "transport: " + httplib::to_string(err);
            return a;
        }
        if (status != 200) {
            a.retryable = status >= 500 || status == 429;
            a.error = "http " + std::to_string(status) + ": " + raw.substr(0, 500);
            return a;
        }
        for (const auto& ev : sse.finish())
            if (!acc.consume(ev)) malformed = true;
        if (!sent || !acc.done) {
            a.retryable = true;
            a.error = "stream ended before [DONE]" + (sent ? std::string() : ": " + httplib::to_string(err));
            return a;
        }
        if (malformed) {
            a.error = "malformed stream chunk";
            return a;
        }

        Generation& g = a.generation;
        g.text = std::move(acc.text);
        if (acc.completion_tokens) {
            g.tokens_used = *acc.completion_tokens;
        } else {
            g.tokens_used = approx_tokens(g.text, cfg_.chars_per_token);
            g.estimated_tokens = true;
        }
        g.tokens_used = std::clamp<Tokens>(g.tokens_used, 0, cap);
        if (acc.finish_reason == "length")
            g.stop = StopReason::cap;
        else if (acc.finish_reason)
            g.stop = StopReason::natural;
        else
            g.stop = g.tokens_used >= cap ? StopReason::cap : StopReason::natural;
        a.ok = true;
        return a;
    }

    EndpointConfig cfg_;
    std::string origin_;
    std::string path_;
    std::unique_ptr<std::counting_semaphore<>> slots_;
};

}  // namespace tokenbudget
