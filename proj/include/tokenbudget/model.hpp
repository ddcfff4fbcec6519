#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tokenbudget/types.hpp"

namespace tokenbudget {

enum class StopReason { natural, cap, transport_error };

inline std::string_view to_string(StopReason s) {
    switch (s) {
    case StopReason::natural: return "natural";
    case StopReason::cap: return "cap";
    case StopReason::transport_error: return "transport-error";
    }
    return "natural";
}

struct Message {
    std::string role;  // "user" or "assistant"
    std::string content;

    bool operator==(const Message&) const = default;
};

using Conversation = std::vector<Message>;

struct GenerateOptions {
    Tokens cap = 1;
    std::uint64_t seed = 0;
    std::optional<double> temperature;
};

struct Generation {
    std::string text;
    Tokens tokens_used = 0;
    StopReason stop = StopReason::natural;
    bool estimated_tokens = false;  // tokens_used approximated from characters
    std::string error;              // set when stop == transport_error
};

struct Capabilities {
    bool reports_usage = true;
    Tokens max_context = 1 << 20;
    int concurrency_limit = 1;
    bool honors_seed = true;
};

/// The judge endpoint failed at the transport level (timeout, connection, 5xx).
class JudgeTransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The judge answered, but not in the required format, even after a retry.
class JudgeRefusalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Uniform handle over anything that can continue a conversation.
/// Implementations must be safe to call from several threads at once
/// (they enforce their own in-flight ceiling).
class ModelHandle {
public:
    virtual ~ModelHandle() = default;

    virtual const std::string& model_id() const = 0;
    virtual Capabilities capabilities() const = 0;

    /// Returns at most `options.cap` new tokens. The caller owns the context.
    virtual Generation generate(const Conversation& context, const GenerateOptions& options) = 0;

    virtual Tokens count_tokens(std::string_view text) const = 0;
};

/// ceil(len / chars_per_token); used when an endpoint does not report usage.
inline Tokens approx_tokens(std::string_view text, double chars_per_token = 4.0) {
    if (text.empty()) return 0;
    return static_cast<Tokens>(std::ceil(static_cast<double>(text.size()) / chars_per_token));
}

/// Whitespace-delimited word count. This is the mock tokenizer.
inline Tokens count_words(std::string_view text) {
    Tokens n = 0;
    bool in_word = false;
    for (unsigned char c : text) {
        const bool space = c == ' ' || c == '\n' || c == '\t' || c == '\r';
        if (!space && !in_word) ++n;
        in_word = !space;
    }
    return n;
}

inline Tokens count_tokens(const ModelHandle& handle, std::string_view text) {
    return handle.count_tokens(text);
}

inline Tokens context_tokens(const ModelHandle& handle, const Conversation& context) {
    Tokens n = 0;
    for (const auto& m : context) n += handle.count_tokens(m.content);
    return n;
}

/// Checked entry point: enforces cap >= 1 and the context limit before
/// delegating to the handle.
inline Generation generate(ModelHandle& handle, const Conversation& context, const GenerateOptions& options) {
    if (options.cap < 1) throw std::invalid_argument("generation cap must be >= 1");
    const auto limit = handle.capabilities().max_context;
    if (context_tokens(handle, context) > limit)
        throw std::length_error("context exceeds " + std::to_string(limit) + " tokens for model " +
                                handle.model_id());
    return handle.generate(context, options);
}

}  // namespace tokenbudget
