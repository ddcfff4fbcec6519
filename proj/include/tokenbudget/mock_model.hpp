#pragma once

#include <algorithm>
#include <array>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tokenbudget/hash.hpp"
#include "tokenbudget/model.hpp"

namespace tokenbudget {

enum class Persona { overthinker, compliant, never_answers, echo };
enum class AfterReminder { answers_promptly, ignores };

/// Deterministic behaviour of a scripted model. Tokens are whitespace-delimited
/// words, so counts are exact and segment boundaries fall between words.
///
/// The script is positional: token i is a pure function of (script, seed, i),
/// and the position is recovered from the words already present in assistant
/// turns of the context. That makes the mock stateless across requests, which
/// is what segmented decoding against a remote endpoint needs.
struct MockScript {
    Persona persona = Persona::overthinker;
    std::string answer_text = "42";
    Tokens answer_position = 150;  // offset of the first marker word
    Tokens trailing_filler = 4000; // overthinker: words after the answer before stopping
    std::uint64_t seed = 0;
    AfterReminder after_reminder = AfterReminder::ignores;
    /// Asked to answer before this offset, the model gives `premature_answer`.
    Tokens insight_position = 0;
    std::string premature_answer;
    /// Natural stop for never-answers / echo; unlimited when absent.
    std::optional<Tokens> length_limit;

    static MockScript overthinker(std::string answer, Tokens position, Tokens trailing, std::uint64_t seed = 0) {
        MockScript s;
        s.persona = Persona::overthinker;
        s.answer_text = std::move(answer);
        s.answer_position = position;
        s.trailing_filler = trailing;
        s.seed = seed;
        return s;
    }

    static MockScript compliant(std::string answer, Tokens position, std::uint64_t seed = 0) {
        MockScript s;
        s.persona = Persona::compliant;
        s.answer_text = std::move(answer);
        s.answer_position = position;
        s.trailing_filler = 0;
        s.after_reminder = AfterReminder::answers_promptly;
        s.seed = seed;
        return s;
    }

    static MockScript never_answers(std::uint64_t seed = 0) {
        MockScript s;
        s.persona = Persona::never_answers;
        s.seed = seed;
        return s;
    }

    static MockScript echo() {
        MockScript s;
        s.persona = Persona::echo;
        return s;
    }
};

namespace mock_detail {

inline constexpr std::array<std::string_view, 32> kFiller = {
    "wait",   "let",    "me",     "check",  "this",  "again", "hmm",      "so",
    "the",    "value",  "is",     "maybe",  "reconsider", "step", "carefully", "actually",
    "double", "verify", "that",   "right",  "okay",  "but",   "what",     "if",
    "we",     "assume", "another", "approach", "think", "more", "alternatively", "recompute",
};

inline std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && (text[i] == ' ' || text[i] == '\n' || text[i] == '\t' || text[i] == '\r')) ++i;
        const auto start = i;
        while (i < text.size() && !(text[i] == ' ' || text[i] == '\n' || text[i] == '\t' || text[i] == '\r')) ++i;
        if (i > start) out.emplace_back(text.substr(start, i - start));
    }
    return out;
}

inline std::string filler_word(std::uint64_t seed, Tokens i) {
    const auto h = hash_combine(seed, static_cast<std::uint64_t>(i));
    return std::string(kFiller[h % kFiller.size()]);
}

/// Marker followed by the answer words; the last word ends the line.
inline std::vector<std::string> answer_words(std::string_view answer) {
    std::vector<std::string> w{"**Final", "Answer:**"};
    for (auto& a : split_words(answer)) w.push_back(std::move(a));
    return w;
}

inline std::string render(const std::vector<std::string>& words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        out += words[i];
        out += i + 1 == words.size() ? '\n' : ' ';
    }
    return out;
}

enum class Turn { continuation, reminder, termination };

inline Turn classify(const Conversation& context) {
    if (context.size() < 2 || context.back().role != "user") return Turn::continuation;
    return context.back().content.find("<System>") != std::string::npos ? Turn::reminder : Turn::termination;
}

}  // namespace mock_detail

class MockModel : public ModelHandle {
public:
    using ScriptResolver = std::function<MockScript(const Conversation&, std::uint64_t seed)>;

    MockModel(std::string id, MockScript script)
        : id_(std::move(id)), resolve_([s = std::move(script)](const Conversation&, std::uint64_t) { return s; }) {}

    MockModel(std::string id, ScriptResolver resolver) : id_(std::move(id)), resolve_(std::move(resolver)) {}

    const std::string& model_id() const override { return id_; }

    Capabilities capabilities() const override {
        Capabilities c;
        c.reports_usage = true;
        c.concurrency_limit = 1 << 16;
        c.honors_seed = true;
        return c;
    }

    Tokens count_tokens(std::string_view text) const override { return count_words(text); }

    Generation generate(const Conversation& context, const GenerateOptions& options) override {
        using namespace mock_detail;
        const MockScript script = resolve_(context, options.seed);
        const std::uint64_t seed = hash_combine(script.seed, options.seed);

        Tokens offset = 0;
        for (const auto& m : context)
            if (m.role == "assistant") offset += count_words(m.content);

        const Turn turn = classify(context);
        const bool knows_answer = script.persona == Persona::overthinker || script.persona == Persona::compliant;
        const std::string& chosen = offset >= script.insight_position || script.premature_answer.empty()
                                        ? script.answer_text
                                        : script.premature_answer;

        if (knows_answer && turn == Turn::termination) return reply(answer_words(chosen), options.cap);
        if (knows_answer && turn == Turn::reminder && script.after_reminder == AfterReminder::answers_promptly) {
            std::vector<std::string> words{"Running", "low", "on", "budget."};
            for (auto& w : answer_words(chosen)) words.push_back(std::move(w));
            return reply(words, options.cap);
        }
        return stream(script, context, seed, offset, options.cap);
    }

    /// Token at position i of the uninterrupted script, or nullopt past its end.
    static std::optional<std::string> script_token(const MockScript& s, std::uint64_t seed, Tokens i,
                                                   const std::vector<std::string>& echo_words = {}) {
        using namespace mock_detail;
        switch (s.persona) {
        case Persona::overthinker:
        case Persona::compliant: {
            if (i < s.answer_position) return filler_word(seed, i) + " ";
            const auto words = answer_words(s.answer_text);
            const Tokens k = i - s.answer_position;
            if (k < static_cast<Tokens>(words.size()))
                return words[static_cast<std::size_t>(k)] + (k + 1 == static_cast<Tokens>(words.size()) ? "\n" : " ");
            const Tokens trailing = s.persona == Persona::overthinker ? s.trailing_filler : 0;
            if (k - static_cast<Tokens>(words.size()) < trailing) return filler_word(seed, i) + " ";
            return std::nullopt;
        }
        case Persona::never_answers:
            if (s.length_limit && i >= *s.length_limit) return std::nullopt;
            return filler_word(seed, i) + " ";
        case Persona::echo:
            if (s.length_limit && i >= *s.length_limit) return std::nullopt;
            if (echo_words.empty()) return filler_word(seed, i) + " ";
            return echo_words[static_cast<std::size_t>(i) % echo_words.size()] + " ";
        }
        return std::nullopt;
    }

private:
    static Generation reply(const std::vector<std::string>& words, Tokens cap) {
        Generation g;
        const auto n = std::min<std::size_t>(words.size(), static_cast<std::size_t>(cap));
        std::vector<std::string> kept(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(n));
        g.text = mock_detail::render(kept);
        g.tokens_used = static_cast<Tokens>(n);
        g.stop = n < words.size() ? StopReason::cap : StopReason::natural;
        return g;
    }

    static Generation stream(const MockScript& script, const Conversation& context, std::uint64_t seed,
                             Tokens offset, Tokens cap) {
        std::vector<std::string> echo_words;
        if (script.persona == Persona::echo && !context.empty())
            echo_words = mock_detail::split_words(context.back().content);
        Generation g;
        g.stop = StopReason::cap;
        for (Tokens i = 0; i < cap; ++i) {
            auto tok = script_token(script, seed, offset + i, echo_words);
            if (!tok) {
                g.stop = StopReason::natural;
                break;
            }
            g.text += *tok;
            ++g.tokens_used;
        }
        // Ran exactly to the end of the script: report a natural stop.
        if (g.stop == StopReason::cap && !script_token(script, seed, offset + cap, echo_words))
            g.stop = StopReason::natural;
        return g;
    }

    std::string id_;
    ScriptResolver resolve_;
};

/// Handle backed by an arbitrary callable; used for judges and fault injection in tests.
class CallbackModel : public ModelHandle {
public:
    using Fn = std::function<Generation(const Conversation&, const GenerateOptions&)>;

    CallbackModel(std::string id, Fn fn, Capabilities caps = {})
        : id_(std::move(id)), fn_(std::move(fn)), caps_(caps) {}

    const std::string& model_id() const override { return id_; }
    Capabilities capabilities() const override { return caps_; }
    Tokens count_tokens(std::string_view text) const override { return count_words(text); }
    Generation generate(const Conversation& context, const GenerateOptions& options) override {
        return fn_(context, options);
    }

    /// Convenience: a handle that replies with fixed text, counting words as tokens.
    static Generation text_reply(std::string text) {
        Generation g;
        g.tokens_used = count_words(text);
        g.text = std::move(text);
        g.stop = StopReason::natural;
        return g;
    }

private:
    std::string id_;
    Fn fn_;
    Capabilities caps_;
};

}  // namespace tokenbudget
