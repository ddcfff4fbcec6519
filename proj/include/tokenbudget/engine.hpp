#pragma once

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tokenbudget/model.hpp"
#include "tokenbudget/prompts.hpp"
#include "tokenbudget/types.hpp"

namespace tokenbudget {

enum class EpisodeMode { terminator, naive, base };

inline const std::vector<std::string>& default_answer_markers() {
    static const std::vector<std::string> markers{"**Answer:**", "**Final Answer:**"};
    return markers;
}

/// n = min(250, floor(deadline / 2)).
inline Tokens interrupt_interval(Tokens deadline) {
    if (deadline < 2) throw std::invalid_argument("interrupt interval needs deadline >= 2, got " +
                                                  std::to_string(deadline));
    return std::min<Tokens>(250, deadline / 2);
}

struct EpisodePolicy {
    EpisodeMode mode = EpisodeMode::terminator;
    Tokens deadline = 500;
    Tokens forced_tail_cap = 64;
    Tokens safety_cap = 16384;  // base mode only
    std::vector<std::string> answer_markers = default_answer_markers();
    PromptTemplates templates;
    std::uint64_t seed = 0;
    std::optional<double> temperature;

    static EpisodePolicy terminator(Tokens deadline) { return make(EpisodeMode::terminator, deadline); }
    static EpisodePolicy naive(Tokens deadline) { return make(EpisodeMode::naive, deadline); }
    static EpisodePolicy base() { return make(EpisodeMode::base, 0); }

    Tokens interval() const { return mode == EpisodeMode::terminator ? interrupt_interval(deadline) : 0; }

private:
    static EpisodePolicy make(EpisodeMode m, Tokens d) {
        EpisodePolicy p;
        p.mode = m;
        p.deadline = d;
        return p;
    }
};

inline void validate(const EpisodePolicy& p) {
    if (p.answer_markers.empty()) throw std::invalid_argument("episode policy needs at least one answer marker");
    if (p.mode == EpisodeMode::base) {
        if (p.safety_cap < 1) throw std::invalid_argument("safety cap must be positive");
        return;
    }
    if (p.deadline <= 0) throw std::invalid_argument("episode deadline must be positive");
    if (p.forced_tail_cap <= 0) throw std::invalid_argument("forced tail cap must be positive");
    if (p.mode == EpisodeMode::terminator) interrupt_interval(p.deadline);
}

/// Text after the last answer marker, up to the end of that line. If the
/// marker ends its line, the next non-blank line is taken instead. Absent
/// when no marker occurs or nothing follows it yet.
inline std::optional<std::string> detect_answer(std::string_view text,
                                                const std::vector<std::string>& markers = default_answer_markers()) {
    std::size_t best = std::string_view::npos;
    std::size_t best_len = 0;
    for (const auto& m : markers) {
        if (m.empty()) continue;
        const auto pos = text.rfind(m);
        if (pos != std::string_view::npos && (best == std::string_view::npos || pos > best)) {
            best = pos;
            best_len = m.size();
        }
    }
    if (best == std::string_view::npos) return std::nullopt;

    auto trim = [](std::string_view s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string_view::npos) return std::string_view{};
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    };

    std::string_view rest = text.substr(best + best_len);
    while (!rest.empty()) {
        const auto nl = rest.find('\n');
        const auto line = trim(rest.substr(0, nl));
        if (!line.empty()) return std::string(line);
        if (nl == std::string_view::npos) break;
        rest.remove_prefix(nl + 1);
    }
    return std::nullopt;
}

/// Thrown when the model transport fails; carries the partial transcript.
class EpisodeError : public std::runtime_error {
public:
    EpisodeError(const std::string& what, EpisodeResult partial)
        : std::runtime_error(what), partial_(std::move(partial)) {}
    const EpisodeResult& partial() const { return partial_; }

private:
    EpisodeResult partial_;
};

enum class EpisodePhase { scheduled, running, terminating, done };

/// Mutable state of one episode. Phases only move forward; elapsed only grows.
struct EpisodeState {
    EpisodePhase phase = EpisodePhase::scheduled;
    Tokens elapsed = 0;
    Conversation context;
    EpisodeResult result;

    void advance(EpisodePhase next) {
        if (static_cast<int>(next) < static_cast<int>(phase))
            throw std::logic_error("episode phase cannot move backwards");
        phase = next;
    }

    void add_model_segment(const Generation& g) {
        result.transcript.push_back({SegmentKind::model, g.text, g.tokens_used, elapsed, {}});
        context.push_back({"assistant", g.text});
        elapsed += g.tokens_used;
        result.spend = elapsed;
        result.estimated_tokens = result.estimated_tokens || g.estimated_tokens;
    }

    void add_injected(const ModelHandle& model, std::string text, std::string label) {
        const Tokens n = model.count_tokens(text);
        context.push_back({"user", text});
        result.transcript.push_back({SegmentKind::injected, std::move(text), n, elapsed, std::move(label)});
    }
};

namespace engine_detail {

inline Generation call(ModelHandle& model, EpisodeState& st, const EpisodePolicy& policy, Tokens cap) {
    GenerateOptions opts;
    opts.cap = cap;
    opts.seed = policy.seed;
    opts.temperature = policy.temperature;
    Generation g = generate(model, st.context, opts);
    if (g.stop == StopReason::transport_error)
        throw EpisodeError("model " + model.model_id() + " transport failure: " + g.error, st.result);
    // Guard against endpoints that over-report; the cap is the contract.
    g.tokens_used = std::clamp<Tokens>(g.tokens_used, 0, cap);
    return g;
}

}  // namespace engine_detail

/// Appends the terminator message, requests one completion capped at the
/// forced tail cap, and extracts the answer. Without a marker in the tail the
/// tail itself is returned as an unparsed best-effort answer.
inline std::optional<std::string> force_terminate(ModelHandle& model, EpisodeState& st, const EpisodePolicy& policy) {
    st.advance(EpisodePhase::terminating);
    st.add_injected(model, build_terminator_message(policy.templates), "terminator");
    const Generation tail = engine_detail::call(model, st, policy, policy.forced_tail_cap);
    st.add_model_segment(tail);
    st.result.forced = true;
    if (auto a = detect_answer(tail.text, policy.answer_markers)) {
        st.result.answer = std::move(a);
    } else {
        const auto b = tail.text.find_first_not_of(" \t\r\n");
        const auto e = tail.text.find_last_not_of(" \t\r\n");
        if (b != std::string::npos) st.result.answer = tail.text.substr(b, e - b + 1);
        st.result.unparsed = true;
    }
    return st.result.answer;
}

/// Runs one controlled generation.
///
/// terminator: segments of interrupt_interval tokens; at each boundary the
///   full generated text is checked for an answer first, then the deadline,
///   and only then is an interrupt message injected. Interrupt tokens are
///   prompt-side and excluded from spend.
/// naive: one segment capped at the deadline, then forced termination.
/// base: one uncontrolled generation up to the safety cap.
inline EpisodeResult run_episode(ModelHandle& model, const Question& question, const EpisodePolicy& policy) {
    validate(policy);
    EpisodeState st;

    if (policy.mode == EpisodeMode::base) {
        st.result.prompt = question.prompt;
        st.context.push_back({"user", question.prompt});
        st.advance(EpisodePhase::running);
        const Generation g = engine_detail::call(model, st, policy, policy.safety_cap);
        st.add_model_segment(g);
        st.result.truncated = g.stop == StopReason::cap;
        st.result.answer = detect_answer(st.result.generated_text(), policy.answer_markers);
        st.advance(EpisodePhase::done);
        return st.result;
    }

    st.result.deadline = policy.deadline;
    st.result.prompt = build_scheduling_prompt(question.prompt, policy.deadline, policy.templates);
    st.context.push_back({"user", st.result.prompt});
    st.advance(EpisodePhase::running);

    std::string generated;
    if (policy.mode == EpisodeMode::naive) {
        const Generation g = engine_detail::call(model, st, policy, policy.deadline);
        st.add_model_segment(g);
        if (auto a = detect_answer(g.text, policy.answer_markers)) {
            st.result.answer = std::move(a);
            st.advance(EpisodePhase::done);
            return st.result;
        }
        force_terminate(model, st, policy);
        st.advance(EpisodePhase::done);
        return st.result;
    }

    const Tokens interval = interrupt_interval(policy.deadline);
    while (true) {
        const Tokens cap = std::min(interval, policy.deadline - st.elapsed);
        const Generation g = engine_detail::call(model, st, policy, cap);
        st.add_model_segment(g);
        generated += g.text;
        if (auto a = detect_answer(generated, policy.answer_markers)) {
            st.result.answer = std::move(a);
            st.advance(EpisodePhase::done);
            return st.result;
        }
        // The model stopped on its own without an answer, or made no progress.
        if (g.stop == StopReason::natural || g.tokens_used == 0) break;
        if (st.elapsed >= policy.deadline) break;
        st.add_injected(model, build_interrupt_message(st.elapsed, policy.deadline - st.elapsed, policy.templates),
                        "interrupt");
        ++st.result.interrupts;
    }
    force_terminate(model, st, policy);
    st.advance(EpisodePhase::done);
    return st.result;
}

}  // namespace tokenbudget
