#pragma once

#include <charconv>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tokenbudget {

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

/// Token counts (spend, deadlines, caps). Signed so that subtraction of
/// budgets never wraps; negative values are rejected by validators.
using Tokens = std::int64_t;

// ---------------------------------------------------------------------------
// Question

enum class Grading { exact_math, rubric, none, code };

inline std::string_view to_string(Grading g) {
    switch (g) {
    case Grading::exact_math: return "exact-math";
    case Grading::rubric: return "rubric";
    case Grading::none: return "none";
    case Grading::code: return "code";
    }
    return "none";
}

inline Grading parse_grading(std::string_view s) {
    if (s == "exact-math") return Grading::exact_math;
    if (s == "rubric") return Grading::rubric;
    if (s == "none") return Grading::none;
    if (s == "code") return Grading::code;
    throw std::invalid_argument("unknown grading mode '" + std::string(s) + "'");
}

struct Question {
    std::string id;
    std::string prompt;
    std::optional<std::string> gold;
    Grading grading = Grading::none;
    std::string dataset;
    std::vector<std::string> requirements;

    bool operator==(const Question&) const = default;
};

inline void validate(const Question& q) {
    if (q.id.empty()) throw std::invalid_argument("question id must be non-empty");
    if (q.grading == Grading::exact_math && !q.gold)
        throw std::invalid_argument("question '" + q.id + "': exact-math grading requires a gold answer");
    if (q.grading == Grading::rubric && q.requirements.empty())
        throw std::invalid_argument("question '" + q.id + "': rubric grading requires requirements");
}

// ---------------------------------------------------------------------------
// Strategy

/// Decoding strategy a sample was produced under. Names follow the
/// deadline-ablation labels: base, naive, terminator, fix-N, real-min, pred-diff.
struct Strategy {
    enum class Kind { base, naive, terminator, fixed, real_min, pred_diff };

    Kind kind = Kind::base;
    Tokens fixed_tokens = 0;  // only meaningful for Kind::fixed

    static Strategy base() { return {Kind::base, 0}; }
    static Strategy naive() { return {Kind::naive, 0}; }
    static Strategy terminator() { return {Kind::terminator, 0}; }
    static Strategy fixed(Tokens n) { return {Kind::fixed, n}; }
    static Strategy real_min() { return {Kind::real_min, 0}; }
    static Strategy pred_diff() { return {Kind::pred_diff, 0}; }

    /// Every strategy except base and naive runs the interrupting engine.
    bool uses_interrupts() const { return kind != Kind::base && kind != Kind::naive; }

    bool operator==(const Strategy&) const = default;
    auto operator<=>(const Strategy&) const = default;
};

inline std::string to_string(const Strategy& s) {
    switch (s.kind) {
    case Strategy::Kind::base: return "base";
    case Strategy::Kind::naive: return "naive";
    case Strategy::Kind::terminator: return "terminator";
    case Strategy::Kind::fixed: return "fix-" + std::to_string(s.fixed_tokens);
    case Strategy::Kind::real_min: return "real-min";
    case Strategy::Kind::pred_diff: return "pred-diff";
    }
    return "base";
}

inline Strategy parse_strategy(std::string_view s) {
    if (s == "base") return Strategy::base();
    if (s == "naive") return Strategy::naive();
    if (s == "terminator") return Strategy::terminator();
    if (s == "real-min") return Strategy::real_min();
    if (s == "pred-diff") return Strategy::pred_diff();
    if (s.starts_with("fix-")) {
        const auto digits = s.substr(4);
        if (!digits.empty() && digits.find_first_not_of("0123456789") == std::string_view::npos &&
            digits.size() <= 12) {
            const Tokens n = std::stoll(std::string(digits));
            if (n > 0) return Strategy::fixed(n);
        }
    }
    throw std::invalid_argument("unknown strategy '" + std::string(s) +
                                "' (expected base, naive, terminator, fix-N, real-min, pred-diff)");
}

// ---------------------------------------------------------------------------
// SampleRecord

/// One yes/no judgement of a rubric requirement.
struct Verdict {
    std::string requirement;
    bool yes = false;
    bool flagged = false;  // judge reply was not a clean yes/no after one retry

    bool operator==(const Verdict&) const = default;
};

/// Optional per-sample episode telemetry. Only non-default fields are persisted.
struct Telemetry {
    std::optional<double> temperature;
    bool unparsed = false;          // forced answer had no marker; tail kept verbatim
    bool truncated = false;         // base mode hit the safety cap
    bool estimated_tokens = false;  // spend approximated from characters
    std::string judge_input;        // "answer-span" or "tail"
    std::vector<Verdict> verdicts;

    bool operator==(const Telemetry&) const = default;
    bool empty() const { return *this == Telemetry{}; }
};

struct SampleRecord {
    std::string question_id;
    std::string model_id;
    Strategy strategy;
    std::int64_t sample_index = 0;
    std::uint64_t seed = 0;
    std::string answer_text;
    Tokens spend = 0;
    std::optional<double> correct;  // score in [0,1]; absent when ungraded
    std::int64_t interrupts = 0;
    bool forced = false;
    std::optional<Tokens> deadline;
    Telemetry telemetry;

    bool operator==(const SampleRecord&) const = default;

    /// Correct for min-spend purposes iff the score is exactly 1.
    bool solved() const { return correct && *correct == 1.0; }
};

inline void validate(const SampleRecord& r) {
    auto fail = [&](const std::string& what) {
        throw std::invalid_argument("record (" + r.question_id + ", " + r.model_id + ", " +
                                    to_string(r.strategy) + ", " + std::to_string(r.sample_index) +
                                    "): " + what);
    };
    if (r.question_id.empty()) fail("empty question_id");
    if (r.model_id.empty()) fail("empty model_id");
    if (r.sample_index < 0) fail("negative sample_index");
    if (r.spend < 0) fail("negative spend");
    if (r.interrupts < 0) fail("negative interrupts");
    if (r.correct && !(*r.correct >= 0.0 && *r.correct <= 1.0)) fail("correct score outside [0,1]");
    if (r.deadline && *r.deadline <= 0) fail("non-positive deadline");
    if (r.strategy.kind == Strategy::Kind::base && (r.interrupts != 0 || r.forced || r.deadline))
        fail("base strategy cannot carry interrupts, forcing, or a deadline");
}

// ---------------------------------------------------------------------------
// Difficulty

/// Empirical inaccuracy rate, kept as an exact reduced fraction of counts.
struct Difficulty {
    std::int64_t numerator = 0;
    std::int64_t denominator = 1;
    std::int64_t n_samples = 1;  // total samples across all models
    std::int64_t n_models = 1;

    double value() const { return static_cast<double>(numerator) / static_cast<double>(denominator); }

    /// Display decile 1..10: ceil(10 d) clamped, computed on the exact fraction.
    int decile() const {
        const std::int64_t scaled = 10 * numerator;
        std::int64_t d = (scaled + denominator - 1) / denominator;
        if (d < 1) d = 1;
        if (d > 10) d = 10;
        return static_cast<int>(d);
    }

    bool operator==(const Difficulty&) const = default;
};

// ---------------------------------------------------------------------------
// BudgetTable

struct BudgetBin {
    int index = 1;            // 1..B
    double upper_edge = 1.0;  // largest difficulty assigned to this bin
    Tokens budget = 1;
    std::int64_t support = 0;  // solved questions that contributed to the mean

    bool operator==(const BudgetBin&) const = default;
};

struct BudgetTable {
    std::vector<BudgetBin> bins;
    Tokens fallback_max = 2000;

    bool operator==(const BudgetTable&) const = default;

    Tokens budget_for(int bin) const {
        if (bin < 1 || bin > static_cast<int>(bins.size()))
            throw std::out_of_range("bin " + std::to_string(bin) + " outside budget table of " +
                                    std::to_string(bins.size()) + " bins");
        return bins[static_cast<std::size_t>(bin - 1)].budget;
    }
};

inline void validate(const BudgetTable& t) {
    if (t.fallback_max <= 0) throw std::invalid_argument("budget table fallback_max must be positive");
    if (t.bins.empty()) throw std::invalid_argument("budget table has no bins");
    for (std::size_t i = 0; i < t.bins.size(); ++i) {
        const auto& b = t.bins[i];
        if (b.index != static_cast<int>(i) + 1)
            throw std::invalid_argument("budget table bins must be contiguous from 1");
        if (b.budget <= 0) throw std::invalid_argument("budget table bin " + std::to_string(b.index) +
                                                       " has non-positive budget");
        if (i > 0 && b.upper_edge < t.bins[i - 1].upper_edge)
            throw std::invalid_argument("budget table edges must be nondecreasing");
    }
}

// ---------------------------------------------------------------------------
// EpisodeResult

enum class SegmentKind { model, injected };

struct Segment {
    SegmentKind kind = SegmentKind::model;
    std::string text;
    Tokens tokens = 0;
    Tokens at = 0;  // elapsed model tokens when the segment started
    std::string label;  // injected segments: "interrupt" or "terminator"

    bool operator==(const Segment&) const = default;
};

struct EpisodeResult {
    std::optional<std::string> answer;
    bool unparsed = false;
    Tokens spend = 0;
    std::int64_t interrupts = 0;
    bool forced = false;
    bool truncated = false;
    bool estimated_tokens = false;
    std::optional<Tokens> deadline;
    std::string prompt;  // first user message, not part of the transcript
    std::vector<Segment> transcript;

    bool operator==(const EpisodeResult&) const = default;

    /// Concatenated model-generated text.
    std::string generated_text() const {
        std::string out;
        for (const auto& s : transcript)
            if (s.kind == SegmentKind::model) out += s.text;
        return out;
    }
};

}  // namespace tokenbudget
