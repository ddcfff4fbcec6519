#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tokenbudget/model.hpp"
#include "tokenbudget/prompts.hpp"
#include "tokenbudget/types.hpp"

namespace tokenbudget {

struct GradeResult {
    double score = 0.0;
    std::vector<std::string> trace;  // math: normalization steps
    std::vector<Verdict> verdicts;   // rubric: one per requirement
};

inline constexpr double kMathRelativeTolerance = 1e-9;

namespace grade_detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

/// Index of the brace closing the one at `open`, or npos.
inline std::size_t matching_brace(std::string_view s, std::size_t open) {
    int depth = 0;
    for (std::size_t i = open; i < s.size(); ++i) {
        if (s[i] == '{') ++depth;
        if (s[i] == '}' && --depth == 0) return i;
    }
    return std::string_view::npos;
}

/// Replaces every `\cmd{X}` with X (brace-balanced).
inline std::string unwrap_command(std::string s, std::string_view cmd) {
    const std::string open = std::string(cmd) + "{";
    for (auto pos = s.find(open); pos != std::string::npos; pos = s.find(open, pos)) {
        const auto close = matching_brace(s, pos + cmd.size());
        if (close == std::string::npos) break;
        s = s.substr(0, pos) + s.substr(pos + open.size(), close - pos - open.size()) + s.substr(close + 1);
    }
    return s;
}

inline bool strip_pair(std::string& s, std::string_view open, std::string_view close) {
    if (s.size() >= open.size() + close.size() && s.starts_with(open) && s.ends_with(close)) {
        s = trim(std::string_view(s).substr(open.size(), s.size() - open.size() - close.size()));
        return true;
    }
    return false;
}

inline std::optional<long double> parse_decimal(std::string_view s) {
    if (s.empty()) return std::nullopt;
    std::size_t i = 0;
    bool neg = false;
    if (s[i] == '+' || s[i] == '-') neg = s[i++] == '-';
    long double v = 0;
    bool digits = false;
    for (; i < s.size() && std::isdigit(static_cast<unsigned char>(s[i])); ++i, digits = true) v = v * 10 + (s[i] - '0');
    if (i < s.size() && s[i] == '.') {
        long double scale = 0.1L;
        for (++i; i < s.size() && std::isdigit(static_cast<unsigned char>(s[i])); ++i, digits = true, scale /= 10)
            v += (s[i] - '0') * scale;
    }
    if (!digits || i != s.size()) return std::nullopt;
    return neg ? -v : v;
}

/// Decimal, a/b, or \frac{a}{b} (after whitespace removal).
inline std::optional<long double> parse_number(std::string s) {
    std::erase_if(s, [](char c) { return c == ' '; });
    for (std::string_view frac : {"\\dfrac{", "\\tfrac{", "\\frac{"}) {
        if (!s.starts_with(frac) && !(s.size() > 1 && s[0] == '-' && s.substr(1).starts_with(frac))) continue;
        const bool neg = s[0] == '-';
        const auto open1 = (neg ? 1 : 0) + frac.size() - 1;
        const auto close1 = matching_brace(s, open1);
        if (close1 == std::string::npos || close1 + 1 >= s.size() || s[close1 + 1] != '{') return std::nullopt;
        const auto close2 = matching_brace(s, close1 + 1);
        if (close2 != s.size() - 1) return std::nullopt;
        auto a = parse_decimal(s.substr(open1 + 1, close1 - open1 - 1));
        auto b = parse_decimal(s.substr(close1 + 2, close2 - close1 - 2));
        if (!a || !b || *b == 0) return std::nullopt;
        return (neg ? -1 : 1) * *a / *b;
    }
    if (const auto slash = s.find('/'); slash != std::string::npos) {
        auto a = parse_decimal(std::string_view(s).substr(0, slash));
        auto b = parse_decimal(std::string_view(s).substr(slash + 1));
        if (!a || !b || *b == 0) return std::nullopt;
        return *a / *b;
    }
    return parse_decimal(s);
}

}  // namespace grade_detail

/// Normalized form used for string comparison: trimmed, math wrappers
/// stripped, case-folded, whitespace collapsed, trailing period dropped.
inline std::string normalize_math_answer(std::string_view raw, std::vector<std::string>* trace = nullptr) {
    using namespace grade_detail;
    auto note = [&](const std::string& step, const std::string& s) {
        if (trace) trace->push_back(step + ": " + s);
    };
    std::string s = trim(raw);
    note("trim", s);
    for (bool changed = true; changed;) {
        changed = strip_pair(s, "$$", "$$") || strip_pair(s, "$", "$") || strip_pair(s, "\\[", "\\]") ||
                  strip_pair(s, "\\(", "\\)") || strip_pair(s, "**", "**");
        for (std::string_view cmd : {"\\boxed", "\\fbox", "\\text", "\\mathrm", "\\textbf"}) {
            const auto before = s;
            s = trim(unwrap_command(s, cmd));
            changed = changed || s != before;
        }
        if (s.ends_with('.')) {
            s = trim(std::string_view(s).substr(0, s.size() - 1));
            changed = true;
        }
        if (s.starts_with("\\displaystyle")) {
            s = trim(std::string_view(s).substr(13));
            changed = true;
        }
    }
    note("strip wrappers", s);
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    std::string collapsed;
    for (char c : s) {
        const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r';
        if (space) {
            if (!collapsed.empty() && collapsed.back() != ' ') collapsed += ' ';
        } else {
            collapsed += c;
        }
    }
    s = trim(collapsed);
    while (!s.empty() && s.back() == '.') s.pop_back();
    note("case-fold + collapse", s);
    return s;
}

/// 1 iff the normalized forms match, numerically (relative 1e-9) when both
/// parse as decimals or fractions, as strings otherwise.
inline GradeResult grade_math(std::string_view predicted, std::string_view gold) {
    GradeResult g;
    const auto p = normalize_math_answer(predicted, &g.trace);
    const auto q = normalize_math_answer(gold);
    g.trace.push_back("gold: " + q);
    const auto pn = grade_detail::parse_number(p);
    const auto qn = grade_detail::parse_number(q);
    if (pn && qn) {
        const long double scale = std::max(std::fabs(*pn), std::fabs(*qn));
        const bool eq = std::fabs(*pn - *qn) <= static_cast<long double>(kMathRelativeTolerance) * scale;
        g.trace.push_back(std::string("numeric comparison: ") + (eq ? "equal" : "different"));
        g.score = eq ? 1.0 : 0.0;
    } else {
        g.trace.push_back(std::string("string comparison: ") + (p == q ? "equal" : "different"));
        g.score = p == q ? 1.0 : 0.0;
    }
    return g;
}

inline constexpr std::string_view kRubricJudgeTemplate =
    "You are grading an answer against a single requirement.\n\n"
    "Question: {question}\n\n"
    "Answer: {answer}\n\n"
    "Requirement: {requirement}\n\n"
    "Does the answer satisfy the requirement? Reply with exactly one word: yes or no.";

inline std::optional<bool> parse_yes_no(std::string_view reply) {
    std::string s = grade_detail::trim(reply);
    while (!s.empty() && (s.back() == '.' || s.back() == '!' || s.back() == ',')) s.pop_back();
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (s == "yes") return true;
    if (s == "no") return false;
    return std::nullopt;
}

/// Rubric score: one yes/no judge query per requirement; score is the yes
/// rate. A reply that is not yes/no is retried once, then counted as "no"
/// and flagged.
inline GradeResult judge_requirements(std::string_view answer, const std::vector<std::string>& requirements,
                                      ModelHandle& judge, std::string_view question = {},
                                      std::string_view judge_template = kRubricJudgeTemplate) {
    if (requirements.empty()) throw std::invalid_argument("rubric grading needs at least one requirement");
    GradeResult g;
    std::int64_t yes = 0;
    GenerateOptions opts;
    opts.cap = 4;
    opts.temperature = 0.0;
    for (const auto& req : requirements) {
        const Conversation ctx{{"user", substitute(judge_template,
                                                   {{"question", question}, {"answer", answer}, {"requirement", req}})}};
        Verdict v{req, false, true};
        for (int attempt = 0; attempt < 2; ++attempt) {
            const Generation reply = generate(judge, ctx, opts);
            if (reply.stop == StopReason::transport_error)
                throw JudgeTransportError("rubric judge " + judge.model_id() + " unreachable: " + reply.error);
            if (auto yn = parse_yes_no(reply.text)) {
                v.yes = *yn;
                v.flagged = false;
                break;
            }
        }
        if (v.yes) ++yes;
        g.verdicts.push_back(std::move(v));
    }
    g.score = static_cast<double>(yes) / static_cast<double>(requirements.size());
    return g;
}

/// What the rubric judge sees: the detected answer span when there is one,
/// otherwise the last `tail_chars` characters of the generation (cut on a
/// UTF-8 boundary). Returns the text and which path was used.
inline std::pair<std::string, std::string> judge_input(const std::optional<std::string>& detected,
                                                       std::string_view generated, std::size_t tail_chars = 2000) {
    if (detected && !detected->empty()) return {*detected, "answer-span"};
    std::size_t start = generated.size() > tail_chars ? generated.size() - tail_chars : 0;
    while (start < generated.size() && (static_cast<unsigned char>(generated[start]) & 0xC0) == 0x80) ++start;
    return {std::string(generated.substr(start)), "tail"};
}

}  // namespace tokenbudget
