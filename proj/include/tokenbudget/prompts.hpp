#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include "tokenbudget/types.hpp"

namespace tokenbudget {

/// The three controller prompts. Defaults are the reference texts verbatim
/// (including their original wording); a template file can override each.
struct PromptTemplates {
    std::string scheduling =
        "Please generate an answer to the following question in {deadline} tokens: {prompt}. "
        "Messages of remaining time will be given as messages enclosed in <System></System> tags. "
        "Please provide you answer as **Answer:** or **Final Answer:** when complete.";
    std::string interrupt =
        "I have used {elapsed} tokens, and I have {remaining} tokens left to answer. To continue:";
    std::string terminator =
        "I'm out of time, I need to provide my final answer now, considering what I have computed so far. "
        "**Final Answer:**";
    std::string system_open = "<System>";
    std::string system_close = "</System>";

    bool operator==(const PromptTemplates&) const = default;
};

/// Single-pass placeholder substitution. Only `{name}` tokens present in the
/// template are replaced; substituted values are never rescanned, so braces in
/// a question survive verbatim.
inline std::string substitute(std::string_view tmpl,
                              std::initializer_list<std::pair<std::string_view, std::string_view>> values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            bool replaced = false;
            for (const auto& [name, value] : values) {
                if (tmpl.compare(i + 1, name.size(), name) == 0 && i + 1 + name.size() < tmpl.size() &&
                    tmpl[i + 1 + name.size()] == '}') {
                    out += value;
                    i += name.size() + 2;
                    replaced = true;
                    break;
                }
            }
            if (replaced) continue;
        }
        out += tmpl[i++];
    }
    return out;
}

inline std::string build_scheduling_prompt(std::string_view question_prompt, Tokens deadline,
                                           const PromptTemplates& t = {}) {
    if (deadline <= 0) throw std::invalid_argument("scheduling prompt needs a positive deadline");
    const auto d = std::to_string(deadline);
    return substitute(t.scheduling, {{"deadline", d}, {"prompt", question_prompt}});
}

inline std::string build_interrupt_message(Tokens elapsed, Tokens remaining, const PromptTemplates& t = {}) {
    if (elapsed < 0 || remaining < 0) throw std::invalid_argument("interrupt message needs non-negative counts");
    const auto e = std::to_string(elapsed);
    const auto r = std::to_string(remaining);
    return t.system_open + substitute(t.interrupt, {{"elapsed", e}, {"remaining", r}}) + t.system_close;
}

inline std::string build_terminator_message(const PromptTemplates& t = {}) { return t.terminator; }

/// Template file: sections introduced by `[scheduling]`, `[interrupt]`,
/// `[terminator]`. Section bodies run to the next header; the trailing
/// newline is dropped. Lines before the first header starting with '#' are
/// comments. Missing sections keep their defaults.
inline PromptTemplates parse_templates(std::string_view text) {
    PromptTemplates t;
    std::string* current = nullptr;
    std::string body;
    auto flush = [&] {
        if (current) {
            while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) body.pop_back();
            *current = body;
        }
        body.clear();
    };
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line == "[scheduling]" || line == "[interrupt]" || line == "[terminator]") {
            flush();
            current = line == "[scheduling]" ? &t.scheduling : line == "[interrupt]" ? &t.interrupt : &t.terminator;
            continue;
        }
        if (!current) {
            if (line.empty() || line.starts_with("#")) continue;
            throw std::invalid_argument("template text before first section header: " + line);
        }
        body += line;
        body += '\n';
    }
    flush();
    return t;
}

inline PromptTemplates load_templates(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open template file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_templates(buf.str());
}

}  // namespace tokenbudget
