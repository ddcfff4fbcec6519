#pragma once

#include <algorithm>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "tokenbudget/difficulty.hpp"
#include "tokenbudget/graders.hpp"
#include "tokenbudget/hash.hpp"
#include "tokenbudget/mock_model.hpp"
#include "tokenbudget/types.hpp"

namespace tokenbudget {

inline constexpr int kToyQuestionCount = 20;

/// 20 arithmetic questions; question i sits at forced difficulty level i/2.
inline std::vector<Question> toy_dataset() {
    std::vector<Question> qs;
    for (int i = 0; i < kToyQuestionCount; ++i) {
        const long a = 3 + 7L * i;
        const long b = 2 + 5L * i;
        const long c = 4 + (i % 5);
        std::string prompt;
        long gold = 0;
        if (i < 6) {
            prompt = "What is " + std::to_string(a) + " + " + std::to_string(b) + "?";
            gold = a + b;
        } else if (i < 13) {
            prompt = "What is " + std::to_string(a) + " * " + std::to_string(c) + "?";
            gold = a * c;
        } else {
            prompt = "What is (" + std::to_string(a) + " + " + std::to_string(b) + ") * " + std::to_string(c) +
                     " - " + std::to_string(b) + "?";
            gold = (a + b) * c - b;
        }
        char id[16];
        std::snprintf(id, sizeof id, "toy-%02d", i + 1);
        qs.push_back({id, prompt, std::to_string(gold), Grading::exact_math, "toy", {}});
    }
    return qs;
}

/// Difficulty level 0..9 of a question for the mock population: position-based
/// for toy ids, hashed otherwise.
inline int toy_level(const std::string& question_id) {
    if (question_id.starts_with("toy-") && question_id.size() == 6) {
        const int idx = std::stoi(question_id.substr(4)) - 1;
        if (idx >= 0 && idx < kToyQuestionCount) return idx / 2;
    }
    return static_cast<int>(fnv1a64(question_id) % 10);
}

/// A plausible wrong answer: gold + 1 for integers.
inline std::string toy_wrong_answer(const std::optional<std::string>& gold) {
    if (!gold) return "unknown";
    try {
        std::size_t used = 0;
        const long long v = std::stoll(*gold, &used);
        if (used == gold->size()) return std::to_string(v + 1);
    } catch (const std::exception&) {
    }
    return "not " + *gold;
}

/// Script for one (question, model, sample seed): higher levels answer later,
/// ramble longer after answering, and are more often wrong. Models whose id
/// contains "compliant" stop right after answering and always heed reminders.
inline MockScript toy_script(const Question& q, const std::string& model_id, std::uint64_t sample_seed) {
    const int level = toy_level(q.id);
    const std::uint64_t base = hash_combine(hash_combine(fnv1a64(model_id), fnv1a64(q.id)), sample_seed);
    const bool wrong = unit_interval(hash_combine(base, 1)) < level / 10.0;
    const std::string right = q.gold.value_or("unknown");
    const std::string answer = wrong ? toy_wrong_answer(q.gold) : right;
    const Tokens position = 30 + 50 * level + static_cast<Tokens>(hash_combine(base, 2) % 41);
    const Tokens trailing_max = 400 + 300 * level;
    const Tokens trailing = static_cast<Tokens>(hash_combine(base, 3) % static_cast<std::uint64_t>(trailing_max + 1));

    MockScript s = model_id.find("compliant") != std::string::npos
                       ? MockScript::compliant(answer, position, base)
                       : MockScript::overthinker(answer, position, trailing, base);
    // overthinkers heed a reminder in about half their samples
    if (unit_interval(hash_combine(base, 4)) < 0.5) s.after_reminder = AfterReminder::answers_promptly;
    s.insight_position = position * 2 / 5;
    s.premature_answer = toy_wrong_answer(q.gold);
    return s;
}

/// The question whose prompt is the longest one contained in the first
/// message of the conversation, or nullptr.
inline const Question* find_question(const std::vector<Question>& questions, const Conversation& ctx) {
    if (ctx.empty()) return nullptr;
    const Question* best = nullptr;
    for (const auto& q : questions)
        if (!q.prompt.empty() && ctx.front().content.find(q.prompt) != std::string::npos &&
            (!best || q.prompt.size() > best->prompt.size()))
            best = &q;
    return best;
}

/// Mock model serving the toy population over an arbitrary question set.
inline std::shared_ptr<MockModel> make_population_model(const std::string& model_id,
                                                        std::shared_ptr<const std::vector<Question>> questions) {
    return std::make_shared<MockModel>(model_id, [model_id, questions](const Conversation& ctx, std::uint64_t seed) {
        if (const Question* q = find_question(*questions, ctx)) return toy_script(*q, model_id, seed);
        return MockScript::never_answers(fnv1a64(model_id));
    });
}

/// Judge stand-in: answers difficulty prompts with the question's level + 1
/// and every other prompt with "yes".
inline std::shared_ptr<CallbackModel> make_mock_judge(std::shared_ptr<const std::vector<Question>> questions) {
    return std::make_shared<CallbackModel>("mock-judge", [questions](const Conversation& ctx, const GenerateOptions&) {
        if (!ctx.empty() && ctx.front().content.find("on a scale from 1") != std::string::npos)
            if (const Question* q = find_question(*questions, ctx))
                return CallbackModel::text_reply(std::to_string(toy_level(q->id) + 1));
        return CallbackModel::text_reply("yes");
    });
}

}  // namespace tokenbudget
