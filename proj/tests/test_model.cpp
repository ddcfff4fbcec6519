#include <gtest/gtest.h>

#include <random>

#include "tokenbudget/engine.hpp"
#include "tokenbudget/mock_model.hpp"
#include "tokenbudget/toy.hpp"

using namespace tokenbudget;

namespace {

Generation gen(ModelHandle& m, const Conversation& ctx, Tokens cap, std::uint64_t seed = 0) {
    GenerateOptions o;
    o.cap = cap;
    o.seed = seed;
    return generate(m, ctx, o);
}

const Conversation kPrompt{{"user", "Say something."}};

}  // namespace

TEST(MockModel, EchoCapFiveGivesExactlyFiveTokens) {
    MockModel m("echo", MockScript::echo());
    const auto g = gen(m, {{"user", "alpha beta gamma"}}, 5);
    EXPECT_EQ(g.tokens_used, 5);
    EXPECT_EQ(count_words(g.text), 5);
    EXPECT_EQ(g.text, "alpha beta gamma alpha beta ");
    EXPECT_EQ(g.stop, StopReason::cap);
}

TEST(MockModel, DeterministicForSameSeed) {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 100; ++t) {
        const auto s = MockScript::overthinker("x", static_cast<Tokens>(rng() % 500), static_cast<Tokens>(rng() % 500), rng());
        MockModel m("m", s);
        const Tokens cap = 1 + static_cast<Tokens>(rng() % 800);
        const std::uint64_t seed = rng();
        const auto a = gen(m, kPrompt, cap, seed);
        const auto b = gen(m, kPrompt, cap, seed);
        EXPECT_EQ(a.text, b.text);
        EXPECT_EQ(a.tokens_used, b.tokens_used);
        EXPECT_EQ(a.stop, b.stop);
        EXPECT_LE(a.tokens_used, cap);
    }
}

TEST(MockModel, SeedChangesFiller) {
    MockModel m("m", MockScript::never_answers(3));
    EXPECT_NE(gen(m, kPrompt, 50, 1).text, gen(m, kPrompt, 50, 2).text);
}

TEST(MockModel, SegmentationTransparency) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 100; ++t) {
        MockScript s = rng() % 2 ? MockScript::overthinker("7 8", static_cast<Tokens>(rng() % 300),
                                                           static_cast<Tokens>(rng() % 300), rng())
                                 : MockScript::never_answers(rng());
        MockModel m("m", s);
        const std::uint64_t seed = rng();
        Conversation ctx = kPrompt;
        std::string joined;
        Tokens total = 0;
        const int segments = 1 + static_cast<int>(rng() % 6);
        for (int i = 0; i < segments; ++i) {
            const Tokens cap = 1 + static_cast<Tokens>(rng() % 150);
            const auto g = gen(m, ctx, cap, seed);
            joined += g.text;
            total += cap;
            ctx.push_back({"assistant", g.text});
        }
        const auto whole = gen(m, kPrompt, total, seed);
        EXPECT_EQ(joined, whole.text);
    }
}

TEST(MockModel, OverthinkerStopsNaturallyAfterTrailingFiller) {
    MockModel m("m", MockScript::overthinker("42", 10, 20, 0));
    const auto g = gen(m, kPrompt, 1000);
    EXPECT_EQ(g.tokens_used, 10 + 3 + 20);
    EXPECT_EQ(g.stop, StopReason::natural);
    EXPECT_EQ(detect_answer(g.text), "42");
    // ending exactly at the cap still reports a natural stop
    EXPECT_EQ(gen(m, kPrompt, 33).stop, StopReason::natural);
    EXPECT_EQ(gen(m, kPrompt, 32).stop, StopReason::cap);
}

TEST(MockModel, CompliantAfterInterruptAnswersWithin20Tokens) {
    MockModel m("c", MockScript::compliant("42", 5000, 1));
    Conversation ctx{{"user", build_scheduling_prompt("What is 6*7?", 1000)}};
    const auto first = gen(m, ctx, 250);
    EXPECT_FALSE(detect_answer(first.text));
    ctx.push_back({"assistant", first.text});
    ctx.push_back({"user", build_interrupt_message(250, 750)});
    const auto reply = gen(m, ctx, 250);
    EXPECT_LE(reply.tokens_used, 20);
    EXPECT_EQ(detect_answer(reply.text), "42");
}

TEST(MockModel, IgnoringPersonaKeepsRambling) {
    MockModel m("o", MockScript::overthinker("42", 5000, 0, 1));
    Conversation ctx{{"user", "q"}, {"assistant", "a b c"}, {"user", build_interrupt_message(3, 7)}};
    const auto g = gen(m, ctx, 40);
    EXPECT_EQ(g.tokens_used, 40);
    EXPECT_FALSE(detect_answer(g.text));
}

TEST(MockModel, PrematureAnswerBeforeInsight) {
    auto s = MockScript::overthinker("42", 400, 0, 1);
    s.insight_position = 200;
    s.premature_answer = "41";
    MockModel m("o", s);
    Conversation early{{"user", "q"}, {"assistant", "a b c"}, {"user", build_terminator_message()}};
    EXPECT_EQ(detect_answer(gen(m, early, 64).text), "41");
    std::string words;
    for (int i = 0; i < 250; ++i) words += "w ";
    Conversation late{{"user", "q"}, {"assistant", words}, {"user", build_terminator_message()}};
    EXPECT_EQ(detect_answer(gen(m, late, 64).text), "42");
}

TEST(CountTokens, ExactForMockAndApproxFallback) {
    MockModel m("m", MockScript::echo());
    EXPECT_EQ(count_tokens(m, "one two three four five six seven eight nine ten eleven twelve"), 12);
    EXPECT_EQ(count_tokens(m, ""), 0);
    EXPECT_EQ(approx_tokens("0123456789"), 3);
    EXPECT_EQ(approx_tokens(""), 0);
    EXPECT_EQ(approx_tokens("0123456789", 2.0), 5);
}

TEST(Generate, Preconditions) {
    MockModel m("m", MockScript::echo());
    EXPECT_THROW(gen(m, kPrompt, 0), std::invalid_argument);
    Capabilities tiny;
    tiny.max_context = 3;
    CallbackModel small("s", [](const Conversation&, const GenerateOptions&) { return CallbackModel::text_reply("x"); },
                        tiny);
    EXPECT_THROW(gen(small, {{"user", "one two three four"}}, 5), std::length_error);
    EXPECT_NO_THROW(gen(small, {{"user", "one two three"}}, 5));
}

TEST(ToyPopulation, DatasetShapeAndResolver) {
    const auto qs = toy_dataset();
    ASSERT_EQ(qs.size(), 20u);
    for (const auto& q : qs) {
        EXPECT_NO_THROW(validate(q));
        EXPECT_TRUE(q.gold);
        EXPECT_EQ(q.dataset, "toy");
    }
    auto shared = std::make_shared<const std::vector<Question>>(qs);
    const Question& hard = qs[19];
    EXPECT_EQ(find_question(*shared, {{"user", build_scheduling_prompt(hard.prompt, 100)}}), &shared->at(19));
    EXPECT_EQ(find_question(*shared, {{"user", "unrelated"}}), nullptr);

    // easy questions answer earlier than hard ones
    auto model = make_population_model("mock", shared);
    auto answer_at = [&](const Question& q) {
        const auto g = gen(*model, {{"user", q.prompt}}, 20000, 7);
        return count_words(g.text.substr(0, g.text.find("**Final")));
    };
    EXPECT_LT(answer_at(qs[0]), answer_at(qs[19]));
}

TEST(ToyPopulation, MockJudge) {
    auto shared = std::make_shared<const std::vector<Question>>(toy_dataset());
    auto judge = make_mock_judge(shared);
    const auto prompt = substitute(kDifficultyJudgeTemplate, {{"prompt", shared->at(15).prompt}});
    EXPECT_EQ(gen(*judge, {{"user", prompt}}, 8).text, "8");
    EXPECT_EQ(gen(*judge, {{"user", "Does it?"}}, 4).text, "yes");
}
