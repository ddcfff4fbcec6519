#include <gtest/gtest.h>

#include <random>

#include "episode_checks.hpp"
#include "tokenbudget/engine.hpp"
#include "tokenbudget/mock_model.hpp"

using namespace tokenbudget;
using episode_checks::check_terminator_episode;
using episode_checks::random_script;

namespace {

Question question(std::string prompt = "What is 6 * 7?") {
    return {"q", std::move(prompt), "42", Grading::exact_math, "toy", {}};
}

}  // namespace

TEST(Interval, MinOf250AndHalfDeadline) {
    EXPECT_EQ(interrupt_interval(500), 250);
    EXPECT_EQ(interrupt_interval(2000), 250);
    EXPECT_EQ(interrupt_interval(100), 50);
    EXPECT_EQ(interrupt_interval(501), 250);
    EXPECT_EQ(interrupt_interval(3), 1);
    EXPECT_EQ(interrupt_interval(2), 1);
    EXPECT_THROW(interrupt_interval(1), std::invalid_argument);
    EXPECT_THROW(interrupt_interval(0), std::invalid_argument);
}

TEST(DetectAnswer, MarkersAndSpans) {
    EXPECT_EQ(detect_answer("so **Answer:** 42\nwait maybe more"), "42");
    EXPECT_EQ(detect_answer("**Final Answer:** 7 apples"), "7 apples");
    EXPECT_EQ(detect_answer("**Answer:** 1\nlater **Final Answer:** 2\n"), "2");
    EXPECT_EQ(detect_answer("**Final Answer:**\n\n  $\\boxed{5}$\n"), "$\\boxed{5}$");
    EXPECT_FALSE(detect_answer("no marker here"));
    EXPECT_FALSE(detect_answer("**Answer:**"));
    EXPECT_FALSE(detect_answer("**Answer:**   \n  \n"));
    EXPECT_FALSE(detect_answer("Answer: 42"));
}

TEST(Prompts, SchedulingPromptIsVerbatim) {
    EXPECT_EQ(build_scheduling_prompt("What is 2+2?", 500),
              "Please generate an answer to the following question in 500 tokens: What is 2+2?. Messages of "
              "remaining time will be given as messages enclosed in <System></System> tags. Please provide you "
              "answer as **Answer:** or **Final Answer:** when complete.");
    EXPECT_EQ(build_interrupt_message(250, 250),
              "<System>I have used 250 tokens, and I have 250 tokens left to answer. To continue:</System>");
    EXPECT_EQ(build_terminator_message(),
              "I'm out of time, I need to provide my final answer now, considering what I have computed so far. "
              "**Final Answer:**");
}

TEST(Prompts, SubstitutionIsSinglePass) {
    const auto p = build_scheduling_prompt("Is {deadline} a word? {prompt}", 9);
    EXPECT_NE(p.find("Is {deadline} a word? {prompt}"), std::string::npos);
    EXPECT_NE(p.find("in 9 tokens"), std::string::npos);
}

TEST(Prompts, TemplateFileOverridesSections) {
    const auto t = parse_templates("# comment\n[interrupt]\nUsed {elapsed}, left {remaining}.\n\n[terminator]\nStop.\n");
    EXPECT_EQ(t.interrupt, "Used {elapsed}, left {remaining}.");
    EXPECT_EQ(t.terminator, "Stop.");
    EXPECT_EQ(t.scheduling, PromptTemplates{}.scheduling);
    EXPECT_THROW(parse_templates("stray\n[interrupt]\nx\n"), std::invalid_argument);
}

TEST(Episode, OverthinkerBaseVersusTerminator) {
    MockModel m("over", MockScript::overthinker("42", 150, 4000, 1));
    const auto base = run_episode(m, question(), EpisodePolicy::base());
    EXPECT_GE(base.spend, 4000);
    EXPECT_EQ(base.answer, "42");
    EXPECT_FALSE(base.truncated);
    EXPECT_EQ(base.interrupts, 0);
    EXPECT_FALSE(base.deadline);

    const auto term = run_episode(m, question(), EpisodePolicy::terminator(500));
    EXPECT_LE(term.spend, 300);
    EXPECT_EQ(term.answer, "42");
    EXPECT_FALSE(term.forced);
    EXPECT_EQ(term.deadline, 500);
    EXPECT_GE(1.0 - static_cast<double>(term.spend) / static_cast<double>(base.spend), 0.8);
}

TEST(Episode, NeverAnswersIsForcedWithUnparsedTail) {
    MockModel m("silent", MockScript::never_answers(3));
    const auto p = EpisodePolicy::terminator(500);
    const auto r = run_episode(m, question(), p);
    EXPECT_TRUE(r.forced);
    EXPECT_TRUE(r.unparsed);
    ASSERT_TRUE(r.answer);
    EXPECT_FALSE(r.answer->empty());
    EXPECT_EQ(r.spend, 500 + p.forced_tail_cap);
    EXPECT_EQ(r.interrupts, 1);  // at 250; the deadline boundary forces instead
    EXPECT_EQ(check_terminator_episode(r, p), "");
}

TEST(Episode, OverthinkerPastDeadlineAnswersWhenForced) {
    MockModel m("late", MockScript::overthinker("42", 900, 100, 4));
    const auto p = EpisodePolicy::terminator(400);
    const auto r = run_episode(m, question(), p);
    EXPECT_TRUE(r.forced);
    EXPECT_FALSE(r.unparsed);
    EXPECT_EQ(r.answer, "42");
    EXPECT_EQ(r.interrupts, 1);
    EXPECT_EQ(check_terminator_episode(r, p), "");
}

TEST(Episode, CompliantAnswersRightAfterReminder) {
    auto s = MockScript::compliant("42", 5000, 8);
    MockModel m("comp", s);
    const auto p = EpisodePolicy::terminator(1000);
    const auto r = run_episode(m, question(), p);
    EXPECT_EQ(r.answer, "42");
    EXPECT_FALSE(r.forced);
    EXPECT_EQ(r.interrupts, 1);
    EXPECT_LE(r.spend, 250 + 20);
}

TEST(Episode, NaturalStopWithoutAnswerForcesTermination) {
    auto s = MockScript::never_answers(2);
    s.length_limit = 30;
    MockModel m("short", s);
    const auto p = EpisodePolicy::terminator(500);
    const auto r = run_episode(m, question(), p);
    EXPECT_TRUE(r.forced);
    EXPECT_EQ(r.interrupts, 0);
    EXPECT_EQ(check_terminator_episode(r, p), "");
}

TEST(Episode, NaiveContract) {
    MockModel early("early", MockScript::overthinker("42", 50, 4000, 1));
    const auto a = run_episode(early, question(), EpisodePolicy::naive(300));
    EXPECT_EQ(a.interrupts, 0);
    EXPECT_FALSE(a.forced);
    EXPECT_EQ(a.answer, "42");
    EXPECT_EQ(a.spend, 300);

    MockModel late("late", MockScript::overthinker("42", 500, 4000, 1));
    const auto b = run_episode(late, question(), EpisodePolicy::naive(300));
    EXPECT_EQ(b.interrupts, 0);
    EXPECT_TRUE(b.forced);
    EXPECT_EQ(b.answer, "42");
    EXPECT_LE(b.spend, 300 + 64);
}

TEST(Episode, BaseTruncatesAtSafetyCap) {
    MockModel m("silent", MockScript::never_answers(5));
    auto p = EpisodePolicy::base();
    p.safety_cap = 1000;
    const auto r = run_episode(m, question(), p);
    EXPECT_TRUE(r.truncated);
    EXPECT_EQ(r.spend, 1000);
    EXPECT_FALSE(r.answer);
    EXPECT_FALSE(r.forced);
}

TEST(Episode, InjectedTokensNeverCountTowardSpend) {
    MockModel m("silent", MockScript::never_answers(6));
    const auto r = run_episode(m, question(), EpisodePolicy::terminator(1200));
    Tokens injected = 0, model = 0;
    for (const auto& s : r.transcript) (s.kind == SegmentKind::injected ? injected : model) += s.tokens;
    EXPECT_GT(injected, 0);
    EXPECT_EQ(model, r.spend);
}

TEST(Episode, TransportErrorCarriesPartialTranscript) {
    int calls = 0;
    MockModel inner("inner", MockScript::never_answers(1));
    CallbackModel flaky("flaky", [&](const Conversation& ctx, const GenerateOptions& o) {
        if (++calls == 3) {
            Generation g;
            g.stop = StopReason::transport_error;
            g.error = "reset by peer";
            return g;
        }
        return inner.generate(ctx, o);
    });
    try {
        run_episode(flaky, question(), EpisodePolicy::terminator(2000));
        FAIL();
    } catch (const EpisodeError& e) {
        EXPECT_EQ(e.partial().spend, 500);
        EXPECT_EQ(e.partial().interrupts, 2);
    }
}

TEST(Episode, OverReportingEndpointIsClampedToCap) {
    CallbackModel liar("liar", [](const Conversation&, const GenerateOptions& o) {
        Generation g;
        g.text = "word ";
        g.tokens_used = o.cap * 10;
        g.stop = StopReason::cap;
        return g;
    });
    const auto p = EpisodePolicy::terminator(100);
    const auto r = run_episode(liar, question(), p);
    EXPECT_EQ(check_terminator_episode(r, p), "");
    EXPECT_EQ(r.spend, 100 + p.forced_tail_cap);
}

TEST(Episode, InvalidPolicies) {
    MockModel m("m", MockScript::echo());
    EXPECT_THROW(run_episode(m, question(), EpisodePolicy::terminator(1)), std::invalid_argument);
    EXPECT_THROW(run_episode(m, question(), EpisodePolicy::naive(0)), std::invalid_argument);
    auto p = EpisodePolicy::terminator(100);
    p.forced_tail_cap = 0;
    EXPECT_THROW(run_episode(m, question(), p), std::invalid_argument);
    p = EpisodePolicy::terminator(100);
    p.answer_markers.clear();
    EXPECT_THROW(run_episode(m, question(), p), std::invalid_argument);
}

TEST(EpisodeProperty, RandomTerminatorEpisodes) {
    std::mt19937_64 rng(42);
    for (int t = 0; t < 300; ++t) {
        MockModel m("m", random_script(rng));
        auto p = EpisodePolicy::terminator(2 + static_cast<Tokens>(rng() % 3000));
        p.forced_tail_cap = 1 + static_cast<Tokens>(rng() % 100);
        p.seed = rng();
        const auto r = run_episode(m, question(), p);
        ASSERT_EQ(check_terminator_episode(r, p), "") << "episode " << t << " deadline " << p.deadline;
        // determinism
        EXPECT_EQ(run_episode(m, question(), p).generated_text(), r.generated_text());
    }
}

TEST(EpisodeState, PhasesOnlyMoveForward) {
    EpisodeState st;
    st.advance(EpisodePhase::running);
    st.advance(EpisodePhase::running);
    st.advance(EpisodePhase::done);
    EXPECT_THROW(st.advance(EpisodePhase::running), std::logic_error);
}
