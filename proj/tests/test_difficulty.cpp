#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "test_util.hpp"
#include "tokenbudget/difficulty.hpp"
#include "tokenbudget/mock_model.hpp"

using namespace tokenbudget;
using testutil::rec;

namespace {

std::vector<SampleRecord> samples(const std::string& q, const std::string& m, int n, int correct,
                                  Tokens spend = 100) {
    std::vector<SampleRecord> out;
    for (int i = 0; i < n; ++i) out.push_back(rec(q, m, i, spend + i, i < correct ? 1.0 : 0.0));
    return out;
}

}  // namespace

TEST(Difficulty, ThreeOfTenCorrectIsSevenTenths) {
    const auto d = question_difficulty(samples("q", "m", 10, 3));
    EXPECT_EQ(d.numerator, 7);
    EXPECT_EQ(d.denominator, 10);
    EXPECT_EQ(d.value(), 0.7);
    EXPECT_EQ(d.n_samples, 10);
    EXPECT_EQ(d.n_models, 1);
}

TEST(Difficulty, ExtremesAndReduction) {
    EXPECT_EQ(question_difficulty(samples("q", "m", 5, 5)).value(), 0.0);
    EXPECT_EQ(question_difficulty(samples("q", "m", 1, 0)).value(), 1.0);
    const auto d = question_difficulty(samples("q", "m", 10, 5));
    EXPECT_EQ(d.numerator, 1);
    EXPECT_EQ(d.denominator, 2);
}

TEST(Difficulty, PartialRubricCreditCountsAsWrong) {
    auto s = samples("q", "m", 4, 4);
    s[0].correct = 0.75;
    EXPECT_EQ(question_difficulty(s).numerator, 1);
    EXPECT_EQ(question_difficulty(s).denominator, 4);
}

TEST(Difficulty, Errors) {
    EXPECT_THROW(question_difficulty({}), std::invalid_argument);
    auto mixed = samples("q", "m", 2, 1);
    mixed[1].question_id = "other";
    EXPECT_THROW(question_difficulty(mixed), std::invalid_argument);
    auto models = samples("q", "m", 2, 1);
    models[1].model_id = "other";
    EXPECT_THROW(question_difficulty(models), std::invalid_argument);
    auto ungraded = samples("q", "m", 2, 1);
    ungraded[0].correct.reset();
    EXPECT_THROW(question_difficulty(ungraded), std::invalid_argument);
}

TEST(MultiModelDifficulty, SingleModelReducesToPerModel) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 50; ++t) {
        const int n = 1 + static_cast<int>(rng() % 10);
        const auto s = samples("q", "m", n, static_cast<int>(rng() % (n + 1)));
        std::vector<std::vector<SampleRecord>> per{s};
        const auto a = multi_model_difficulty(per);
        const auto b = question_difficulty(s);
        EXPECT_EQ(a.numerator, b.numerator);
        EXPECT_EQ(a.denominator, b.denominator);
    }
}

TEST(MultiModelDifficulty, EqualSamplesIsTotalWrongOverModelsTimesN) {
    // 7 + 2 + 10 wrong of 3 x 10
    std::vector<std::vector<SampleRecord>> per{samples("q", "a", 10, 3), samples("q", "b", 10, 8),
                                               samples("q", "c", 10, 0)};
    const auto d = multi_model_difficulty(per);
    EXPECT_EQ(d.numerator * 30, 19 * d.denominator);
    EXPECT_EQ(d.n_models, 3);
    EXPECT_EQ(d.n_samples, 30);
    const auto pooled = multi_model_difficulty(per, RaggedPolicy::pooled);
    EXPECT_EQ(pooled, d);
}

TEST(MultiModelDifficulty, RaggedPolicies) {
    // A: 10 of 10 wrong, B: 1 of 15 wrong
    std::vector<std::vector<SampleRecord>> per{samples("q", "a", 10, 0), samples("q", "b", 15, 14)};
    const auto mean = multi_model_difficulty(per, RaggedPolicy::mean_of_rates);
    EXPECT_EQ(mean.numerator, 8);
    EXPECT_EQ(mean.denominator, 15);
    const auto pooled = multi_model_difficulty(per, RaggedPolicy::pooled);
    EXPECT_EQ(pooled.numerator, 11);
    EXPECT_EQ(pooled.denominator, 25);
}

TEST(MultiModelDifficulty, MatchesOracleOnRandomLogs) {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 100; ++t) {
        const auto log = testutil::random_log(rng, 5, 8, 10);
        for (const auto& [q, d] : difficulties_from_records(log)) {
            const auto o = oracle::difficulty(log, q);
            EXPECT_TRUE((oracle::Fraction{d.numerator, d.denominator} == o)) << q;
            EXPECT_GE(d.value(), 0.0);
            EXPECT_LE(d.value(), 1.0);
        }
    }
}

TEST(DifficultyDecile, ComputedExactly) {
    EXPECT_EQ((Difficulty{0, 1, 10, 1}).decile(), 1);
    EXPECT_EQ((Difficulty{3, 10, 10, 1}).decile(), 3);
    EXPECT_EQ((Difficulty{31, 100, 100, 1}).decile(), 4);
    EXPECT_EQ((Difficulty{1, 1, 10, 1}).decile(), 10);
}

TEST(Binning, EqualFrequencyAndMonotone) {
    std::mt19937_64 rng(9);
    for (int t = 0; t < 200; ++t) {
        const int n = 10 + static_cast<int>(rng() % 60);
        std::map<std::string, Difficulty> ds;
        for (int i = 0; i < n; ++i) ds["q" + std::to_string(i)] = Difficulty{static_cast<std::int64_t>(rng() % 11), 10, 10, 1};
        const int bins = 1 + static_cast<int>(rng() % 10);
        const auto b = bin_questions(ds, bins);
        const auto sizes = b.sizes();
        EXPECT_LE(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()), 1);
        EXPECT_EQ(static_cast<int>(b.edges.size()), bins - 1);
        EXPECT_TRUE(std::is_sorted(b.edges.begin(), b.edges.end()));
        for (const auto& [qa, da] : ds)
            for (const auto& [qb, db] : ds) {
                if (da.value() < db.value()) {
                    EXPECT_LE(b.bin_of(qa), b.bin_of(qb));
                }
            }
    }
}

TEST(Binning, TooFewQuestionsIsAnError) {
    std::map<std::string, Difficulty> ds{{"a", {}}, {"b", {}}};
    EXPECT_THROW(bin_questions(ds, 3), std::invalid_argument);
    EXPECT_THROW(bin_questions(ds, 0), std::invalid_argument);
}

TEST(BudgetTable, MatchesOracleAndFallsBackForUnsolvedBins) {
    std::mt19937_64 rng(13);
    for (int t = 0; t < 50; ++t) {
        auto log = testutil::random_log(rng, 3, 20, 6);
        const auto ds = difficulties_from_records(log);
        if (ds.size() < 4) continue;
        const auto binning = bin_questions(ds, 4);
        const auto table = build_budget_table(log, binning, 1234);
        const auto expected = oracle::budgets(log, binning.assignment, 4, 1234);
        ASSERT_EQ(table.bins.size(), 4u);
        for (int b = 0; b < 4; ++b) {
            EXPECT_EQ(table.bins[static_cast<std::size_t>(b)].budget, expected[static_cast<std::size_t>(b)]);
            EXPECT_GT(table.bins[static_cast<std::size_t>(b)].budget, 0);
        }
        EXPECT_NO_THROW(validate(table));
    }
    // nothing solved anywhere: every bin gets the fallback
    std::vector<SampleRecord> unsolved;
    for (int q = 0; q < 4; ++q) unsolved.push_back(rec("q" + std::to_string(q), "m", 0, 50, 0.0));
    const auto table = build_budget_table(unsolved, bin_questions(difficulties_from_records(unsolved), 2));
    for (const auto& b : table.bins) {
        EXPECT_EQ(b.budget, kDefaultFallbackMax);
        EXPECT_EQ(b.support, 0);
    }
}

TEST(BudgetTable, ZeroSpendSolutionStillGivesPositiveBudget) {
    std::vector<SampleRecord> log{rec("a", "m", 0, 0, 1.0), rec("b", "m", 0, 0, 1.0)};
    const auto t = build_budget_table(log, bin_questions(difficulties_from_records(log), 1));
    EXPECT_EQ(t.bins[0].budget, 1);
}

TEST(BudgetTable, TextRoundTripAndRejects) {
    BudgetTable t;
    t.fallback_max = 2000;
    t.bins = {{1, 0.1, 120, 3}, {2, 0.35, 480, 2}, {3, 1.0, 2000, 0}};
    EXPECT_EQ(parse_budget_table(serialize_budget_table(t)), t);
    EXPECT_THROW(parse_budget_table("ttbudget/2\n"), std::invalid_argument);
    EXPECT_THROW(parse_budget_table("ttbudget/1\nfallback_max\t2000\nbin\tedge\tbudget\tsupport\n1\t0.5\t0\t1\n"),
                 std::invalid_argument);
    EXPECT_THROW(parse_budget_table("ttbudget/1\nfallback_max\t2000\nbin\tedge\tbudget\tsupport\n2\t0.5\t10\t1\n"),
                 std::invalid_argument);
    EXPECT_THROW(parse_budget_table(
                     "ttbudget/1\nfallback_max\t2000\nbin\tedge\tbudget\tsupport\n1\t0.5\t10\t1\n2\t0.4\t10\t1\n"),
                 std::invalid_argument);
}

TEST(DifficultyFile, RoundTripAndPredictionForm) {
    testutil::TempDir dir("diff");
    std::map<std::string, Difficulty> ds{{"a", {1, 10, 10, 1}}, {"b", {7, 10, 10, 1}}, {"c", {8, 15, 25, 2}}};
    const auto binning = bin_questions(ds, 3);
    save_difficulty_file(ds, binning, dir / "d.tsv");
    const auto f = load_difficulty_file(dir / "d.tsv");
    EXPECT_EQ(f.difficulties, ds);
    EXPECT_EQ(f.bins, binning.assignment);

    testutil::write(dir / "p.tsv", "question_id\tbin\na\t2\nb\t10\n");
    const auto p = load_difficulty_file(dir / "p.tsv");
    EXPECT_TRUE(p.difficulties.empty());
    EXPECT_EQ(p.bins.at("b"), 10);
    testutil::write(dir / "bad.tsv", "question_id\tbin\na\tzero\n");
    EXPECT_THROW(load_difficulty_file(dir / "bad.tsv"), std::invalid_argument);
}

namespace {

BudgetTable ten_bins() {
    BudgetTable t;
    for (int b = 1; b <= 10; ++b) t.bins.push_back({b, b / 10.0, 100 * b, 1});
    return t;
}

}  // namespace

TEST(Estimators, ConstantAndTable) {
    Question q{"q", "p", "1", Grading::exact_math, "d", {}};
    ConstantDeadline c(500);
    EXPECT_EQ(estimate_deadline(q, c), 500);
    EXPECT_THROW(ConstantDeadline(0), std::invalid_argument);

    TableLookupDeadline t(ten_bins(), {{"q", 4}});
    EXPECT_EQ(estimate_deadline(q, t), 400);
    Question other{"zz", "p", "1", Grading::exact_math, "d", {}};
    EXPECT_THROW(estimate_deadline(other, t), std::out_of_range);
}

TEST(Estimators, RealMinUsesObservedMinimumOrFallback) {
    std::vector<SampleRecord> ref{rec("q", "a", 0, 300, 1.0), rec("q", "b", 0, 120, 1.0), rec("q", "b", 1, 50, 0.0),
                                  rec("never", "a", 0, 10, 0.0)};
    RealMinDeadline est(ref, 1500);
    EXPECT_EQ(est.estimate({"q", "p", "1", Grading::exact_math, "d", {}}), 120);
    EXPECT_EQ(est.estimate({"never", "p", "1", Grading::exact_math, "d", {}}), 1500);
    EXPECT_EQ(est.estimate({"unseen", "p", "1", Grading::exact_math, "d", {}}), 1500);
}

TEST(Estimators, JudgeLevelMapsThroughTable) {
    int calls = 0;
    std::vector<std::string> replies{"7"};
    CallbackModel judge("j", [&](const Conversation& ctx, const GenerateOptions&) {
        EXPECT_NE(ctx.front().content.find("Capital of France?"), std::string::npos);
        return CallbackModel::text_reply(replies[static_cast<std::size_t>(calls++) % replies.size()]);
    });
    JudgeDeadline est(judge, ten_bins());
    Question q{"q", "Capital of France?", std::nullopt, Grading::none, "d", {}};
    EXPECT_EQ(est.estimate(q), 700);

    // level maps to bin ceil(level * B / 10) for a 5-bin table
    BudgetTable five;
    for (int b = 1; b <= 5; ++b) five.bins.push_back({b, b / 5.0, 10 * b, 1});
    JudgeDeadline est5(judge, five);
    for (int lvl = 1; lvl <= 10; ++lvl) {
        replies = {std::to_string(lvl)};
        EXPECT_EQ(est5.estimate(q), 10 * ((lvl * 5 + 9) / 10));
    }
}

TEST(Estimators, JudgeRetriesOnceThenRefuses) {
    int calls = 0;
    CallbackModel flaky("j", [&](const Conversation&, const GenerateOptions&) {
        return CallbackModel::text_reply(calls++ == 0 ? "hard, maybe 8" : "8.");
    });
    JudgeDeadline est(flaky, ten_bins());
    Question q{"q", "p", std::nullopt, Grading::none, "d", {}};
    EXPECT_EQ(est.level(q), 8);
    EXPECT_EQ(calls, 2);

    CallbackModel stubborn("j", [](const Conversation&, const GenerateOptions&) {
        return CallbackModel::text_reply("I cannot rate this");
    });
    JudgeDeadline bad(stubborn, ten_bins());
    EXPECT_THROW(bad.level(q), JudgeRefusalError);

    CallbackModel down("j", [](const Conversation&, const GenerateOptions&) {
        Generation g;
        g.stop = StopReason::transport_error;
        g.error = "connection refused";
        return g;
    });
    JudgeDeadline off(down, ten_bins());
    EXPECT_THROW(off.level(q), JudgeTransportError);
}

TEST(Estimators, ParseDifficultyLevel) {
    EXPECT_EQ(parse_difficulty_level(" 10\n"), 10);
    EXPECT_EQ(parse_difficulty_level("3."), 3);
    EXPECT_FALSE(parse_difficulty_level("0"));
    EXPECT_FALSE(parse_difficulty_level("11"));
    EXPECT_FALSE(parse_difficulty_level("level 4"));
    EXPECT_FALSE(parse_difficulty_level(""));
}
