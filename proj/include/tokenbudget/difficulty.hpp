#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tokenbudget/model.hpp"
#include "tokenbudget/prompts.hpp"
#include "tokenbudget/types.hpp"

namespace tokenbudget {

// ---------------------------------------------------------------------------
// Difficulty estimates

namespace difficulty_detail {

inline Difficulty reduced(std::int64_t num, std::int64_t den, std::int64_t samples, std::int64_t models) {
    const auto g = std::gcd(num, den);
    Difficulty d;
    d.numerator = g ? num / g : 0;
    d.denominator = g ? den / g : 1;
    d.n_samples = samples;
    d.n_models = models;
    return d;
}

struct Counts {
    std::int64_t wrong = 0;
    std::int64_t n = 0;
};

inline Counts count_single(std::span<const SampleRecord> records) {
    if (records.empty()) throw std::invalid_argument("difficulty needs at least one sample");
    Counts c;
    for (const auto& r : records) {
        if (r.question_id != records.front().question_id)
            throw std::invalid_argument("difficulty samples mix questions '" + records.front().question_id +
                                        "' and '" + r.question_id + "'");
        if (r.model_id != records.front().model_id)
            throw std::invalid_argument("difficulty samples mix models '" + records.front().model_id + "' and '" +
                                        r.model_id + "'");
        if (!r.correct)
            throw std::invalid_argument("ungraded sample for question '" + r.question_id + "'");
        if (!r.solved()) ++c.wrong;
        ++c.n;
    }
    return c;
}

}  // namespace difficulty_detail

/// Single-model inaccuracy rate over n samples of one question.
/// A sample is wrong unless its score is exactly 1.
inline Difficulty question_difficulty(std::span<const SampleRecord> records) {
    const auto c = difficulty_detail::count_single(records);
    return difficulty_detail::reduced(c.wrong, c.n, c.n, 1);
}

/// How per-model sample counts combine when they differ.
enum class RaggedPolicy {
    mean_of_rates,  // each model votes equally: mean of per-model rates
    pooled,         // total wrong / total samples
};

/// Multi-model difficulty: total wrong / (|M| n) for equal n. With unequal n
/// the policy decides; both are exact fractions of the counts.
inline Difficulty multi_model_difficulty(std::span<const std::vector<SampleRecord>> per_model,
                                         RaggedPolicy policy = RaggedPolicy::mean_of_rates) {
    if (per_model.empty()) throw std::invalid_argument("multi-model difficulty needs at least one model");
    std::vector<difficulty_detail::Counts> counts;
    std::int64_t total_wrong = 0, total_n = 0;
    for (const auto& samples : per_model) {
        counts.push_back(difficulty_detail::count_single(samples));
        if (samples.front().question_id != per_model.front().front().question_id)
            throw std::invalid_argument("multi-model difficulty samples mix questions");
        total_wrong += counts.back().wrong;
        total_n += counts.back().n;
    }
    const auto models = static_cast<std::int64_t>(counts.size());
    if (policy == RaggedPolicy::pooled) return difficulty_detail::reduced(total_wrong, total_n, total_n, models);

    std::int64_t l = 1;
    for (const auto& c : counts) l = std::lcm(l, c.n);
    std::int64_t num = 0;
    for (const auto& c : counts) num += c.wrong * (l / c.n);
    return difficulty_detail::reduced(num, models * l, total_n, models);
}

/// Groups a log by question and model and computes the multi-model difficulty
/// of every question. Ungraded records are an error.
inline std::map<std::string, Difficulty> difficulties_from_records(std::span<const SampleRecord> records,
                                                                   RaggedPolicy policy = RaggedPolicy::mean_of_rates) {
    std::map<std::string, std::map<std::string, std::vector<SampleRecord>>> grouped;
    for (const auto& r : records) grouped[r.question_id][r.model_id].push_back(r);
    std::map<std::string, Difficulty> out;
    for (auto& [qid, by_model] : grouped) {
        std::vector<std::vector<SampleRecord>> per_model;
        for (auto& [mid, samples] : by_model) per_model.push_back(std::move(samples));
        out.emplace(qid, multi_model_difficulty(per_model, policy));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Binning

struct DifficultyBinning {
    int bin_count = 10;
    std::map<std::string, int> assignment;  // question id -> bin 1..B
    std::vector<double> edges;              // B-1 cut points: max difficulty of bins 1..B-1

    int bin_of(const std::string& question_id) const {
        auto it = assignment.find(question_id);
        if (it == assignment.end()) throw std::out_of_range("question '" + question_id + "' has no difficulty bin");
        return it->second;
    }

    std::vector<std::int64_t> sizes() const {
        std::vector<std::int64_t> s(static_cast<std::size_t>(bin_count), 0);
        for (const auto& [q, b] : assignment) ++s[static_cast<std::size_t>(b - 1)];
        return s;
    }
};

/// Equal-frequency bins over questions sorted by (difficulty, id): the i-th of
/// N questions goes to bin floor(i B / N) + 1. Sizes differ by at most one and
/// the assignment is monotone in difficulty.
inline DifficultyBinning bin_questions(const std::map<std::string, Difficulty>& difficulties, int bins = 10) {
    if (bins < 1) throw std::invalid_argument("bin count must be >= 1");
    if (static_cast<std::int64_t>(difficulties.size()) < bins)
        throw std::invalid_argument("cannot split " + std::to_string(difficulties.size()) + " questions into " +
                                    std::to_string(bins) + " bins");
    std::vector<std::pair<std::string, Difficulty>> order(difficulties.begin(), difficulties.end());
    // map iteration is already id-ascending; stable sort keeps that as the tie-break
    std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        return a.second.numerator * b.second.denominator < b.second.numerator * a.second.denominator;
    });

    DifficultyBinning out;
    out.bin_count = bins;
    const auto n = static_cast<std::int64_t>(order.size());
    std::vector<double> bin_max(static_cast<std::size_t>(bins), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        const int b = static_cast<int>(i * bins / n) + 1;
        out.assignment[order[static_cast<std::size_t>(i)].first] = b;
        bin_max[static_cast<std::size_t>(b - 1)] = order[static_cast<std::size_t>(i)].second.value();
    }
    out.edges.assign(bin_max.begin(), bin_max.end() - 1);
    return out;
}

// ---------------------------------------------------------------------------
// Budget table

inline constexpr Tokens kDefaultFallbackMax = 2000;

/// Minimal correct spend per question, over every solved sample in the records.
inline std::map<std::string, Tokens> min_correct_spend(std::span<const SampleRecord> records) {
    std::map<std::string, Tokens> out;
    for (const auto& r : records) {
        if (!r.solved()) continue;
        auto [it, inserted] = out.emplace(r.question_id, r.spend);
        if (!inserted) it->second = std::min(it->second, r.spend);
    }
    return out;
}

/// budget[b] = mean over solved questions of bin b of their minimal correct
/// spend (rounded to the nearest token, at least 1); bins without a solved
/// question get fallback_max.
inline BudgetTable build_budget_table(std::span<const SampleRecord> calibration, const DifficultyBinning& binning,
                                      Tokens fallback_max = kDefaultFallbackMax) {
    if (calibration.empty()) throw std::invalid_argument("budget table needs a non-empty calibration log");
    if (fallback_max <= 0) throw std::invalid_argument("fallback_max must be positive");
    for (const auto& r : calibration)
        if (!binning.assignment.contains(r.question_id))
            throw std::invalid_argument("question '" + r.question_id + "' in calibration log is not binned");

    std::vector<double> sum(static_cast<std::size_t>(binning.bin_count), 0.0);
    std::vector<std::int64_t> support(static_cast<std::size_t>(binning.bin_count), 0);
    for (const auto& [qid, spend] : min_correct_spend(calibration)) {
        const auto b = static_cast<std::size_t>(binning.bin_of(qid) - 1);
        sum[b] += static_cast<double>(spend);
        ++support[b];
    }

    BudgetTable t;
    t.fallback_max = fallback_max;
    for (int b = 1; b <= binning.bin_count; ++b) {
        const auto i = static_cast<std::size_t>(b - 1);
        BudgetBin bin;
        bin.index = b;
        bin.upper_edge = i < binning.edges.size() ? binning.edges[i] : 1.0;
        bin.support = support[i];
        bin.budget = support[i] == 0
                         ? fallback_max
                         : std::max<Tokens>(1, std::llround(sum[i] / static_cast<double>(support[i])));
        t.bins.push_back(bin);
    }
    return t;
}

inline constexpr std::string_view kBudgetSchema = "ttbudget/1";

inline std::string serialize_budget_table(const BudgetTable& t) {
    std::ostringstream out;
    out << kBudgetSchema << '\n' << "fallback_max\t" << t.fallback_max << '\n' << "bin\tedge\tbudget\tsupport\n";
    for (const auto& b : t.bins) out << b.index << '\t' << format_double(b.upper_edge) << '\t' << b.budget << '\t' << b.support << '\n';
    return out.str();
}

inline BudgetTable parse_budget_table(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& what) {
        throw std::invalid_argument("budget table line " + std::to_string(line_no) + ": " + what);
    };
    auto next = [&]() -> bool {
        if (!std::getline(in, line)) return false;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    };
    if (!next() || line != kBudgetSchema) fail("expected schema line '" + std::string(kBudgetSchema) + "'");
    BudgetTable t;
    if (!next()) fail("missing fallback_max");
    {
        std::istringstream row(line);
        std::string key;
        if (!(row >> key >> t.fallback_max) || key != "fallback_max") fail("expected 'fallback_max <tokens>'");
    }
    if (!next() || line != "bin\tedge\tbudget\tsupport") fail("expected column header");
    while (next()) {
        if (line.empty()) continue;
        std::istringstream row(line);
        BudgetBin b;
        if (!(row >> b.index >> b.upper_edge >> b.budget >> b.support)) fail("malformed row '" + line + "'");
        t.bins.push_back(b);
    }
    validate(t);
    return t;
}

inline void save_budget_table(const BudgetTable& t, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << serialize_budget_table(t);
}

inline BudgetTable load_budget_table(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open budget table " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_budget_table(buf.str());
}

// ---------------------------------------------------------------------------
// Difficulty files: per-question difficulty and bin, tab-separated.
// Prediction files may carry only "question_id<TAB>bin".

struct DifficultyFile {
    std::map<std::string, Difficulty> difficulties;
    std::map<std::string, int> bins;
};

inline void save_difficulty_file(const std::map<std::string, Difficulty>& difficulties,
                                 const DifficultyBinning& binning, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "question_id\tdifficulty\tnumerator\tdenominator\tn_samples\tn_models\tbin\n";
    for (const auto& [qid, d] : difficulties)
        out << qid << '\t' << format_double(d.value()) << '\t' << d.numerator << '\t' << d.denominator << '\t' << d.n_samples
            << '\t' << d.n_models << '\t' << binning.bin_of(qid) << '\n';
}

inline DifficultyFile load_difficulty_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open difficulty file " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument(path.string() + ": empty difficulty file");
    const bool full = line.starts_with("question_id\tdifficulty\tnumerator");
    if (!full && !line.starts_with("question_id\tbin"))
        throw std::invalid_argument(path.string() + ": unrecognized difficulty file header");
    DifficultyFile f;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string qid;
        int bin = 0;
        bool ok = static_cast<bool>(std::getline(row, qid, '\t'));
        if (full) {
            double value = 0;
            Difficulty d;
            ok = ok && static_cast<bool>(row >> value >> d.numerator >> d.denominator >> d.n_samples >> d.n_models >> bin);
            if (ok) f.difficulties[qid] = d;
        } else {
            ok = ok && static_cast<bool>(row >> bin);
        }
        if (!ok || bin < 1)
            throw std::invalid_argument(path.string() + ":" + std::to_string(line_no) + ": malformed row");
        f.bins[qid] = bin;
    }
    return f;
}

// ---------------------------------------------------------------------------
// Deadline estimators

enum class EstimatorKind { table_lookup, external_judge, constant, real_min_oracle };

/// Scheduling stage: maps a question to a positive token deadline.
class DeadlineEstimator {
public:
    virtual ~DeadlineEstimator() = default;
    virtual EstimatorKind kind() const = 0;
    virtual Tokens estimate(const Question& q) = 0;
};

inline Tokens estimate_deadline(const Question& q, DeadlineEstimator& estimator) {
    const Tokens d = estimator.estimate(q);
    if (d <= 0) throw std::logic_error("deadline estimator returned a non-positive deadline");
    return d;
}

class ConstantDeadline : public DeadlineEstimator {
public:
    explicit ConstantDeadline(Tokens n) : n_(n) {
        if (n <= 0) throw std::invalid_argument("constant deadline must be positive");
    }
    EstimatorKind kind() const override { return EstimatorKind::constant; }
    Tokens estimate(const Question&) override { return n_; }

private:
    Tokens n_;
};

/// budget[bin(question)], with bins from a calibration binning or a
/// prediction file keyed by question id.
class TableLookupDeadline : public DeadlineEstimator {
public:
    TableLookupDeadline(BudgetTable table, std::map<std::string, int> bins)
        : table_(std::move(table)), bins_(std::move(bins)) {
        validate(table_);
    }
    EstimatorKind kind() const override { return EstimatorKind::table_lookup; }
    Tokens estimate(const Question& q) override {
        auto it = bins_.find(q.id);
        if (it == bins_.end()) throw std::out_of_range("table lookup: question '" + q.id + "' has no difficulty bin");
        return table_.budget_for(it->second);
    }

private:
    BudgetTable table_;
    std::map<std::string, int> bins_;
};

/// Observed minimal correct spend from a reference log, else fallback_max.
class RealMinDeadline : public DeadlineEstimator {
public:
    RealMinDeadline(std::span<const SampleRecord> reference, Tokens fallback_max = kDefaultFallbackMax)
        : mins_(min_correct_spend(reference)), fallback_(fallback_max) {
        if (fallback_max <= 0) throw std::invalid_argument("fallback_max must be positive");
    }
    EstimatorKind kind() const override { return EstimatorKind::real_min_oracle; }
    Tokens estimate(const Question& q) override {
        auto it = mins_.find(q.id);
        return it == mins_.end() ? fallback_ : std::max<Tokens>(1, it->second);
    }

private:
    std::map<std::string, Tokens> mins_;
    Tokens fallback_;
};

inline constexpr std::string_view kDifficultyJudgeTemplate =
    "Rate how difficult the following question is to answer correctly, on a scale from 1 (trivial) "
    "to 10 (extremely hard). Reply with a single integer from 1 to 10 and nothing else.\n\n"
    "Question: {prompt}";

/// Parses a judge's difficulty reply: a lone integer in 1..10 (a trailing
/// period is tolerated).
inline std::optional<int> parse_difficulty_level(std::string_view reply) {
    const auto b = reply.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return std::nullopt;
    auto e = reply.find_last_not_of(" \t\r\n.");
    if (e == std::string_view::npos || e < b) return std::nullopt;
    const auto body = reply.substr(b, e - b + 1);
    if (body.empty() || body.size() > 2 || body.find_first_not_of("0123456789") != std::string_view::npos)
        return std::nullopt;
    const int v = std::stoi(std::string(body));
    if (v < 1 || v > 10) return std::nullopt;
    return v;
}

/// Zero-shot estimator: asks a judge model for a 1..10 difficulty level and
/// maps it through the budget table. A malformed reply is retried once.
class JudgeDeadline : public DeadlineEstimator {
public:
    JudgeDeadline(ModelHandle& judge, BudgetTable table, std::string prompt_template = std::string(kDifficultyJudgeTemplate))
        : judge_(judge), table_(std::move(table)), template_(std::move(prompt_template)) {
        validate(table_);
    }
    EstimatorKind kind() const override { return EstimatorKind::external_judge; }

    int level(const Question& q) {
        Conversation ctx{{"user", substitute(template_, {{"prompt", q.prompt}})}};
        GenerateOptions opts;
        opts.cap = 8;
        opts.temperature = 0.0;
        std::string last;
        for (int attempt = 0; attempt < 2; ++attempt) {
            const Generation g = generate(judge_, ctx, opts);
            if (g.stop == StopReason::transport_error)
                throw JudgeTransportError("difficulty judge " + judge_.model_id() + " unreachable: " + g.error);
            if (auto v = parse_difficulty_level(g.text)) return *v;
            last = g.text;
        }
        throw JudgeRefusalError("difficulty judge " + judge_.model_id() + " gave no level for '" + q.id +
                                "': '" + last + "'");
    }

    Tokens estimate(const Question& q) override {
        const int lvl = level(q);
        const int bins = static_cast<int>(table_.bins.size());
        const int bin = std::clamp((lvl * bins + 9) / 10, 1, bins);
        return table_.budget_for(bin);
    }

private:
    ModelHandle& judge_;
    BudgetTable table_;
    std::string template_;
};

}  // namespace tokenbudget
