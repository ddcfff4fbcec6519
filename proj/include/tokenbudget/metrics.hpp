#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "tokenbudget/types.hpp"

namespace tokenbudget {

// ---------------------------------------------------------------------------
// Overthinking scores

struct OverthinkingOptions {
    /// true: the observed minimum is taken over correct samples only (the
    /// "shortest correct chain" reading). false: over every sample, as the
    /// bare formula reads; nothing is excluded then.
    bool correct_only_min = true;
};

struct GlobalOverthinking {
    double value = 0.0;
    std::int64_t included = 0;  // questions contributing to the mean
    std::int64_t excluded = 0;  // questions no model ever solved
};

/// O_g: mean over questions of (target's mean spend - observed minimum spend
/// over the whole pool). Questions the target never sampled are skipped;
/// never-solved questions are excluded and counted.
inline GlobalOverthinking global_overthinking(std::span<const SampleRecord> pool, std::span<const SampleRecord> target,
                                              const OverthinkingOptions& opts = {}) {
    std::map<std::string, Tokens> pool_min;
    for (const auto& r : pool) {
        if (opts.correct_only_min && !r.solved()) continue;
        auto [it, inserted] = pool_min.emplace(r.question_id, r.spend);
        if (!inserted) it->second = std::min(it->second, r.spend);
    }
    std::map<std::string, std::pair<double, std::int64_t>> target_sum;
    for (const auto& r : target) {
        auto& [sum, n] = target_sum[r.question_id];
        sum += static_cast<double>(r.spend);
        ++n;
    }
    GlobalOverthinking out;
    double total = 0.0;
    for (const auto& [qid, sn] : target_sum) {
        auto it = pool_min.find(qid);
        if (it == pool_min.end()) {
            ++out.excluded;
            continue;
        }
        total += sn.first / static_cast<double>(sn.second) - static_cast<double>(it->second);
        ++out.included;
    }
    if (out.included == 0) throw std::invalid_argument("global overthinking: no question has a correct sample");
    out.value = total / static_cast<double>(out.included);
    return out;
}

/// O_g for one model of a multi-model pool.
inline GlobalOverthinking global_overthinking(std::span<const SampleRecord> pool, const std::string& target_model,
                                              const OverthinkingOptions& opts = {}) {
    std::vector<SampleRecord> target;
    for (const auto& r : pool)
        if (r.model_id == target_model) target.push_back(r);
    if (target.empty()) throw std::invalid_argument("global overthinking: model '" + target_model + "' has no samples");
    return global_overthinking(pool, target, opts);
}

/// O_env: mean over questions of (max spend - min spend) among one model's
/// samples, correct or not.
inline double local_envelope_overthinking(std::span<const SampleRecord> records) {
    if (records.empty()) throw std::invalid_argument("local envelope overthinking: empty log");
    std::map<std::string, std::pair<Tokens, Tokens>> span_of;
    for (const auto& r : records) {
        if (r.model_id != records.front().model_id)
            throw std::invalid_argument("local envelope overthinking expects one model's samples");
        auto [it, inserted] = span_of.emplace(r.question_id, std::pair{r.spend, r.spend});
        if (!inserted) {
            it->second.first = std::min(it->second.first, r.spend);
            it->second.second = std::max(it->second.second, r.spend);
        }
    }
    double total = 0.0;
    for (const auto& [qid, mm] : span_of) total += static_cast<double>(mm.second - mm.first);
    return total / static_cast<double>(span_of.size());
}

// ---------------------------------------------------------------------------
// Accuracy and pass@k

inline double accuracy(std::span<const SampleRecord> records) {
    if (records.empty()) throw std::invalid_argument("accuracy of an empty log");
    double total = 0.0;
    for (const auto& r : records) {
        if (!r.correct) throw std::invalid_argument("accuracy: ungraded record for question '" + r.question_id + "'");
        total += *r.correct;
    }
    return total / static_cast<double>(records.size());
}

/// Unbiased estimator 1 - C(n-c, k) / C(n, k), evaluated as a running product.
inline double pass_at_k(std::int64_t n, std::int64_t c, std::int64_t k) {
    if (k < 1 || n < k || c < 0 || c > n) throw std::invalid_argument("pass@k needs 1 <= k <= n and 0 <= c <= n");
    if (n - c < k) return 1.0;
    double miss = 1.0;
    for (std::int64_t i = n - c + 1; i <= n; ++i) miss *= 1.0 - static_cast<double>(k) / static_cast<double>(i);
    return 1.0 - miss;
}

/// Mean pass@k over (model, question) groups. Rubric partial credit never
/// passes: a sample counts only with score exactly 1.
inline double pass_at_k(std::span<const SampleRecord> records, std::int64_t k) {
    if (records.empty()) throw std::invalid_argument("pass@k of an empty log");
    std::map<std::pair<std::string, std::string>, std::pair<std::int64_t, std::int64_t>> groups;
    for (const auto& r : records) {
        if (!r.correct) throw std::invalid_argument("pass@k: ungraded record for question '" + r.question_id + "'");
        auto& [n, c] = groups[{r.model_id, r.question_id}];
        ++n;
        if (r.solved()) ++c;
    }
    std::string offenders;
    for (const auto& [key, nc] : groups)
        if (nc.first < k) offenders += (offenders.empty() ? "" : ", ") + key.second + " (n=" + std::to_string(nc.first) + ")";
    if (!offenders.empty())
        throw std::invalid_argument("pass@" + std::to_string(k) + " needs n >= k; offenders: " + offenders);
    double total = 0.0;
    for (const auto& [key, nc] : groups) total += pass_at_k(nc.first, nc.second, k);
    return total / static_cast<double>(groups.size());
}

inline double mean_spend(std::span<const SampleRecord> records) {
    if (records.empty()) throw std::invalid_argument("mean spend of an empty log");
    double total = 0.0;
    for (const auto& r : records) total += static_cast<double>(r.spend);
    return total / static_cast<double>(records.size());
}

// ---------------------------------------------------------------------------
// Figure data

struct ScatterRow {
    std::string question_id;
    std::string model_id;
    std::string strategy;
    int decile = 1;
    Tokens spend = 0;
};

/// One row per sample: (difficulty decile 1..10, spend).
inline std::vector<ScatterRow> export_scatter(std::span<const SampleRecord> records,
                                              const std::map<std::string, Difficulty>& difficulties) {
    std::vector<ScatterRow> rows;
    rows.reserve(records.size());
    for (const auto& r : records) {
        auto it = difficulties.find(r.question_id);
        if (it == difficulties.end())
            throw std::invalid_argument("scatter export: no difficulty for question '" + r.question_id + "'");
        rows.push_back({r.question_id, r.model_id, to_string(r.strategy), it->second.decile(), r.spend});
    }
    return rows;
}

/// Decile for a bare difficulty value; tolerant of binary rounding (0.3 -> 3).
inline int difficulty_decile(double d) {
    const double scaled = std::ceil(10.0 * d - 1e-9);
    return static_cast<int>(std::clamp(scaled, 1.0, 10.0));
}

/// Question counts per difficulty decile (index 0 is decile 1).
inline std::array<std::int64_t, 10> difficulty_histogram(const std::map<std::string, Difficulty>& difficulties) {
    std::array<std::int64_t, 10> h{};
    for (const auto& [qid, d] : difficulties) ++h[static_cast<std::size_t>(d.decile() - 1)];
    return h;
}

// ---------------------------------------------------------------------------
// Relative change

/// 100 (treatment - base) / base; absent when base is zero and treatment is not.
inline std::optional<double> relative_change_percent(double base, double treatment) {
    if (base == 0.0) return treatment == 0.0 ? std::optional<double>(0.0) : std::nullopt;
    return 100.0 * (treatment - base) / base;
}

/// Rounded to an integer percent, half away from zero: "-82%", "+59%", "0%".
inline std::string format_relative_change(std::optional<double> pct) {
    if (!pct) return "n/a";
    const long v = std::lround(*pct);
    if (v == 0) return "0%";
    return (v > 0 ? "+" : "") + std::to_string(v) + "%";
}

// ---------------------------------------------------------------------------
// Report

struct MetricsRow {
    std::string model_id;
    std::string strategy;
    std::int64_t samples = 0;
    std::int64_t questions = 0;
    std::optional<double> accuracy;
    std::map<std::int64_t, std::optional<double>> pass_at;  // k -> pass@k (absent if n < k)
    double mean_spend = 0.0;
    double o_env = 0.0;
    std::optional<double> o_g;
    std::int64_t o_g_included = 0;
    std::int64_t o_g_excluded = 0;
};

struct QuestionDetail {
    std::string model_id;
    std::string strategy;
    std::string question_id;
    std::int64_t samples = 0;
    std::int64_t solved = 0;
    double mean_spend = 0.0;
    Tokens min_spend = 0;
    Tokens max_spend = 0;
    std::optional<Tokens> observed_min;  // pool-wide minimal correct spend
};

struct OverthinkingReport {
    std::vector<std::int64_t> ks;
    std::vector<MetricsRow> rows;
    std::vector<QuestionDetail> details;

    const MetricsRow* find(const std::string& model, const std::string& strategy) const {
        for (const auto& r : rows)
            if (r.model_id == model && r.strategy == strategy) return &r;
        return nullptr;
    }
};

/// Metrics per (model, strategy) group. O_g uses `pool` for the observed
/// minimum; pass the evaluated records themselves for a self-contained pool.
inline OverthinkingReport build_report(std::span<const SampleRecord> records, std::span<const SampleRecord> pool,
                                       std::vector<std::int64_t> ks = {5, 10}, const OverthinkingOptions& opts = {}) {
    OverthinkingReport rep;
    rep.ks = ks;
    std::map<std::pair<std::string, std::string>, std::vector<SampleRecord>> groups;
    for (const auto& r : records) groups[{r.model_id, to_string(r.strategy)}].push_back(r);

    std::map<std::string, Tokens> observed;
    for (const auto& r : pool) {
        if (opts.correct_only_min && !r.solved()) continue;
        auto [it, inserted] = observed.emplace(r.question_id, r.spend);
        if (!inserted) it->second = std::min(it->second, r.spend);
    }

    for (const auto& [key, recs] : groups) {
        MetricsRow row;
        row.model_id = key.first;
        row.strategy = key.second;
        row.samples = static_cast<std::int64_t>(recs.size());
        const bool graded = std::all_of(recs.begin(), recs.end(), [](const auto& r) { return r.correct.has_value(); });
        if (graded) row.accuracy = accuracy(recs);
        std::map<std::string, std::vector<const SampleRecord*>> by_q;
        for (const auto& r : recs) by_q[r.question_id].push_back(&r);
        row.questions = static_cast<std::int64_t>(by_q.size());
        std::int64_t min_n = row.samples;
        for (const auto& [q, v] : by_q) min_n = std::min<std::int64_t>(min_n, static_cast<std::int64_t>(v.size()));
        for (auto k : ks) row.pass_at[k] = graded && min_n >= k ? std::optional(pass_at_k(recs, k)) : std::nullopt;
        row.mean_spend = mean_spend(recs);
        row.o_env = local_envelope_overthinking(recs);
        try {
            const auto og = global_overthinking(pool, recs, opts);
            row.o_g = og.value;
            row.o_g_included = og.included;
            row.o_g_excluded = og.excluded;
        } catch (const std::invalid_argument&) {
            row.o_g_excluded = row.questions;
        }
        for (const auto& [q, v] : by_q) {
            QuestionDetail d;
            d.model_id = row.model_id;
            d.strategy = row.strategy;
            d.question_id = q;
            d.samples = static_cast<std::int64_t>(v.size());
            d.min_spend = v.front()->spend;
            d.max_spend = v.front()->spend;
            double sum = 0.0;
            for (const auto* r : v) {
                sum += static_cast<double>(r->spend);
                d.min_spend = std::min(d.min_spend, r->spend);
                d.max_spend = std::max(d.max_spend, r->spend);
                if (r->solved()) ++d.solved;
            }
            d.mean_spend = sum / static_cast<double>(v.size());
            if (auto it = observed.find(q); it != observed.end()) d.observed_min = it->second;
            rep.details.push_back(std::move(d));
        }
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

namespace report_detail {

inline std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string exact(double v) { return format_double(v); }

inline std::string opt(const std::optional<double>& v, int digits) { return v ? fixed(*v, digits) : "n/a"; }

inline std::string render_table(const std::vector<std::vector<std::string>>& cells) {
    std::vector<std::size_t> width;
    for (const auto& row : cells)
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (width.size() <= i) width.push_back(0);
            width[i] = std::max(width[i], row[i].size());
        }
    std::string out;
    for (std::size_t r = 0; r < cells.size(); ++r) {
        for (std::size_t i = 0; i < cells[r].size(); ++i) {
            const auto& c = cells[r][i];
            const auto pad = std::string(width[i] - c.size(), ' ');
            out += i == 0 ? c + pad : "  " + pad + c;  // first column left, rest right aligned
        }
        out += '\n';
        if (r == 0) {
            std::size_t total = 0;
            for (auto w : width) total += w + 2;
            out += std::string(total - 2, '-') + '\n';
        }
    }
    return out;
}

}  // namespace report_detail

/// "value (change)" cell for a treatment metric measured against base.
inline std::string change_cell(double base, double treatment, int digits) {
    return report_detail::fixed(treatment, digits) + " (" +
           format_relative_change(relative_change_percent(base, treatment)) + ")";
}

/// Aligned plain-text rendering: one metrics row per model/strategy, then a
/// base-relative section for every model that has a base row.
inline std::string render_report(const OverthinkingReport& rep) {
    using namespace report_detail;
    std::vector<std::vector<std::string>> cells;
    std::vector<std::string> head{"model", "strategy", "samples", "accuracy"};
    for (auto k : rep.ks) head.push_back("pass@" + std::to_string(k));
    for (const char* h : {"mean_spend", "O_env", "O_g", "O_g_excl"}) head.emplace_back(h);
    cells.push_back(head);
    for (const auto& r : rep.rows) {
        std::vector<std::string> row{r.model_id, r.strategy, std::to_string(r.samples), opt(r.accuracy, 3)};
        for (auto k : rep.ks) row.push_back(opt(r.pass_at.at(k), 3));
        row.push_back(fixed(r.mean_spend, 0));
        row.push_back(fixed(r.o_env, 0));
        row.push_back(opt(r.o_g, 0));
        row.push_back(std::to_string(r.o_g_excluded));
        cells.push_back(std::move(row));
    }
    std::string out = render_table(cells);

    std::vector<std::vector<std::string>> rel{{"model", "strategy", "O_env", "O_g", "accuracy", "mean_spend"}};
    for (const auto& t : rep.rows) {
        if (t.strategy == "base") continue;
        const auto* b = rep.find(t.model_id, "base");
        if (!b) continue;
        rel.push_back({t.model_id, t.strategy + " vs base", change_cell(b->o_env, t.o_env, 0),
                       b->o_g && t.o_g ? change_cell(*b->o_g, *t.o_g, 0) : "n/a",
                       b->accuracy && t.accuracy ? change_cell(*b->accuracy, *t.accuracy, 2) : "n/a",
                       change_cell(b->mean_spend, t.mean_spend, 0)});
    }
    if (rel.size() > 1) out += "\nRelative change from base\n" + render_table(rel);
    return out;
}

inline std::string report_csv(const OverthinkingReport& rep) {
    using namespace report_detail;
    std::string out = "model_id,strategy,samples,questions,accuracy";
    for (auto k : rep.ks) out += ",pass_at_" + std::to_string(k);
    out += ",mean_spend,o_env,o_g,o_g_included,o_g_excluded\n";
    auto o = [](const std::optional<double>& v) { return v ? exact(*v) : std::string(); };
    for (const auto& r : rep.rows) {
        out += r.model_id + "," + r.strategy + "," + std::to_string(r.samples) + "," + std::to_string(r.questions) +
               "," + o(r.accuracy);
        for (auto k : rep.ks) out += "," + o(r.pass_at.at(k));
        out += "," + exact(r.mean_spend) + "," + exact(r.o_env) + "," + o(r.o_g) + "," +
               std::to_string(r.o_g_included) + "," + std::to_string(r.o_g_excluded) + "\n";
    }
    return out;
}

inline std::string details_csv(const OverthinkingReport& rep) {
    std::string out = "model_id,strategy,question_id,samples,solved,mean_spend,min_spend,max_spend,observed_min\n";
    for (const auto& d : rep.details)
        out += d.model_id + "," + d.strategy + "," + d.question_id + "," + std::to_string(d.samples) + "," +
               std::to_string(d.solved) + "," + report_detail::exact(d.mean_spend) + "," +
               std::to_string(d.min_spend) + "," + std::to_string(d.max_spend) + "," +
               (d.observed_min ? std::to_string(*d.observed_min) : std::string()) + "\n";
    return out;
}

inline std::string scatter_csv(const std::vector<ScatterRow>& rows) {
    std::string out = "question_id,model_id,strategy,decile,spend\n";
    for (const auto& r : rows)
        out += r.question_id + "," + r.model_id + "," + r.strategy + "," + std::to_string(r.decile) + "," +
               std::to_string(r.spend) + "\n";
    return out;
}

inline std::string histogram_csv(const std::string& dataset, const std::array<std::int64_t, 10>& hist) {
    std::string out = "dataset,decile,questions\n";
    for (std::size_t i = 0; i < hist.size(); ++i)
        out += dataset + "," + std::to_string(i + 1) + "," + std::to_string(hist[i]) + "\n";
    return out;
}

}  // namespace tokenbudget
