#pragma once

// Independent reference implementations used by the tests. They follow the
// metric definitions literally with plain loops and share no code with the
// library beyond the record type.

#include <algorithm>
#include <cmath>
#include <bit>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "tokenbudget/types.hpp"

namespace oracle {

using tokenbudget::SampleRecord;

inline std::vector<std::string> distinct_questions(const std::vector<SampleRecord>& rs) {
    std::vector<std::string> out;
    for (const auto& r : rs)
        if (std::find(out.begin(), out.end(), r.question_id) == out.end()) out.push_back(r.question_id);
    return out;
}

inline std::vector<std::string> distinct_models(const std::vector<SampleRecord>& rs) {
    std::vector<std::string> out;
    for (const auto& r : rs)
        if (std::find(out.begin(), out.end(), r.model_id) == out.end()) out.push_back(r.model_id);
    return out;
}

struct Og {
    double value = 0;
    long included = 0;
    long excluded = 0;
};

/// mean over questions of (mean target spend - min spend of a correct sample
/// anywhere in the pool); questions nobody solved are skipped.
inline Og global_overthinking(const std::vector<SampleRecord>& pool, const std::vector<SampleRecord>& target,
                              bool correct_only = true) {
    Og out;
    double total = 0;
    for (const auto& q : distinct_questions(target)) {
        bool found = false;
        long long best = 0;
        for (const auto& r : pool) {
            if (r.question_id != q) continue;
            if (correct_only && !(r.correct && *r.correct == 1.0)) continue;
            if (!found || r.spend < best) best = r.spend;
            found = true;
        }
        if (!found) {
            ++out.excluded;
            continue;
        }
        long double sum = 0;
        long n = 0;
        for (const auto& r : target)
            if (r.question_id == q) {
                sum += r.spend;
                ++n;
            }
        total += static_cast<double>(sum / n) - static_cast<double>(best);
        ++out.included;
    }
    out.value = out.included ? total / static_cast<double>(out.included) : 0.0;
    return out;
}

/// mean over questions of (max spend - min spend) within one model's samples.
inline double local_envelope(const std::vector<SampleRecord>& target) {
    const auto qs = distinct_questions(target);
    double total = 0;
    for (const auto& q : qs) {
        long long lo = -1, hi = -1;
        for (const auto& r : target) {
            if (r.question_id != q) continue;
            if (lo < 0 || r.spend < lo) lo = r.spend;
            if (hi < 0 || r.spend > hi) hi = r.spend;
        }
        total += static_cast<double>(hi - lo);
    }
    return total / static_cast<double>(qs.size());
}

/// Probability that a uniformly random k-subset of n samples (c correct)
/// contains a correct one, by enumerating every subset.
inline double pass_at_k_enumerate(int n, int c, int k) {
    long hit = 0, all = 0;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        if (std::popcount(mask) != k) continue;
        ++all;
        // samples 0..c-1 are the correct ones
        if (mask & ((1u << c) - 1)) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(all);
}

/// Monte Carlo estimate of the same probability.
inline double pass_at_k_monte_carlo(int n, int c, int k, int trials, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<int> idx(static_cast<std::size_t>(n));
    long hit = 0;
    for (int t = 0; t < trials; ++t) {
        std::iota(idx.begin(), idx.end(), 0);
        // partial Fisher-Yates: first k positions are the draw
        bool any = false;
        for (int i = 0; i < k; ++i) {
            std::uniform_int_distribution<int> d(i, n - 1);
            std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(d(rng))]);
            any = any || idx[static_cast<std::size_t>(i)] < c;
        }
        if (any) ++hit;
    }
    return static_cast<double>(hit) / trials;
}

/// Wrong-count fraction num/den for one question across models, as the mean
/// of per-model rates; returned unreduced as (num, den) over a common
/// denominator of the product of sample counts.
struct Fraction {
    long long num = 0;
    long long den = 1;
    bool operator==(const Fraction& o) const { return num * o.den == o.num * den; }
};

inline Fraction difficulty(const std::vector<SampleRecord>& rs, const std::string& question) {
    std::vector<std::pair<long long, long long>> per;  // (wrong, n)
    for (const auto& m : distinct_models(rs)) {
        long long wrong = 0, n = 0;
        for (const auto& r : rs)
            if (r.question_id == question && r.model_id == m) {
                ++n;
                if (!(r.correct && *r.correct == 1.0)) ++wrong;
            }
        if (n) per.push_back({wrong, n});
    }
    long long den = 1;
    for (auto& [w, n] : per) den *= n;
    long long num = 0;
    for (auto& [w, n] : per) num += w * (den / n);
    return {num, den * static_cast<long long>(per.size())};
}

/// Budget of every bin: mean over the bin's solved questions of their minimal
/// correct spend, rounded half away from zero.
inline std::vector<long long> budgets(const std::vector<SampleRecord>& rs, const std::map<std::string, int>& bins,
                                      int bin_count, long long fallback) {
    std::vector<long long> out;
    for (int b = 1; b <= bin_count; ++b) {
        long double sum = 0;
        long support = 0;
        for (const auto& [q, qb] : bins) {
            if (qb != b) continue;
            long long best = -1;
            for (const auto& r : rs)
                if (r.question_id == q && r.correct && *r.correct == 1.0 && (best < 0 || r.spend < best)) best = r.spend;
            if (best >= 0) {
                sum += best;
                ++support;
            }
        }
        out.push_back(support ? std::max<long long>(1, std::llround(static_cast<double>(sum / support))) : fallback);
    }
    return out;
}

}  // namespace oracle
