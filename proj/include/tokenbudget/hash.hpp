#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace tokenbudget {

// Platform-stable hashing. std::hash is not stable across standard
// libraries, and seeds and mock scripts must replay bit-for-bit.

constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept {
    return splitmix64(a ^ splitmix64(b));
}

/// Uniform double in [0, 1) from a 64-bit hash.
constexpr double unit_interval(std::uint64_t h) noexcept {
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

/// Per-sample seed: a pure function of (master seed, question id, sample index),
/// so parallel scheduling order never changes what a sample sees.
inline std::uint64_t derive_sample_seed(std::uint64_t master, std::string_view question_id,
                                        std::int64_t sample_index) {
    std::uint64_t h = hash_combine(splitmix64(master), fnv1a64(question_id));
    return hash_combine(h, static_cast<std::uint64_t>(sample_index));
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

}  // namespace tokenbudget
