#pragma once

#include <cstdint>
#include <random>
#include <string_view>

/**
 * Counter-based stream derivation.
 *
 * Every random stream in the library is keyed by (parent seed, label, index).
 * The child seed is a hash of those three values, so a replication's draws do
 * not depend on how many other replications ran before it or on which thread.
 */
namespace hdout::rng {

using Engine = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// 64-bit FNV-1a of a label.
constexpr std::uint64_t hash_label(std::string_view label) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Seed of the child stream (parent, label, index).
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::string_view label,
                                    std::uint64_t index = 0) noexcept {
    return mix64(mix64(parent ^ hash_label(label)) + mix64(index ^ 0xD1B54A32D192ED03ULL));
}

inline Engine make_engine(std::uint64_t parent, std::string_view label, std::uint64_t index = 0) {
    return Engine{derive_seed(parent, label, index)};
}

/// Uniform double in [0, 1) from the top 53 bits of one engine draw.
inline double uniform01(Engine& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

} // namespace hdout::rng
