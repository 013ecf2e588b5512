#pragma once

// Seed derivation and RNG helpers. Every stochastic component takes an
// explicit 64-bit seed; independent streams are derived from a master seed
// plus a purpose tag so that parallel jobs stay reproducible regardless of
// scheduling order.

#include <cstdint>
#include <random>
#include <string_view>

namespace fdialab {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_tag(std::string_view tag) {
    std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

// Derived stream seed: stable under reordering of sibling jobs.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                 std::uint64_t index = 0) {
    return splitmix64(splitmix64(master ^ hash_tag(tag)) + index);
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
    return std::mt19937_64(seed);
}

}  // namespace fdialab
