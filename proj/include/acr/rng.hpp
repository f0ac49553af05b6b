#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace acr {

constexpr std::uint32_t fnv1a(std::string_view s) {
    std::uint32_t h = 2166136261u;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 16777619u;
    }
    return h;
}

// One generator per concern, derived from the master seed and a tag, so
// streams stay identical when an unrelated concern draws more or fewer
// numbers.
inline std::mt19937 seeded_rng(std::uint32_t master, std::string_view tag) {
    std::seed_seq seq{master, fnv1a(tag)};
    return std::mt19937(seq);
}

}  // namespace acr
