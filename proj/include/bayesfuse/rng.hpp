#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace bayesfuse {

// splitmix64 finalizer; good avalanche, cheap.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives an independent substream seed from a base seed plus structural
// tags (agent id, round, repetition, grid index, ...). Results therefore do
// not depend on execution or scheduling order.
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> tags) {
    std::uint64_t s = splitmix64(base);
    for (std::uint64_t t : tags) {
        s = splitmix64(s ^ splitmix64(t + 0x9e3779b97f4a7c15ULL));
    }
    return s;
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
    return std::mt19937_64{seed};
}

}  // namespace bayesfuse
