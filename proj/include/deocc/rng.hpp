#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace deocc {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xCBF29CE484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

// Named-seed registry: every random stream in a run is derived from the global
// seed, a stream name and an index, so streams never alias one another.
inline std::uint64_t derive_seed(std::uint64_t global, std::string_view stream, std::uint64_t index = 0) {
    return splitmix64(fnv1a64(stream, splitmix64(global)) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

}  // namespace deocc
