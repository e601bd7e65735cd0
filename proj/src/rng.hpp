#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mrckg {

// splitmix64; used to derive independent stream seeds from a base seed.
inline uint64_t mix_seed(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
    return mix_seed(base ^ mix_seed(stream));
}

inline uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t stream = 0) {
    uint64_t h = 1469598103934665603ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return mix_seed(base ^ mix_seed(h) ^ mix_seed(stream));
}

inline std::mt19937_64 make_rng(uint64_t seed) { return std::mt19937_64(seed); }

}  // namespace mrckg
