#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace vap {

// splitmix64 (Steele/Lea/Flood mixing constants). Chosen because the whole
// recipe is integer arithmetic: identical output on every platform and
// compiler, which keeps generated fixtures byte-stable.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1): top 53 bits scaled by 2^-53.
    double next_unit() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    // Uniform double in [-1, 1).
    double next_symmetric() { return 2.0 * next_unit() - 1.0; }

    // Uniform integer in [0, bound) via 128-bit multiply (no modulo bias
    // worth worrying about at these bounds, and fully portable).
    std::uint64_t next_below(std::uint64_t bound) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next()) * bound) >> 64);
    }

private:
    std::uint64_t state_;
};

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Derives an independent generator from a seed and a list of key hashes
// (video id, model id, view index...). Each key is folded in through one
// splitmix step so nearby keys land far apart.
inline SplitMix64 derive_stream(std::uint64_t seed,
                                std::initializer_list<std::uint64_t> keys) {
    std::uint64_t s = seed;
    for (std::uint64_t k : keys) {
        SplitMix64 mix(s ^ k);
        s = mix.next();
    }
    return SplitMix64(s);
}

} // namespace vap
