#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace attrition {

inline constexpr uint64_t kFnvOffset = 14695981039346656037ull;
inline constexpr uint64_t kFnvPrime = 1099511628211ull;

// FNV-1a over raw bytes. Also the hash behind the hashing encoder, so the
// exact constants matter for reproducibility.
inline uint64_t fnv1a64(std::string_view bytes, uint64_t seed = kFnvOffset) {
    uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

// splitmix64 step; fully specified, platform independent.
inline uint64_t splitmix64(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Mix a stream key into a seed so independent substreams can be derived
// from one user-facing seed.
inline uint64_t mix_seed(uint64_t seed, uint64_t key) {
    uint64_t s = seed ^ (key * 0x9e3779b97f4a7c15ull);
    return splitmix64(s);
}

// Deterministic RNG used everywhere randomness is needed. All draws are
// built from 64-bit integer arithmetic only; no implementation-defined
// standard-library distributions are involved, so sequences are identical
// across platforms and compilers.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). Modulo bias is negligible for n << 2^64.
    uint64_t below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    // Standard normal via Box-Muller; draws exactly two uniforms per call.
    double normal() {
        double u1 = uniform01();
        double u2 = uniform01();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // In-place Fisher-Yates shuffle.
    template <typename Vec>
    void shuffle(Vec& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
};

} // namespace attrition
