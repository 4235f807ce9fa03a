#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace s4mtl {

// Every stochastic draw in the project comes from a stream derived from
// (root seed, purpose tag, indices). Streams are independent of each other,
// so adding a consumer (say, discriminator dropout) never perturbs an
// unrelated stream (generator init). This is what makes ablations bit-exact:
// methods that share a component draw identical randomness for it.

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t derive_seed(uint64_t root, std::string_view purpose,
                            uint64_t a = 0, uint64_t b = 0, uint64_t c = 0) {
    uint64_t h = splitmix64(root ^ fnv1a(purpose));
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    h = splitmix64(h ^ c);
    return h;
}

inline std::mt19937_64 make_rng(uint64_t root, std::string_view purpose,
                                uint64_t a = 0, uint64_t b = 0, uint64_t c = 0) {
    return std::mt19937_64(derive_seed(root, purpose, a, b, c));
}

// uniform in [0,1); uses the full 53-bit mantissa
inline double uniform01(std::mt19937_64& g) {
    return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

// uniform in [lo, hi)
inline double uniform(std::mt19937_64& g, double lo, double hi) {
    return lo + (hi - lo) * uniform01(g);
}

// uniform integer in [0, n)
inline uint64_t uniform_index(std::mt19937_64& g, uint64_t n) {
    // rejection sampling keeps the distribution exact
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v;
    do {
        v = g();
    } while (v >= limit);
    return v % n;
}

// standard normal via Box-Muller (deterministic; avoids libstdc++
// normal_distribution implementation differences)
inline double normal01(std::mt19937_64& g) {
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform01(g);
    double u2 = uniform01(g);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
}

// Fisher-Yates shuffle with the exact index law above
template <typename Vec>
void shuffle(Vec& v, std::mt19937_64& g) {
    for (size_t i = v.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(uniform_index(g, i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace s4mtl
