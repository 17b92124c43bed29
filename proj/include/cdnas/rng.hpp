#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace cdnas {

// FNV-1a. Used wherever a stable, platform-independent hash is needed
// (candidate training seeds, dataset fingerprints).
inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64_mix(uint64_t seed, std::string_view s) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = char((seed >> (8 * i)) & 0xff);
    return fnv1a64(s, fnv1a64(std::string_view(buf, 8)));
}

// mt19937_64 with hand-rolled draws. The engine's output sequence is fixed by
// the standard; std::uniform_int_distribution and std::shuffle are not, so we
// implement the draws ourselves to keep runs reproducible across standard
// libraries.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : eng_(seed) {}

    uint64_t u64() { return eng_(); }

    // Unbiased integer in [0, n).
    uint64_t index(uint64_t n) {
        uint64_t lim = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = eng_();
        } while (x >= lim);
        return x % n;
    }

    // [0, 1) with 53 random bits.
    double real() { return double(eng_() >> 11) * (1.0 / 9007199254740992.0); }

    // Uniform in [lo, hi].
    double uniform(double lo, double hi) { return lo + (hi - lo) * real(); }

    bool coin() { return (eng_() & 1ull) != 0; }

    template <typename T>
    const T& pick(const std::vector<T>& xs) {
        return xs[index(xs.size())];
    }

    template <typename T>
    void shuffle(std::vector<T>& xs) {
        for (size_t i = xs.size(); i > 1; --i) {
            size_t j = size_t(index(i));
            std::swap(xs[i - 1], xs[j]);
        }
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace cdnas
