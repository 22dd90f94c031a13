#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string_view>

namespace debias::rng {

// SplitMix64 finalizer. All randomness in the project flows through this
// mix, so results are bit-identical across platforms.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t combine(std::uint64_t a, std::uint64_t b) {
    return mix64(a ^ (0x9e3779b97f4a7c15ULL + b + (a << 6) + (a >> 2)));
}

inline std::uint64_t tag_hash(std::string_view tag) {
    // FNV-1a
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Per-component seed derivation from one global seed.
inline std::uint64_t derive(std::uint64_t root, std::string_view component) {
    return combine(root, tag_hash(component));
}

inline std::uint64_t derive(std::uint64_t root, std::string_view component,
                            std::uint64_t index) {
    return combine(derive(root, component), index);
}

// Counter-based generator: the value at counter i is independent of any
// other counter, so draws can be generated in any order (or in parallel)
// without changing the result.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
        : key_(combine(seed, stream)) {}

    std::uint64_t bits(std::uint64_t counter) const {
        return mix64(key_ ^ mix64(counter));
    }

    // uniform in [0, 1)
    double uniform(std::uint64_t counter) const {
        return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
    }

    // uniform in (0, 1]
    double uniform_open(std::uint64_t counter) const {
        return static_cast<double>((bits(counter) >> 11) + 1) * 0x1.0p-53;
    }

    // standard normal via Box-Muller; consumes two lanes of the counter
    double normal(std::uint64_t counter) const {
        double u1 = uniform_open(combine(counter, 0x6e6f726dULL));
        double u2 = uniform(combine(counter, 0x6e6f726eULL));
        double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(6.283185307179586476925286766559 * u2);
    }

    // uniform index in [0, n) via fixed-point multiply (no rejection loop)
    std::size_t index(std::uint64_t counter, std::size_t n) const {
        return static_cast<std::size_t>(
            (static_cast<unsigned __int128>(bits(counter)) * n) >> 64);
    }

private:
    std::uint64_t key_;
};

// Sequential convenience wrapper over CounterRng.
class SeqRng {
public:
    explicit SeqRng(std::uint64_t seed, std::uint64_t stream = 0)
        : base_(seed, stream) {}

    std::uint64_t bits() { return base_.bits(next_++); }
    double uniform() { return base_.uniform(next_++); }
    double normal() { return base_.normal(next_++); }
    std::size_t index(std::size_t n) { return base_.index(next_++, n); }

private:
    CounterRng base_;
    std::uint64_t next_ = 0;
};

}  // namespace debias::rng
