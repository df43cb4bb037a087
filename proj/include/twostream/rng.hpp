#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace twostream {

// Counter-based randomness. Every consumer derives a key from
// (seed, stream, ...) and reads values as a pure function of (key, index),
// so replicated workers and the single-process oracle see identical draws
// regardless of execution order.

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

inline std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
}

inline std::uint64_t hash_at(std::uint64_t key, std::uint64_t index) {
    return mix64(key + kGolden * (index + 1));
}

inline std::uint64_t derive_key(std::uint64_t key, std::uint64_t stream) {
    return mix64(key ^ (kGolden + mix64(stream + kGolden)));
}

inline std::uint64_t derive_key(std::uint64_t key, std::uint64_t a, std::uint64_t b) {
    return derive_key(derive_key(key, a), b);
}

// Top 53 bits -> [0, 1).
inline double unit_from_bits(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline double uniform_at(std::uint64_t key, std::uint64_t index) {
    return unit_from_bits(hash_at(key, index));
}

class CounterRng {
public:
    explicit CounterRng(std::uint64_t key) : key_(key) {}

    std::uint64_t next_u64() { return hash_at(key_, counter_++); }

    double next_unit() { return unit_from_bits(next_u64()); }

    bool next_bool() { return (next_u64() >> 63) != 0; }

    // Uniform in [0, n) by 128-bit multiply-shift.
    std::size_t next_below(std::size_t n) {
        return static_cast<std::size_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Box-Muller; consumes two draws.
    double next_normal() {
        double u1 = next_unit();
        double u2 = next_unit();
        double r = std::sqrt(-2.0 * std::log1p(-u1));
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

template <typename T>
void shuffle(std::vector<T>& items, CounterRng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::size_t j = rng.next_below(i);
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace twostream
