#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace abloop {

/// SplitMix64 output function. Used for seeding and for label hashing.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Derives a child seed from a parent seed and a text label.
///
/// split(seed, "rep:3") and split(seed, "rep:4") give unrelated streams; the
/// same (seed, label) pair always gives the same child. Labels are hashed with
/// FNV-1a and folded into the parent through two SplitMix64 rounds.
constexpr std::uint64_t split_seed(std::uint64_t seed, std::string_view label) noexcept {
    return mix64(mix64(seed) ^ fnv1a64(label));
}

/// xoshiro256** stream seeded through SplitMix64.
///
/// Satisfies UniformRandomBitGenerator. All simulator draws go through
/// `uniform()`, which yields the top 53 bits scaled into [0, 1).
class Stream {
  public:
    using result_type = std::uint64_t;

    explicit Stream(std::uint64_t seed = 0) noexcept {
        std::uint64_t x = seed;
        for (auto& s : state_) {
            x += 0x9E3779B97F4A7C15ULL;
            std::uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
            z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
            s = z ^ (z >> 31);
        }
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    result_type operator()() noexcept {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform on [0, 1).
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1]; safe as a log argument.
    double uniform_open_zero() noexcept { return 1.0 - uniform(); }

    bool bernoulli(double prob) noexcept { return uniform() < prob; }

    /// Exponential with the given mean, by inversion.
    double exponential_mean(double mean) noexcept { return -mean * std::log(uniform_open_zero()); }

    bool operator==(const Stream&) const = default;

  private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4]{};
};

}  // namespace abloop
