#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string_view>

namespace piggyback {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

/// SplitMix64 output mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Derives an independent child seed; used for replication and theta seeds.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept
{
    return mix64(seed ^ mix64(stream + kGoldenGamma));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) noexcept
{
    // FNV-1a over the tag
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return derive_seed(seed, h);
}

/// SplitMix64 generator. Satisfies UniformRandomBitGenerator, period 2^64, and
/// produces the same stream on every platform.
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit constexpr SplitMix64(std::uint64_t seed = 0) noexcept : state_(seed) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept
    {
        state_ += kGoldenGamma;
        return mix64(state_);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Uniform double in (0, 1].
    double uniform_open_left() noexcept { return static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    double log_uniform(double lo, double hi) noexcept
    {
        return std::exp(uniform(std::log(lo), std::log(hi)));
    }

    /// Standard normal via Box-Muller; the spare value is discarded so every
    /// call consumes exactly two words.
    double normal() noexcept
    {
        const double u1 = uniform_open_left();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t state_;
};

} // namespace piggyback
