#pragma once

#include "piggyback/random.hpp"

#include <cstdint>
#include <stdexcept>

namespace piggyback {

/// Seeded stream of i.i.d. uniform sample indices in [0, m).
///
/// The stream is counter based: the draw at position n is a pure function of
/// (seed, n). Replaying a stream (common random numbers across perturbed
/// parameters) is therefore a matter of forking it back to position zero.
/// High 64 bits of the 128-bit product a·b.
constexpr std::uint64_t mul_high(std::uint64_t a, std::uint64_t b) noexcept
{
    const std::uint64_t a_lo = a & 0xFFFFFFFFULL;
    const std::uint64_t a_hi = a >> 32;
    const std::uint64_t b_lo = b & 0xFFFFFFFFULL;
    const std::uint64_t b_hi = b >> 32;
    const std::uint64_t lo_lo = a_lo * b_lo;
    const std::uint64_t hi_lo = a_hi * b_lo;
    const std::uint64_t lo_hi = a_lo * b_hi;
    const std::uint64_t cross = (lo_lo >> 32) + (hi_lo & 0xFFFFFFFFULL) + lo_hi;
    return a_hi * b_hi + (hi_lo >> 32) + (cross >> 32);
}

class SampleStream {
public:
    SampleStream(std::uint64_t seed, std::uint64_t num_samples)
        : seed_(seed)
        , m_(num_samples)
    {
        if (num_samples == 0) {
            throw std::invalid_argument("SampleStream: number of samples must be positive");
        }
    }

    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
    [[nodiscard]] std::uint64_t num_samples() const noexcept { return m_; }
    [[nodiscard]] std::uint64_t position() const noexcept { return position_; }

    /// Index drawn at an absolute position, without touching the stream.
    [[nodiscard]] std::uint64_t at(std::uint64_t position) const noexcept
    {
        const std::uint64_t bits = mix64(seed_ + (position + 1) * kGoldenGamma);
        // multiply-shift bounded mapping; bias is at most m / 2^64
        return mul_high(bits, m_);
    }

    std::uint64_t next_index() noexcept { return at(position_++); }

    /// Independent copy rewound to position zero.
    [[nodiscard]] SampleStream fork() const noexcept { return SampleStream(seed_, m_); }

private:
    std::uint64_t seed_;
    std::uint64_t m_;
    std::uint64_t position_ = 0;
};

} // namespace piggyback
