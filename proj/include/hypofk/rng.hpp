#pragma once

#include <cstdint>

namespace hypofk {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Counter-based generator: the value at (seed, stream, counter) is a pure
/// function of its arguments, so draws do not depend on evaluation order.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
        : key_(mix64(seed ^ mix64(stream + 0x632BE59BD9B4E019ULL))) {}

    std::uint64_t bits(std::uint64_t counter) const noexcept {
        return mix64(key_ + (counter + 1) * 0x9E3779B97F4A7C15ULL);
    }

    /// Uniform in the open interval (0, 1).
    double uniform(std::uint64_t counter) const noexcept {
        return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
    }

private:
    std::uint64_t key_;
};

/// Sequential view of one counter range as a UniformRandomBitGenerator, so
/// standard distributions (e.g. the ziggurat normal of Boost.Random) can
/// consume it. Values depend only on (seed, stream, first counter).
class CounterStream {
public:
    using result_type = std::uint64_t;

    CounterStream(const CounterRng& rng, std::uint64_t first = 0) noexcept : rng_(rng), counter_(first) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }
    result_type operator()() noexcept { return rng_.bits(counter_++); }

    std::uint64_t position() const noexcept { return counter_; }

private:
    CounterRng rng_;
    std::uint64_t counter_;
};

}  // namespace hypofk
