#pragma once

#include <cstdint>

namespace shortfall {

/// Counter-based generator: every draw is a pure function of
/// (seed, stream, counter), so each user owns an independent stream and slot t
/// of that stream does not depend on how many other users exist.
/// The mixing function is the SplitMix64 finaliser applied twice.
class CounterRng {
public:
    explicit constexpr CounterRng(std::uint64_t seed) : seed_(seed) {}

    constexpr std::uint64_t seed() const { return seed_; }

    constexpr std::uint64_t bits(std::uint64_t stream, std::uint64_t counter) const {
        std::uint64_t x = mix(seed_ ^ mix(stream + 0x9e3779b97f4a7c15ULL));
        return mix(x + counter * 0xd1342543de82ef95ULL + 0x632be59bd9b4e019ULL);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    constexpr double uniform(std::uint64_t stream, std::uint64_t counter) const {
        return static_cast<double>(bits(stream, counter) >> 11) * 0x1.0p-53;
    }

private:
    static constexpr std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
};

}  // namespace shortfall
