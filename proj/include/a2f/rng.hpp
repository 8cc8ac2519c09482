#pragma once

#include <cstdint>

namespace a2f {

// splitmix64-based generator. Used everywhere randomness is needed so that
// sequences are bit-identical across platforms and standard library versions
// (std::uniform_* distributions are implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform integer in [0, n).
    std::uint32_t below(std::uint32_t n) { return static_cast<std::uint32_t>(next_u64() % n); }

    // Uniform in [0, 1) with 53-bit resolution.
    double unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [-bound, bound).
    double symmetric(double bound) { return (unit() * 2.0 - 1.0) * bound; }

    // Independent stream for (seed, index) pairs; lets training draw a fresh
    // generator per step so a resumed run replays the same sequence.
    static Rng substream(std::uint64_t seed, std::uint64_t index) {
        Rng mix(seed ^ (0x6a09e667f3bcc909ULL + index * 0x9e3779b97f4a7c15ULL));
        return Rng(mix.next_u64());
    }

private:
    std::uint64_t state_;
};

}  // namespace a2f
