#pragma once

#include <cmath>
#include <cstdint>

namespace sas::rng {

// splitmix64, used to expand a user seed into stream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// xoshiro256++ with bit-identical output on every platform; the id string
// is recorded in output metadata so histograms can be regenerated.
class Xoshiro256pp {
  public:
    static constexpr const char* kAlgorithmId = "xoshiro256++/v1";

    explicit Xoshiro256pp(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    // Independent stream for a worker block: mixes the block index into the
    // seed so partitioned runs are reproducible regardless of thread count.
    static Xoshiro256pp for_block(std::uint64_t seed, std::uint64_t block) {
        std::uint64_t sm = seed ^ (0x6a09e667f3bcc909ULL + block * 0x9e3779b97f4a7c15ULL);
        std::uint64_t mixed = splitmix64(sm);
        return Xoshiro256pp(mixed ^ seed);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in (0, 1], safe as a log() argument.
    double next_double_open() { return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

    // Standard normal via Box-Muller (one draw per call, no caching, so the
    // stream position stays a pure function of the call count).
    double next_normal() {
        const double u1 = next_double_open();
        const double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    // Number of failures before the next success in Bernoulli(p) trials.
    // Only meaningful for 0 < p <= 1.
    std::uint64_t next_geometric(double p) {
        if (p >= 1.0) return 0;
        const double u = next_double_open();
        const double g = std::floor(std::log(u) / std::log1p(-p));
        if (g > 9.0e18) return 9000000000000000000ULL;
        return static_cast<std::uint64_t>(g);
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t state_[4];
};

}  // namespace sas::rng
