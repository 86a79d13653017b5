#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "nlink/bits.hpp"

namespace nlink {

// Deterministic PRNG used everywhere randomness is needed so that a run is
// reproducible from (config, seed) alone. xoshiro256** seeded via splitmix64.
// Streams for independent stages are derived with derive(), which feeds the
// base seed and a stream id through splitmix so stages stay decorrelated no
// matter how many draws each one makes.

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
    }

    static Rng derive(uint64_t seed, uint64_t stream_id) {
        uint64_t sm = seed;
        uint64_t mixed = splitmix64(sm) ^ (0x9E3779B97F4A7C15ull * (stream_id + 1));
        return Rng(mixed);
    }

    uint64_t next_u64() {
        auto rotl = [](uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
        uint64_t result = rotl(s_[1] * 5, 7) * 9;
        uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, bound). Rejection-free modulo is fine here, the
    // bias at link-scale bounds is far below anything we can measure.
    uint64_t uniform_u64(uint64_t bound) { return next_u64() % bound; }

    // Standard normal via the polar method. Returns pairs internally, caches
    // the spare so consecutive calls cost ~one pair per two calls.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        have_spare_ = true;
        return u * m;
    }

    BitVec random_bits(size_t n) {
        BitVec bits(n);
        for (auto& b : bits) b = static_cast<uint8_t>(next_u64() & 1u);
        return bits;
    }

    std::vector<uint8_t> random_bytes(size_t n) {
        std::vector<uint8_t> bytes(n);
        for (auto& b : bytes) b = static_cast<uint8_t>(next_u64() & 0xFFu);
        return bytes;
    }

private:
    uint64_t s_[4] = {};
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace nlink
