// Counter-based random streams. Every draw is a pure function of the keys
// used to build the stream plus a running counter, so runs are reproducible
// bit-for-bit regardless of thread count or platform libm differences.
#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace driftlab {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

class RandomStream {
public:
    explicit RandomStream(std::initializer_list<uint64_t> keys) {
        state_ = 0x8C7F0AAC97C4AA2FULL;
        for (uint64_t k : keys) state_ = splitmix64(state_ ^ k);
    }

    uint64_t next_u64() { return splitmix64(state_++); }

    // Uniform in [0, 1).
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in (0, 1); never returns 0, safe under log().
    double next_open() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    // Uniform integer in [0, n).
    uint64_t next_below(uint64_t n) {
        return static_cast<uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Standard normal via Box-Muller.
    double next_gaussian() {
        const double u1 = next_open();
        const double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

private:
    uint64_t state_;
};

}  // namespace driftlab
