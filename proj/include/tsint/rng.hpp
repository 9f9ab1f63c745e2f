#pragma once

#include <cstdint>

namespace tsint {

// Deterministic splitmix64 generator. Standard-library distributions are
// implementation-defined, so replayable seeds go through this instead.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // uniform in [0,1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [lo, hi] inclusive
    int uniform_int(int lo, int hi) {
        return lo + int(next_u64() % uint64_t(hi - lo + 1));
    }

    bool chance(double p) { return uniform() < p; }

    // independent stream for trial `i` of a campaign seeded with `seed`
    static uint64_t substream(uint64_t seed, uint64_t i) {
        Rng r(seed ^ (0x9E3779B97F4A7C15ull * (i + 1)));
        return r.next_u64();
    }

private:
    uint64_t state_;
};

} // namespace tsint
