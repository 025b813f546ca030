#pragma once

#include <cstdint>

namespace dmflow {

// splitmix64 step; used for seeding and seed mixing.
uint64_t splitmix64(uint64_t& state);

// Order-sensitive mix of two words, for deriving per-step / per-stream seeds.
uint64_t hash_mix(uint64_t a, uint64_t b);

// xoshiro256** with hand-rolled Box-Muller gaussians. Self-contained so that
// draws are bitwise reproducible regardless of standard library.
class Rng {
public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();
    double uniform01();                  // [0, 1), 53-bit resolution
    double uniform(double lo, double hi);
    int64_t uniform_int(int64_t n);      // unbiased draw from [0, n)
    double gauss();                      // standard normal
    Rng split(uint64_t stream) const;    // derived independent stream

private:
    uint64_t s_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace dmflow
