#include "dmflow/rng.hpp"

#include <bit>
#include <cmath>

#include "dmflow/error.hpp"

namespace dmflow {

uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

uint64_t hash_mix(uint64_t a, uint64_t b) {
    uint64_t s = a;
    uint64_t h = splitmix64(s);
    s = h ^ b;
    return splitmix64(s);
}

namespace {

inline uint64_t rotl(uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

} // namespace

Rng::Rng(uint64_t seed) {
    uint64_t s = seed;
    for (auto& w : s_) {
        w = splitmix64(s);
    }
}

uint64_t Rng::next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
}

int64_t Rng::uniform_int(int64_t n) {
    require(n > 0, "invalid_arg", "uniform_int: n must be positive");
    const uint64_t un = static_cast<uint64_t>(n);
    const int bits = std::bit_width(un - 1 == 0 ? uint64_t{1} : un - 1);
    const uint64_t mask = (bits >= 64) ? ~uint64_t{0} : ((uint64_t{1} << bits) - 1);
    uint64_t r;
    do {
        r = next_u64() & mask;
    } while (r >= un);
    return static_cast<int64_t>(r);
}

double Rng::gauss() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // Box-Muller; 1 - u keeps the log argument strictly positive.
    const double u = 1.0 - uniform01();
    const double v = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u));
    const double a = 6.283185307179586476925286766559 * v;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

Rng Rng::split(uint64_t stream) const {
    uint64_t base = hash_mix(s_[0] ^ s_[2], s_[1] ^ s_[3]);
    return Rng(hash_mix(base, stream));
}

} // namespace dmflow
