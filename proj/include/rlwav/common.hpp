#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace rlwav {

// Self-contained RNG so that streams are reproducible across platforms and
// standard library versions (std distributions are not pinned by the standard).
struct SplitMix64 {
    uint64_t state;
    explicit SplitMix64(uint64_t seed) : state(seed) {}
    uint64_t next() {
        uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
};

class Rng {
  public:
    explicit Rng(uint64_t seed) { reseed(seed); }
    Rng(uint64_t seed, uint64_t stream) { reseed(seed ^ (0x9e3779b97f4a7c15ull * (stream + 1))); }

    void reseed(uint64_t seed) {
        SplitMix64 sm(seed);
        for (auto &w : s_) w = sm.next();
        if (s_[0] == 0 && s_[1] == 0 && s_[2] == 0 && s_[3] == 0) s_[0] = 1;
    }

    uint64_t next_u64() {
        // xoshiro256++
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform in [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    float uniformf(float lo, float hi) { return float(uniform(lo, hi)); }
    // integer in [0, n)
    uint64_t below(uint64_t n) { return next_u64() % n; }

    double normal() {
        // Box-Muller; one value per call keeps the stream position predictable.
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

  private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t s_[4];
};

// Derive a child seed for an independent stream (env index, clip index, ...).
inline uint64_t substream(uint64_t seed, uint64_t id) {
    SplitMix64 sm(seed ^ (id * 0xda942042e4dd58b5ull + 0x2545f4914f6cdd1dull));
    return sm.next();
}

inline float clampf(float v, float lo, float hi) { return v < lo ? lo : (v > hi ? hi : v); }
inline double clampd(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

constexpr double kPi = 3.14159265358979323846;

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string &m) : std::runtime_error(m) {}
};
struct IoError : std::runtime_error {
    explicit IoError(const std::string &m) : std::runtime_error(m) {}
};

}  // namespace rlwav
