#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace bscbf {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent stream seed for (master, index). Distinct `salt` values give
/// unrelated families of streams from the same master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t salt = 0) {
    return splitmix64(splitmix64(master ^ splitmix64(salt)) + index);
}

using Rng = std::mt19937_64;

/// Gaussian increments of a d-dimensional Brownian motion.
template <int D>
class NoiseStream {
public:
    explicit NoiseStream(std::uint64_t seed) : seed_(seed), rng_(seed) {}

    std::uint64_t seed() const { return seed_; }

    /// One increment ~ N(0, dt I_D).
    template <class Out>
    void increment(double dt, Out& dW) {
        const double s = std::sqrt(dt);
        for (int i = 0; i < D; ++i) dW[i] = s * normal_(rng_);
    }

    double standard_normal() { return normal_(rng_); }
    Rng& engine() { return rng_; }

private:
    std::uint64_t seed_;
    Rng rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace bscbf
