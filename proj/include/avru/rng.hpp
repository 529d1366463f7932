#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace avru {

// splitmix64 finalizer, used to derive independent seeds from a master seed
// plus stream tags. Keeping the mixing explicit pins every random decision
// in the pipeline to code we own.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
    std::uint64_t s = mix64(master ^ 0x8f3c0a5d2e914b76ULL);
    s = mix64(s ^ mix64(a));
    s = mix64(s ^ mix64(b + 0x2545f4914f6cdd1dULL));
    s = mix64(s ^ mix64(c + 0x9e6c63d0876a9a35ULL));
    return s;
}

// Deterministic RNG. mt19937_64 supplies the bit stream; all distributions
// are implemented here rather than relying on std::*_distribution, whose
// output is implementation-defined.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform integer in [lo, hi] inclusive, by rejection.
    int uniform_int(int lo, int hi) {
        const std::uint64_t range = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return lo + static_cast<int>(x % range);
    }

    std::size_t uniform_index(std::size_t n) {
        return static_cast<std::size_t>(uniform_int(0, static_cast<int>(n) - 1));
    }

    // Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller with a cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0)
            u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Normal truncated to [-2, 2] sigma by resampling.
    double truncated_normal(double stddev) {
        double z;
        do {
            z = normal();
        } while (z < -2.0 || z > 2.0);
        return z * stddev;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices drawn uniformly from [0, n), order randomized.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i)
            idx[i] = i;
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + uniform_index(n - i);
            std::swap(idx[i], idx[j]);
        }
        idx.resize(k);
        return idx;
    }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace avru
