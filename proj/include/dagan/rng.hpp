#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace dagan {

// SplitMix64-based generator. std::mt19937 + std::*_distribution are not
// pinned across standard libraries, and reproducibility (incl. through
// checkpoint save/load) is part of the contract, so everything derives from
// this one u64 state.
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// [0, 1)
    double uniform() { return (double)(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// [0, n)
    std::uint64_t below(std::uint64_t n) {
        // Rejection-free modulo is biased for huge n; all our n are tiny.
        return next_u64() % n;
    }

    /// Standard normal via Box-Muller (cos branch only, so state stays a
    /// single u64 and checkpoints trivially).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Fisher-Yates permutation of 0..n-1.
    std::vector<int> perm(int n) {
        std::vector<int> p(n);
        for (int i = 0; i < n; ++i) p[i] = i;
        for (int i = n - 1; i > 0; --i) {
            int j = (int)below((std::uint64_t)i + 1);
            std::swap(p[i], p[j]);
        }
        return p;
    }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

  private:
    std::uint64_t state_;
};

/// Independent named stream from a base seed (FNV-1a over the tag, mixed in).
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (char c : tag) {
        h ^= (std::uint64_t)(unsigned char)c;
        h *= 0x100000001B3ull;
    }
    // one splitmix scramble so nearby seeds don't correlate
    std::uint64_t z = seed ^ h;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace dagan
