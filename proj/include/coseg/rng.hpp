#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace coseg {

// Deterministic RNG. Wraps std::mt19937_64 but implements its own
// distributions, since the standard library distribution objects are not
// required to produce the same stream on every platform. Identical seed
// gives an identical stream on any conforming compiler.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0,1). 53-bit mantissa.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Rejection-free modulo bias is negligible
    // for the ranges used here, but do it properly anyway.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller; one value per call, cached pair.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    // Fisher-Yates shuffle, fixed visiting order.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derive an independent substream (e.g. per lesion) reproducibly.
    SeededRng fork(std::uint64_t stream_id) const {
        return SeededRng(seed_ ^ (0x9E3779B97F4A7C15ULL * (stream_id + 1)));
    }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace coseg
