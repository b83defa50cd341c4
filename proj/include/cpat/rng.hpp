#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace cpat {

// Seeded generator with hand-rolled distributions. mt19937_64 output is
// pinned by the standard and the transforms below avoid std::*_distribution,
// whose sequences differ across library implementations; the same seed
// therefore yields the same stream everywhere.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n); n must be positive
    int64_t uniform_int(int64_t n) {
        return static_cast<int64_t>(gen_() % static_cast<uint64_t>(n));
    }

    // standard normal via Box-Muller, pair cached
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = std::max(uniform(), 1e-300);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double th = 2.0 * M_PI * u2;
        spare_ = r * std::sin(th);
        has_spare_ = true;
        return r * std::cos(th);
    }

    // normal(0, stddev) clipped by rejection to +-clip_sigmas standard deviations
    double trunc_normal(double stddev, double clip_sigmas = 2.0) {
        for (;;) {
            const double v = normal();
            if (std::abs(v) <= clip_sigmas) return v * stddev;
        }
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace cpat
