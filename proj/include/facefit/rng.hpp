#pragma once

#include "facefit/types.hpp"

#include <cmath>
#include <random>

namespace facefit {

/**
 * Deterministic random source. All randomness in the library flows through
 * this class; a fixed seed therefore reproduces every derived quantity
 * bit-for-bit across platforms. The raw stream is std::mt19937_64 (whose
 * output sequence is fixed by the standard) and the real-valued mappings are
 * written out explicitly instead of relying on unspecified distribution
 * implementations.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1), 53-bit resolution.
    real uniform() { return static_cast<real>(next_u64() >> 11) * 0x1.0p-53; }

    real uniform(real lo, real hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (pairs cached).
    real normal()
    {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const real u1 = uniform();
        const real u2 = uniform();
        const real r = std::sqrt(-2.0 * std::log1p(-u1)); // log(1 - u1), u1 < 1
        const real a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    /// Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi)
    {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    real spare_ = 0;
};

} // namespace facefit
