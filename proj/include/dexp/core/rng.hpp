#pragma once

#include "dexp/core/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <random>

namespace dexp {

/**
 * Seeded scalar stream.
 *
 * Raw bits come from std::mt19937_64, whose output sequence is fixed by the
 * C++ standard. Uniforms take the top 53 bits. Normals use the Marsaglia
 * polar method (sqrt and log only) rather than std::normal_distribution,
 * whose algorithm differs between standard libraries.
 */
class Rng
{
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform()
    {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

    double normal()
    {
        if (has_spare_)
        {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do
        {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    /// Independent child stream; used to give each run or frame its own seed.
    Rng split() { return Rng(next_u64()); }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// i.i.d. standard normal tensor.
inline Tensor randn(Rng& rng, Shape shape)
{
    Tensor t(std::move(shape));
    for (auto& v : t.data())
        v = rng.normal();
    return t;
}

inline Tensor rand_uniform(Rng& rng, Shape shape, double lo = 0.0, double hi = 1.0)
{
    Tensor t(std::move(shape));
    for (auto& v : t.data())
        v = rng.uniform(lo, hi);
    return t;
}

} // namespace dexp
