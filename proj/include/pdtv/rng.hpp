#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace pdtv {

/// Seeded sampler on top of std::mt19937_64 with fixed draw algorithms
/// (Box-Muller, Lemire-free modulo pick), so emitted experiment data is
/// bit-identical across standard-library versions.
class Sampler {
public:
    explicit Sampler(std::uint64_t seed) : engine_(seed) {}

    /// Uniform double in [0, 1), 53 random bits.
    double uniform01();

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi);

    /// Standard normal via Box-Muller.
    double normal();

    std::vector<double> normal_vector(std::size_t n);

    /// Uniform integer in [0, n).
    std::size_t pick(std::size_t n);

    /// k distinct indices from [0, n), partial Fisher-Yates order.
    std::vector<std::size_t> pick_distinct(std::size_t k, std::size_t n);

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace pdtv
