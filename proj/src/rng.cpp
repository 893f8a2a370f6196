#include "pdtv/rng.hpp"

#include <cmath>
#include <numbers>

#include "pdtv/errors.hpp"

namespace pdtv {

double Sampler::uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Sampler::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
}

double Sampler::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

std::vector<double> Sampler::normal_vector(std::size_t n) {
    std::vector<double> out(n);
    for (auto& x : out) x = normal();
    return out;
}

std::size_t Sampler::pick(std::size_t n) {
    if (n == 0) throw parameter_error("pick from empty range");
    return static_cast<std::size_t>(engine_() % n);
}

std::vector<std::size_t> Sampler::pick_distinct(std::size_t k, std::size_t n) {
    if (k > n)
        throw parameter_error("cannot pick " + std::to_string(k) +
                              " distinct indices from " + std::to_string(n));
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < k; ++i)
        std::swap(pool[i], pool[i + pick(n - i)]);
    pool.resize(k);
    return pool;
}

} // namespace pdtv
