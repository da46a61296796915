#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace abig {

// All stochastic code draws through these helpers so that a seed pins the
// byte-exact output stream regardless of standard-library distribution details.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

    std::uint64_t raw() { return gen_(); }

    // uniform on [0,1) with 53 random bits
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Box-Muller, no cached spare so call order stays obvious
    double normal(double mean = 0.0, double sd = 1.0) {
        double u1 = uniform01(), u2 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + sd * r * std::cos(2.0 * M_PI * u2);
    }

    // standard Gumbel(0,1) with the clamp used by the concrete-relaxation sampler
    double gumbel() {
        double u = uniform01();
        if (u < 1e-10) u = 1e-10;
        if (u > 1.0 - 1e-10) u = 1.0 - 1e-10;
        return -std::log(-std::log(u));
    }

    // Knuth multiplication method; exact for the moderate rates used here
    int poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        double limit = std::exp(-lambda);
        double prod = uniform01();
        int n = 0;
        while (prod > limit) {
            prod *= uniform01();
            ++n;
        }
        return n;
    }

    // unbiased integer on [0, n)
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) return 0;
        std::uint64_t lim = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t v = gen_();
        while (v >= lim) v = gen_();
        return v % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
};

} // namespace abig
