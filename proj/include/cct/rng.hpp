#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace cct {

/// Deterministic splittable RNG. All stochastic components in the project
/// draw from their own stream so that runs replay bit-identically for a
/// fixed seed regardless of evaluation order elsewhere.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(splitmix(seed ^ 0x9e3779b97f4a7c15ull)) {}

    /// Derive an independent stream (seed, stream-id) -> new generator.
    Rng fork(uint64_t stream) const {
        Rng r(0);
        r.state_ = splitmix(state_ ^ splitmix(stream + 0x632be59bd9b4e019ull));
        return r;
    }

    uint64_t next_u64() {
        // xorshift64* on a splitmix-initialized state
        state_ ^= state_ >> 12;
        state_ ^= state_ << 25;
        state_ ^= state_ >> 27;
        return state_ * 0x2545f4914f6cdd1dull;
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    /// Uniform integer in [0, n).
    int uniform_int(int n) {
        return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller (no cached spare, keeps replay simple).
    double normal() {
        double u1 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& xs) {
        for (size_t i = xs.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(static_cast<int>(i)));
            std::swap(xs[i - 1], xs[j]);
        }
    }

private:
    static uint64_t splitmix(uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    uint64_t state_;
};

}  // namespace cct
