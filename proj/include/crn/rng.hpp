#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>

namespace crn {

// SplitMix64 finalizer; used to derive independent stream seeds from a master seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Derive a stream seed from a master seed and a path of stream identifiers,
// e.g. derive_seed(master, {replicate, epoch, kSceneStream}).
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = splitmix64(master);
    for (auto id : path) s = splitmix64(s ^ splitmix64(id + 0x632BE59BD9B4E019ULL));
    return s;
}

/// Seedable random stream. One instance per replicate/stream; not thread-safe.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    double normal(double mean = 0.0, double sd = 1.0) {
        if (sd == 0.0) return mean;
        return std::normal_distribution<double>(mean, sd)(engine_);
    }
    bool bernoulli(double p) {
        if (p <= 0.0) return false;
        if (p >= 1.0) return true;
        return uniform() < p;
    }
    int poisson(double mean) {
        if (mean < 0.0) throw std::invalid_argument("poisson mean must be >= 0");
        if (mean == 0.0) return 0;
        return std::poisson_distribution<int>(mean)(engine_);
    }
    double gamma(double shape) { return std::gamma_distribution<double>(shape, 1.0)(engine_); }
    double lognormal(double mu, double sigma) {
        return std::lognormal_distribution<double>(mu, sigma)(engine_);
    }
    int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }

    // Index drawn with probability proportional to weights (need not be normalized).
    int categorical(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        if (!(total > 0.0)) throw std::invalid_argument("categorical weights must have positive sum");
        double u = uniform() * total;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            u -= weights[i];
            if (u < 0.0) return static_cast<int>(i);
        }
        // Rounding fallthrough: last index with nonzero weight.
        for (std::size_t i = weights.size(); i-- > 0;)
            if (weights[i] > 0.0) return static_cast<int>(i);
        return 0;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace crn
