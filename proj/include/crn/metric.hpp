#pragma once

#include <cmath>
#include <span>
#include <stdexcept>

namespace crn::classes {

// Distance between two distributions over the same finite state space:
//   ( (1/V) * sum_v |a(v) - b(v)|^p )^(1/p)
// This is the index-matched form used for clustering and class association; it
// is a normalized l_p distance rather than an optimal-transport Wasserstein.
inline double wasserstein_p(std::span<const double> a, std::span<const double> b, double p = 2.0) {
    if (a.size() != b.size()) throw std::invalid_argument("wasserstein_p: length mismatch");
    if (a.empty()) throw std::invalid_argument("wasserstein_p: empty distributions");
    if (!(p >= 1.0)) throw std::invalid_argument("wasserstein_p: p must be >= 1");
    double acc = 0.0;
    if (p == 2.0) {
        for (std::size_t v = 0; v < a.size(); ++v) acc += (a[v] - b[v]) * (a[v] - b[v]);
        return std::sqrt(acc / static_cast<double>(a.size()));
    }
    for (std::size_t v = 0; v < a.size(); ++v) acc += std::pow(std::abs(a[v] - b[v]), p);
    return std::pow(acc / static_cast<double>(a.size()), 1.0 / p);
}

}  // namespace crn::classes
