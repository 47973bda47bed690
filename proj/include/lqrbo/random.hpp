#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace lqrbo {

using Rng = std::mt19937_64;

/// Counter-based seed derivation (splitmix64 finalizer over master ^ counter).
/// Streams derived from distinct counters are independent for practical purposes
/// and reproducible from the master seed alone.
inline std::uint64_t split_seed(std::uint64_t master, std::uint64_t counter) {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (counter + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline Eigen::VectorXd standard_normal(Rng& rng, Eigen::Index n) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = dist(rng);
    return v;
}

inline Eigen::VectorXd uniform_in(Rng& rng, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    Eigen::VectorXd v(lower.size());
    for (Eigen::Index i = 0; i < lower.size(); ++i) v(i) = lower(i) + dist(rng) * (upper(i) - lower(i));
    return v;
}

}  // namespace lqrbo
