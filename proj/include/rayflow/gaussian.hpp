#pragma once

#include "rayflow/schedule.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace rayflow {

/// N(mean, var * I). var == 0 is a point mass at mean.
struct IsoGaussian {
    Vec mean;
    double var = 0.0;

    Eigen::Index dim() const { return mean.size(); }
};

/// Seeded pseudo-random stream.
///
/// Streams are single-owner. Parallel or per-item work derives independent
/// child streams with split(child_id); the child seed is a SplitMix64 hash of
/// (seed, child_id), so results depend only on the root seed and the ids used.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t seed() const { return seed_; }
    Rng split(std::uint64_t child_id) const;

    double normal();
    Vec normal_vec(Eigen::Index d);
    /// Uniform on [0, 1).
    double uniform();
    /// Uniform integer in [lo, hi].
    int uniform_int(int lo, int hi);
    /// Index drawn from an (unnormalized) nonnegative weight vector.
    int categorical(std::span<const double> weights);

    std::mt19937_64& engine() { return engine_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x);

Vec sample(const IsoGaussian& g, Rng& rng);

/// -(d/2) ln(2 pi var) - |x - mean|^2 / (2 var). Throws DegenerateVariance for var == 0.
double log_pdf(const IsoGaussian& g, const Vec& x);

/// Distribution of scale * X + shift for X ~ g.
IsoGaussian affine(const IsoGaussian& g, double scale, const Vec& shift);

/// Distribution of X1 + X2 for independent X1 ~ g1, X2 ~ g2.
IsoGaussian convolve(const IsoGaussian& g1, const IsoGaussian& g2);

struct Moments {
    Vec mean;
    /// Unbiased per-coordinate variance pooled over coordinates.
    double var = 0.0;
};

Moments mc_moments(std::span<const Vec> samples);

} // namespace rayflow
