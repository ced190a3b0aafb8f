#include "rayflow/gaussian.hpp"

#include "rayflow/error.hpp"

#include <cmath>
#include <numbers>

namespace rayflow {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

Rng Rng::split(std::uint64_t child_id) const {
    return Rng(splitmix64(seed_ ^ splitmix64(child_id + 0x632be59bd9b4e019ULL)));
}

double Rng::normal() { return normal_(engine_); }

Vec Rng::normal_vec(Eigen::Index d) {
    Vec v(d);
    for (Eigen::Index i = 0; i < d; ++i)
        v[i] = normal();
    return v;
}

double Rng::uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

int Rng::uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }

int Rng::categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights)
        total += w;
    if (!(total > 0.0))
        throw DegenerateTarget("categorical: weights sum to zero");
    double u = uniform() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        u -= weights[i];
        if (u < 0.0)
            return static_cast<int>(i);
    }
    // Rounding can leave u marginally positive; fall back to the last nonzero bin.
    for (std::size_t i = weights.size(); i-- > 0;)
        if (weights[i] > 0.0)
            return static_cast<int>(i);
    return 0;
}

Vec sample(const IsoGaussian& g, Rng& rng) {
    if (g.var == 0.0)
        return g.mean;
    return g.mean + std::sqrt(g.var) * rng.normal_vec(g.dim());
}

double log_pdf(const IsoGaussian& g, const Vec& x) {
    if (g.var <= 0.0)
        throw DegenerateVariance("log_pdf of a zero-variance Gaussian");
    if (x.size() != g.dim())
        throw DimensionMismatch("log_pdf: point and mean differ in dimension");
    const double d = static_cast<double>(g.dim());
    return -0.5 * d * std::log(2.0 * std::numbers::pi * g.var) - (x - g.mean).squaredNorm() / (2.0 * g.var);
}

IsoGaussian affine(const IsoGaussian& g, double scale, const Vec& shift) {
    if (shift.size() != g.dim())
        throw DimensionMismatch("affine: shift dimension");
    return {scale * g.mean + shift, scale * scale * g.var};
}

IsoGaussian convolve(const IsoGaussian& g1, const IsoGaussian& g2) {
    if (g1.dim() != g2.dim())
        throw DimensionMismatch("convolve: dimension mismatch");
    return {g1.mean + g2.mean, g1.var + g2.var};
}

Moments mc_moments(std::span<const Vec> samples) {
    if (samples.size() < 2)
        throw InsufficientSamples("mc_moments needs at least two samples");
    const Eigen::Index d = samples.front().size();
    Vec mean = Vec::Zero(d);
    for (const auto& s : samples) {
        if (s.size() != d)
            throw DimensionMismatch("mc_moments: ragged samples");
        mean += s;
    }
    const double n = static_cast<double>(samples.size());
    mean /= n;
    double ss = 0.0;
    for (const auto& s : samples)
        ss += (s - mean).squaredNorm();
    return {mean, ss / ((n - 1.0) * static_cast<double>(d))};
}

} // namespace rayflow
