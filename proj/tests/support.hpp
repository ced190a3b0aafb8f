#pragma once
// Hand-rolled generators and small numeric oracles shared by the unit tests.

#include "rayflow/gaussian.hpp"
#include "rayflow/schedule.hpp"

#include <cmath>
#include <vector>

namespace testing {

using rayflow::Rng;
using rayflow::Schedule;
using rayflow::Vec;

inline Schedule random_schedule(Rng& rng, int T, double lo = 0.5, double hi = 0.99999) {
    std::vector<double> a(static_cast<std::size_t>(T));
    for (auto& x : a) x = lo + (hi - lo) * rng.uniform();
    return Schedule::from_alphas(std::move(a));
}

inline Schedule random_linear_schedule(Rng& rng) {
    const int T = rng.uniform_int(1, 128);
    const double b0 = 0.001 + 0.2 * rng.uniform();
    const double b1 = b0 + (0.95 - b0) * rng.uniform();
    return rayflow::make_linear_schedule(T, b0, b1);
}

/// Long-double product of alpha^2 for the first t steps.
inline long double product_alpha_sq(const Schedule& s, int t) {
    long double p = 1.0L;
    for (int k = 1; k <= t; ++k) p *= static_cast<long double>(s.alpha(k)) * s.alpha(k);
    return p;
}

inline double max_abs(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Plain-loop sample mean and unbiased pooled variance, independent of mc_moments.
struct PlainMoments {
    Vec mean;
    double var;
};
inline PlainMoments plain_moments(const std::vector<Vec>& xs) {
    const auto d = xs.front().size();
    Vec m = Vec::Zero(d);
    for (const auto& x : xs) m += x;
    m /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (const auto& x : xs)
        for (Eigen::Index k = 0; k < d; ++k) ss += (x(k) - m(k)) * (x(k) - m(k));
    return {m, ss / ((static_cast<double>(xs.size()) - 1.0) * static_cast<double>(d))};
}

} // namespace testing
