#include "rayflow/datasets.hpp"

#include "rayflow/error.hpp"
#include "rayflow/gaussian.hpp"

#include <cmath>
#include <numbers>

namespace rayflow {

namespace {

constexpr double kStd = 0.05;
constexpr int kReferencePoints = 256;
constexpr std::uint64_t kReferenceSeed = 0x7e1cc0ffeeULL;

Vec point(double x, double y) {
    Vec v(2);
    v << x, y;
    return v;
}

} // namespace

const std::vector<std::string>& dataset_names() {
    static const std::vector<std::string> names{"gauss8", "two_moons", "ring"};
    return names;
}

GaussianMixture gauss8_mixture() {
    std::vector<Vec> means;
    for (int k = 0; k < 8; ++k) {
        const double a = 2.0 * std::numbers::pi * k / 8.0;
        means.push_back(point(std::cos(a), std::sin(a)));
    }
    return GaussianMixture(std::move(means), std::vector<double>(8, 1.0), kStd * kStd);
}

SyntheticDataset gen_dataset(const std::string& name, int n, std::uint64_t seed) {
    if (n < 0) throw InvalidRange("dataset size must be >= 0");
    SyntheticDataset ds{name, n, seed, 2, {}};
    ds.points.reserve(static_cast<std::size_t>(n));
    Rng rng(seed);
    if (name == "gauss8") {
        const GaussianMixture mix = gauss8_mixture();
        for (int i = 0; i < n; ++i) {
            const int k = rng.uniform_int(0, 7);
            ds.points.push_back(mix.means[static_cast<std::size_t>(k)] + kStd * rng.normal_vec(2));
        }
    } else if (name == "two_moons") {
        for (int i = 0; i < n; ++i) {
            const bool upper = rng.uniform() < 0.5;
            const double a = std::numbers::pi * rng.uniform();
            Vec p = upper ? point(std::cos(a), std::sin(a)) : point(1.0 - std::cos(a), 0.5 - std::sin(a));
            p += kStd * rng.normal_vec(2);
            ds.points.push_back(p - point(0.5, 0.25));
        }
    } else if (name == "ring") {
        for (int i = 0; i < n; ++i) {
            const double a = 2.0 * std::numbers::pi * rng.uniform();
            const double r = 1.0 + kStd * rng.normal();
            ds.points.push_back(point(r * std::cos(a), r * std::sin(a)));
        }
    } else {
        throw ConfigError("unknown dataset '" + name + "' (expected gauss8, two_moons or ring)");
    }
    return ds;
}

GaussianMixture teacher_mixture(const std::string& name) {
    if (name == "gauss8") return gauss8_mixture();
    // Kernel density over clean curve points; the 0.05 kernel reproduces the
    // generators' noise level.
    SyntheticDataset ref = gen_dataset(name, kReferencePoints, kReferenceSeed);
    return GaussianMixture(std::move(ref.points), std::vector<double>(kReferencePoints, 1.0), kStd * kStd);
}

} // namespace rayflow
