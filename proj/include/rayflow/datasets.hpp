#pragma once

#include "rayflow/denoiser.hpp"
#include "rayflow/schedule.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace rayflow {

struct SyntheticDataset {
    std::string name;
    int n = 0;
    std::uint64_t seed = 0;
    int dim = 2;
    std::vector<Vec> points;
};

/// gauss8: 8 equal-weight modes on the unit circle, component std 0.05.
/// two_moons: interleaved half circles with radial noise 0.05, centered.
/// ring: angle uniform, radius 1 + N(0, 0.05^2).
SyntheticDataset gen_dataset(const std::string& name, int n, std::uint64_t seed);

const std::vector<std::string>& dataset_names();

/// The exact mixture behind gauss8.
GaussianMixture gauss8_mixture();

/// Mixture used as the teacher's data distribution: exact for gauss8, and a
/// narrow Gaussian kernel density over a fixed reference draw otherwise.
GaussianMixture teacher_mixture(const std::string& name);

} // namespace rayflow
