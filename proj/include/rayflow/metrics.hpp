#pragma once

#include "rayflow/schedule.hpp"

#include <span>
#include <vector>

namespace rayflow {

inline constexpr std::size_t kMaxAssignmentSize = 512;

/// Minimum-cost perfect matching on a square cost matrix (row i -> column
/// result[i]). O(n^3) shortest augmenting paths with potentials.
std::vector<int> hungarian(const Eigen::MatrixXd& cost);

/// sqrt of the optimal-assignment mean squared distance between two equally
/// sized point sets. Throws DimensionMismatch on size mismatch and
/// InvalidRange above kMaxAssignmentSize points.
double wasserstein2(std::span<const Vec> a, std::span<const Vec> b);

/// Biased (V-statistic) squared MMD with the RBF kernel exp(-|x-y|^2 / (2 h^2)),
/// h^2 the median pairwise squared distance of the pooled sample.
double mmd(std::span<const Vec> a, std::span<const Vec> b);

/// Median of pairwise squared distances of the pooled sample.
double median_sq_distance(std::span<const Vec> a, std::span<const Vec> b);

} // namespace rayflow
