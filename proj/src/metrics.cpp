#include "rayflow/metrics.hpp"

#include "rayflow/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rayflow {

std::vector<int> hungarian(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    if (cost.cols() != n) throw DimensionMismatch("assignment cost matrix must be square");
    const double inf = std::numeric_limits<double>::infinity();
    // 1-based potentials; column 0 is a virtual source.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<int> match(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = match[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> row_to_col(static_cast<std::size_t>(n));
    for (int j = 1; j <= n; ++j) row_to_col[static_cast<std::size_t>(match[j] - 1)] = j - 1;
    return row_to_col;
}

double wasserstein2(std::span<const Vec> a, std::span<const Vec> b) {
    if (a.size() != b.size()) throw DimensionMismatch("wasserstein2 needs equally sized point sets");
    if (a.size() > kMaxAssignmentSize) throw InvalidRange("wasserstein2 is exact only up to 512 points");
    if (a.empty()) return 0.0;
    const auto n = static_cast<Eigen::Index>(a.size());
    Eigen::MatrixXd cost(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (a[i].size() != b[j].size()) throw DimensionMismatch("point dimensions differ");
            cost(i, j) = (a[i] - b[j]).squaredNorm();
        }
    }
    const auto match = hungarian(cost);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) total += cost(i, match[static_cast<std::size_t>(i)]);
    return std::sqrt(total / static_cast<double>(n));
}

double median_sq_distance(std::span<const Vec> a, std::span<const Vec> b) {
    std::vector<const Vec*> pooled;
    for (const auto& x : a) pooled.push_back(&x);
    for (const auto& x : b) pooled.push_back(&x);
    std::vector<double> d;
    d.reserve(pooled.size() * (pooled.size() - 1) / 2);
    for (std::size_t i = 0; i < pooled.size(); ++i)
        for (std::size_t j = i + 1; j < pooled.size(); ++j) d.push_back((*pooled[i] - *pooled[j]).squaredNorm());
    if (d.empty()) throw InsufficientSamples("median heuristic needs at least two points");
    const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    return *mid;
}

double mmd(std::span<const Vec> a, std::span<const Vec> b) {
    if (a.empty() || b.empty()) throw InsufficientSamples("mmd needs nonempty samples");
    double h2 = median_sq_distance(a, b);
    if (!(h2 > 0.0)) h2 = 1.0;
    const auto mean_kernel = [h2](std::span<const Vec> x, std::span<const Vec> y) {
        double s = 0.0;
        for (const auto& p : x)
            for (const auto& q : y) s += std::exp(-(p - q).squaredNorm() / (2.0 * h2));
        return s / (static_cast<double>(x.size()) * static_cast<double>(y.size()));
    };
    return mean_kernel(a, a) + mean_kernel(b, b) - 2.0 * mean_kernel(a, b);
}

} // namespace rayflow
