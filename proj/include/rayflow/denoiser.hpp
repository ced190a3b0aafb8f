#pragma once

#include "rayflow/schedule.hpp"

#include <functional>
#include <vector>

namespace rayflow {

/// Noise predictor evaluated at (x_t, t).
using Denoiser = std::function<Vec(const Vec& x_t, int t)>;

/// K data points with one per-sample target mean each.
struct FiniteDataset {
    std::vector<Vec> points;
    std::vector<Vec> targets;

    FiniteDataset() = default;
    FiniteDataset(std::vector<Vec> points, std::vector<Vec> targets);

    std::size_t size() const { return points.size(); }
    Eigen::Index dim() const { return points.empty() ? 0 : points.front().size(); }
};

/// Isotropic Gaussian mixture sum_k w_k N(means_k, component_var I).
struct GaussianMixture {
    std::vector<Vec> means;
    std::vector<double> weights;
    double component_var = 0.0;

    GaussianMixture() = default;
    GaussianMixture(std::vector<Vec> means, std::vector<double> weights, double component_var);

    Eigen::Index dim() const { return means.empty() ? 0 : means.front().size(); }
};

/// Softmax weights of the dataset components at x_t:
/// w_i ∝ N(x_t; sqrt(ab_t) x0_i + (1 - sqrt(ab_t)) eps_mu_i, (1 - ab_t) sigma^2).
Eigen::VectorXd optimal_denoise_weights(const FiniteDataset& ds, const Schedule& sched, double sigma,
                                        const Vec& x_t, int t);

/// Minimizer of the per-x_t denoising loss over a finite dataset: the
/// softmax-weighted average of the per-sample targets.
Vec optimal_denoise(const FiniteDataset& ds, const Schedule& sched, double sigma, const Vec& x_t, int t);

/// Weighted denoising loss L(e) = sum_i w_i |e - eps_mu_i|^2 with normalized weights.
double optimal_denoise_loss(const FiniteDataset& ds, const Schedule& sched, double sigma, const Vec& x_t,
                            int t, const Vec& prediction);

/// |grad L| at the closed-form minimizer, relative to the total weight.
double optimal_denoise_loss_stationarity(const FiniteDataset& ds, const Schedule& sched, double sigma,
                                         const Vec& x_t, int t);

/// Exact posterior noise prediction E[eps | x_t] of a VP diffusion whose data
/// distribution is the given mixture (x_t = sqrt(ab) x0 + sqrt(1 - ab) eps).
Vec gmm_teacher_denoise(const GaussianMixture& mixture, const Schedule& sched, const Vec& x_t, int t);

/// log p_t(x) of the diffused mixture; used for score checks.
double gmm_log_marginal(const GaussianMixture& mixture, const Schedule& sched, const Vec& x, int t);

Denoiser make_gmm_teacher(GaussianMixture mixture, Schedule sched);
Denoiser make_oracle_denoiser(FiniteDataset ds, Schedule sched, double sigma);

} // namespace rayflow
