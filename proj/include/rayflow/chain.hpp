#pragma once

#include "rayflow/gaussian.hpp"
#include "rayflow/schedule.hpp"

#include <vector>

namespace rayflow {

/// Parameters of the terminal distribution N(eps_mu, sigma^2 I).
struct RayFlowParams {
    Vec eps_mu;
    double sigma = 0.0;
};

struct OptimalParams {
    Vec eps_mu_star;
    Vec eps_hat_mu_star;
    double sigma_star = 0.0;
    /// (1 - sqrt(alpha_bar_t)) * eps_mu_star for t = 1..T (index t-1).
    std::vector<Vec> forward_noise_means;
};

struct BackwardMarginal {
    int t = 0;
    IsoGaussian dist;
};

struct PathProbability {
    double log_forward = 0.0;
    double log_backward = 0.0;
    double log_path = 0.0;
};

/// p(x_t | x_{t-1}) = N(alpha_t x_{t-1} + (1 - alpha_t) eps_mu, beta_t^2 sigma^2).
IsoGaussian forward_step(const Schedule& sched, const RayFlowParams& params, const Vec& x_prev, int t);

/// p(x_t | x_0) = N(sqrt(ab_t) x0 + (1 - sqrt(ab_t)) eps_mu, (1 - ab_t) sigma^2).
/// Accepts t = 0, which yields the point mass at x0.
IsoGaussian forward_marginal(const Schedule& sched, const RayFlowParams& params, const Vec& x0, int t);

/// Coefficient of eps_mu in the unsimplified posterior mean of x_{t-1}.
double posterior_eps_mu_coeff(const Schedule& sched, int t);

/// Coefficient multiplying E[noise_t] in the reverse-step mean once x0 is
/// eliminated through x0 = (x_t - E[noise_t]) / sqrt(ab_t).
double posterior_noise_mean_coeff(const Schedule& sched, int t);

/// Posterior mean of x_{t-1} given (x_t, x0) in its unsimplified form:
/// [sqrt(ab_{t-1})(1 - a_t^2) x0 + a_t (1 - ab_{t-1}) x_t] / (1 - ab_t) + c_t eps_mu.
Vec backward_step_mean_long(const Schedule& sched, const RayFlowParams& params, const Vec& x_t,
                            const Vec& x0, int t);

/// p(x_{t-1} | x_t) = N(x_t / a_t - ((1 - a_t) / a_t) eps_mu, beta_tilde_t sigma^2).
IsoGaussian backward_step(const Schedule& sched, const RayFlowParams& params, const Vec& x_t, int t);

/// p(x_{t_target} | x_T = eps_hat_mu), computed by exact backward recursion of
/// mean and variance from s = T down to t_target + 1:
///
///   mean <- mean / a_s + e_s + c_s
///   var  <- var / a_s^2 + beta_tilde_s sigma^2
///
/// with e_s = posterior_noise_mean_coeff(s) * noise_means[s-1] and
/// c_s = posterior_eps_mu_coeff(s) * eps_mu.
BackwardMarginal backward_marginal_recursive(const Schedule& sched, const RayFlowParams& params,
                                             const Vec& eps_hat_mu, int t_target,
                                             const std::vector<Vec>& noise_means);

/// Forward log-density of reaching eps_hat_mu from x0_hat plus the backward
/// marginal log-density of returning to x0_hat. Requires sigma > 0.
PathProbability path_probability(const Schedule& sched, const RayFlowParams& params, const Vec& x0_hat,
                                 const Vec& eps_hat_mu, const std::vector<Vec>& noise_means);

/// Path-maximizing parameters for x0_hat given per-step forward noise means.
/// sigma_star is the small positive stand-in for the sigma -> 0 limit.
OptimalParams optimal_params(const Schedule& sched, const Vec& x0_hat,
                             const std::vector<Vec>& noise_mean_per_t, double sigma_star = 1e-4);

/// Noise means of the forward process for a given target mean:
/// (1 - sqrt(ab_t)) eps_mu for t = 1..T.
std::vector<Vec> forward_noise_means(const Schedule& sched, const Vec& eps_mu);

} // namespace rayflow
