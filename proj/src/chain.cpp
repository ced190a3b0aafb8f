#include "rayflow/chain.hpp"

#include "rayflow/error.hpp"

#include <cmath>
#include <string>

namespace rayflow {
namespace {

void require_dim(const Vec& a, const Vec& b, const char* what) {
    if (a.size() != b.size())
        throw DimensionMismatch(std::string(what) + ": dimension mismatch");
}

void require_step(const Schedule& sched, int t) {
    if (t < 1 || t > sched.T())
        throw InvalidRange("timestep " + std::to_string(t) + " outside [1, T]");
}

} // namespace

IsoGaussian forward_step(const Schedule& sched, const RayFlowParams& params, const Vec& x_prev, int t) {
    require_step(sched, t);
    require_dim(x_prev, params.eps_mu, "forward_step");
    const double a = sched.alpha(t);
    const double b = sched.beta(t);
    return {a * x_prev + (1.0 - a) * params.eps_mu, b * b * params.sigma * params.sigma};
}

IsoGaussian forward_marginal(const Schedule& sched, const RayFlowParams& params, const Vec& x0, int t) {
    require_dim(x0, params.eps_mu, "forward_marginal");
    const double ab = sched.alpha_bar(t);
    const double sab = std::sqrt(ab);
    return {sab * x0 + (1.0 - sab) * params.eps_mu, (1.0 - ab) * params.sigma * params.sigma};
}

double posterior_eps_mu_coeff(const Schedule& sched, int t) {
    const double a = sched.alpha(t);
    const double ab_prev = sched.alpha_bar(t - 1);
    const double sab_prev = std::sqrt(ab_prev);
    const double num = 1.0 - a - a * a * ab_prev + a * ab_prev - sab_prev + sab_prev * a * a;
    return num / (1.0 - sched.alpha_bar(t));
}

double posterior_noise_mean_coeff(const Schedule& sched, int t) {
    const double b2 = 1.0 - sched.alpha(t) * sched.alpha(t);
    return -std::sqrt(sched.alpha_bar(t - 1)) * b2 / ((1.0 - sched.alpha_bar(t)) * sched.sqrt_alpha_bar(t));
}

Vec backward_step_mean_long(const Schedule& sched, const RayFlowParams& params, const Vec& x_t,
                            const Vec& x0, int t) {
    require_step(sched, t);
    require_dim(x_t, x0, "backward_step_mean_long");
    require_dim(x_t, params.eps_mu, "backward_step_mean_long");
    const double a = sched.alpha(t);
    const double ab = sched.alpha_bar(t);
    const double ab_prev = sched.alpha_bar(t - 1);
    const Vec data_part = (std::sqrt(ab_prev) * (1.0 - a * a) * x0 + a * (1.0 - ab_prev) * x_t) / (1.0 - ab);
    return data_part + posterior_eps_mu_coeff(sched, t) * params.eps_mu;
}

IsoGaussian backward_step(const Schedule& sched, const RayFlowParams& params, const Vec& x_t, int t) {
    require_step(sched, t);
    require_dim(x_t, params.eps_mu, "backward_step");
    const double a = sched.alpha(t);
    return {x_t / a - ((1.0 - a) / a) * params.eps_mu, sched.beta_tilde(t) * params.sigma * params.sigma};
}

BackwardMarginal backward_marginal_recursive(const Schedule& sched, const RayFlowParams& params,
                                             const Vec& eps_hat_mu, int t_target,
                                             const std::vector<Vec>& noise_means) {
    const int T = sched.T();
    if (t_target < 0 || t_target > T - 1)
        throw InvalidRange("backward marginal target must lie in [0, T-1]");
    if (noise_means.size() < static_cast<std::size_t>(T))
        throw InvalidRange("noise_means must provide one entry per timestep");
    require_dim(eps_hat_mu, params.eps_mu, "backward_marginal_recursive");

    const double s2 = params.sigma * params.sigma;
    Vec mean = eps_hat_mu;
    double var = 0.0;
    for (int s = T; s > t_target; --s) {
        const Vec& nm = noise_means[static_cast<std::size_t>(s - 1)];
        require_dim(nm, eps_hat_mu, "backward_marginal_recursive");
        const double a = sched.alpha(s);
        mean = mean / a + posterior_noise_mean_coeff(sched, s) * nm +
               posterior_eps_mu_coeff(sched, s) * params.eps_mu;
        var = var / (a * a) + sched.beta_tilde(s) * s2;
    }
    return {t_target, {std::move(mean), var}};
}

PathProbability path_probability(const Schedule& sched, const RayFlowParams& params, const Vec& x0_hat,
                                 const Vec& eps_hat_mu, const std::vector<Vec>& noise_means) {
    if (!(params.sigma > 0.0))
        throw DegenerateVariance("path probability needs sigma > 0; sigma -> 0 is a point-mass limit");
    PathProbability out;
    out.log_forward = log_pdf(forward_marginal(sched, params, x0_hat, sched.T()), eps_hat_mu);
    out.log_backward = log_pdf(backward_marginal_recursive(sched, params, eps_hat_mu, 0, noise_means).dist, x0_hat);
    out.log_path = out.log_forward + out.log_backward;
    return out;
}

std::vector<Vec> forward_noise_means(const Schedule& sched, const Vec& eps_mu) {
    std::vector<Vec> out;
    out.reserve(static_cast<std::size_t>(sched.T()));
    for (int t = 1; t <= sched.T(); ++t)
        out.push_back((1.0 - sched.sqrt_alpha_bar(t)) * eps_mu);
    return out;
}

OptimalParams optimal_params(const Schedule& sched, const Vec& x0_hat,
                             const std::vector<Vec>& noise_mean_per_t, double sigma_star) {
    if (noise_mean_per_t.size() != static_cast<std::size_t>(sched.T()))
        throw DimensionMismatch("optimal_params: need one noise mean per timestep");
    if (!(sigma_star > 0.0))
        throw InvalidRange("sigma_star must be positive");
    Vec avg = Vec::Zero(x0_hat.size());
    for (const auto& nm : noise_mean_per_t) {
        require_dim(nm, x0_hat, "optimal_params");
        avg += nm;
    }
    avg /= static_cast<double>(noise_mean_per_t.size());

    OptimalParams out;
    const double sab_T = sched.sqrt_alpha_bar(sched.T());
    out.eps_hat_mu_star = sab_T * x0_hat + (1.0 - sab_T) * avg;
    out.forward_noise_means = forward_noise_means(sched, avg);
    out.eps_mu_star = std::move(avg);
    out.sigma_star = sigma_star;
    return out;
}

} // namespace rayflow
