#pragma once

#include "rayflow/denoiser.hpp"
#include "rayflow/gaussian.hpp"
#include "rayflow/net.hpp"
#include "rayflow/schedule.hpp"

#include <functional>
#include <string>
#include <vector>

namespace rayflow {

/// Continuous timestep particles on [t_min, t_max] evolved by SVGD.
/// bandwidth and step_size are in raw timestep units.
struct ParticleSet {
    std::vector<double> particles;
    double bandwidth = 1.0;
    double step_size = 1.0;
    double t_min = 1.0;
    double t_max = 1.0;

    std::size_t size() const { return particles.size(); }

    /// n evenly spaced particles on [1, T]. Bandwidth and step size are given
    /// on the normalized axis t/T and rescaled to raw units (h * T, eps * T^2),
    /// which keeps the dynamics invariant to T.
    static ParticleSet uniform(int n, int T, double normalized_bandwidth = 0.25,
                               double normalized_step = 1e-3);
};

using ScalarFn = std::function<double(double)>;

struct ISReport {
    double estimate = 0.0;
    /// Unbiased sample variance of the single-draw estimator xi p / q.
    double variance = 0.0;
    long n = 0;
    std::string distribution;
};

/// Squared error of a denoiser at the deterministic trajectory point
/// sqrt(ab_t) x0 + (1 - sqrt(ab_t)) eps_mu against eps_mu.
double xi(const Denoiser& denoiser, const Schedule& sched, const Vec& x0, const Vec& eps_mu, int t);

/// xi for t = 1..T.
std::vector<double> xi_profile(const Denoiser& denoiser, const Schedule& sched, const Vec& x0, const Vec& eps_mu);

/// q*_t = xi_t p_t / sum_s xi_s p_s. Throws DegenerateTarget when the loss is
/// identically zero under p; callers should fall back to base_p.
std::vector<double> optimal_q(const std::vector<double>& xi_values, const std::vector<double>& base_p);

/// Exact mean sum_t xi_t p_t.
double is_exact_mean(const std::vector<double>& xi_values, const std::vector<double>& base_p);

/// Exact single-draw variance E_q[(xi p / q)^2] - mu^2 of the importance
/// sampling estimator.
double is_exact_variance(const std::vector<double>& xi_values, const std::vector<double>& q,
                         const std::vector<double>& base_p);

/// Importance-sampling estimate of sum_t xi_t p_t from n draws of t ~ q.
/// xi_at is called with 1-based timesteps.
ISReport is_estimate(const std::function<double(int)>& xi_at, const std::vector<double>& q,
                     const std::vector<double>& base_p, long n, Rng& rng, std::string tag = "q");

double gaussian_kernel(double a, double b, double h);

/// SVGD direction phi(t) = 1/n sum_j [score(t_j) k(t_j, t) + d/dt_j k(t_j, t)]
/// evaluated at every particle.
std::vector<double> svgd_direction(const ParticleSet& ps, const ScalarFn& target_score);

/// One SVGD update t_i += eps * phi(t_i), clamped to [t_min, t_max].
ParticleSet svgd_step(ParticleSet ps, const ScalarFn& target_score);

/// t -> d/dt ln(1/n sum_i xi(t_i) K(t_i, t)) for the Gaussian kernel of the
/// particle set. Weights are sampled once, at construction.
ScalarFn kde_target_score(const ParticleSet& ps, const ScalarFn& xi_at);

struct TimeSamplerConfig {
    int phase1_steps = 300;
    int phase2_steps = 100;
    AdamWConfig optimizer{};
};

/// Time weights f_t = net(x0, eps_mu, t) for t = 1..T.
std::vector<double> time_weights(const Net& net, const Schedule& sched, const Vec& x0, const Vec& eps_mu);

/// p*(t) = |f_t| / sum_s |f_s| over t = 1..T; uniform if every weight is zero.
std::vector<double> time_distribution(const std::vector<double>& weights);

/// One AdamW step on 1/n sum_i (f(t_i) - xi(t_i))^2 over the particles. Returns the loss.
double time_sampler_regression_step(Net& net, AdamW& opt, const Schedule& sched, const ParticleSet& ps,
                                    const Vec& x0, const Vec& eps_mu, const ScalarFn& xi_at);

/// 1/n sum_i phi(t_i)^2 where phi uses the network's |f| at the particles as
/// kernel-density weights for the drive term.
double svgd_displacement_loss(const Net& net, const Schedule& sched, const ParticleSet& ps, const Vec& x0,
                              const Vec& eps_mu);

/// One AdamW step on svgd_displacement_loss. Returns the loss before the step.
double time_sampler_stationarity_step(Net& net, AdamW& opt, const Schedule& sched, const ParticleSet& ps,
                                      const Vec& x0, const Vec& eps_mu);

/// Gradient of svgd_displacement_loss w.r.t. network parameters.
Gradients svgd_displacement_gradient(const Net& net, const Schedule& sched, const ParticleSet& ps,
                                     const Vec& x0, const Vec& eps_mu);

/// Two-phase Time Sampler fit for one (x0, eps_mu) pair: regression of f to xi
/// at the particles, then alternating SVGD moves of the particles toward
/// q* ∝ xi and stationarity steps on the network. ps is updated in place.
Net train_time_sampler(Net net, ParticleSet& ps, const Schedule& sched, const Vec& x0, const Vec& eps_mu,
                       const ScalarFn& xi_at, const TimeSamplerConfig& cfg);

} // namespace rayflow
