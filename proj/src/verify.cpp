#include "rayflow/verify.hpp"

#include "rayflow/chain.hpp"
#include "rayflow/datasets.hpp"
#include "rayflow/denoiser.hpp"
#include "rayflow/distill.hpp"
#include "rayflow/error.hpp"
#include "rayflow/gaussian.hpp"
#include "rayflow/net.hpp"
#include "rayflow/time_sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

namespace rayflow {

namespace {

struct Measured {
    double value = 0.0;
    bool pass = false;
    std::string detail;
};

// Pass when value <= tol.
Measured at_most(double value, double tol, std::string detail = {}) {
    return {value, std::isfinite(value) && value <= tol, std::move(detail)};
}

Schedule random_schedule(Rng& rng, int T, double lo = 0.5, double hi = 0.99999) {
    std::vector<double> a(static_cast<std::size_t>(T));
    for (auto& x : a) x = lo + (hi - lo) * rng.uniform();
    return Schedule::from_alphas(std::move(a));
}

double max_z(const Moments& mc, const IsoGaussian& exact, long n) {
    const auto d = static_cast<double>(exact.mean.size());
    const double se_mean = std::sqrt(exact.var / static_cast<double>(n));
    const double se_var = exact.var * std::sqrt(2.0 / ((static_cast<double>(n) - 1.0) * d));
    double z = 0.0;
    if (se_mean > 0.0) z = ((mc.mean - exact.mean).cwiseAbs() / se_mean).maxCoeff();
    if (se_var > 0.0) z = std::max(z, std::abs(mc.var - exact.var) / se_var);
    return z;
}

std::string fmt(const char* f, double a, double b = 0.0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

// --- schedule ---------------------------------------------------------------

Measured check_schedule_invariants(const Config& cfg, Rng& rng) {
    double worst = 0.0;
    int bad = 0;
    for (int i = 0; i < 100; ++i) {
        const int T = rng.uniform_int(1, 128);
        const Schedule s = apply_mutation(cfg, random_schedule(rng, T));
        for (int t = 1; t <= T; ++t) {
            worst = std::max(worst, std::abs(s.alpha(t) * s.alpha(t) + s.beta(t) * s.beta(t) - 1.0));
            if (!(s.alpha_bar(t) < s.alpha_bar(t - 1))) ++bad;
            if (s.beta_tilde(t) < 0.0) ++bad;
        }
        if (s.beta_tilde(1) != 0.0) ++bad;
    }
    Measured m = at_most(worst, 1e-12, std::to_string(bad) + " ordering/sign violations");
    m.pass = m.pass && bad == 0;
    return m;
}

Measured check_beta_tilde_formula(const Config& cfg, Rng& rng) {
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const int T = rng.uniform_int(1, 128);
        const Schedule s = apply_mutation(cfg, random_schedule(rng, T));
        for (int t = 1; t <= T; ++t) {
            const double b2 = s.beta(t) * s.beta(t);
            const double expect = (1.0 - s.alpha_bar(t - 1)) / (1.0 - s.alpha_bar(t)) * b2;
            worst = std::max(worst, std::abs(s.beta_tilde(t) - expect));
        }
    }
    return at_most(worst, 1e-12);
}

// --- chain ------------------------------------------------------------------

Measured check_reverse_mean_identity(const Config& cfg, Rng& rng) {
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const int T = rng.uniform_int(1, 128);
        const Schedule s = apply_mutation(cfg, random_schedule(rng, T, 0.95, 0.9999));
        const int t = rng.uniform_int(1, T);
        const Eigen::Index d = rng.uniform_int(1, 4);
        const RayFlowParams params{rng.normal_vec(d), 0.5};
        const Vec x_t = rng.normal_vec(d);
        const double sab = s.sqrt_alpha_bar(t);
        const Vec x0 = (x_t - (1.0 - sab) * params.eps_mu) / sab;
        const Vec long_form = backward_step_mean_long(s, params, x_t, x0, t);
        const Vec short_form = backward_step(s, params, x_t, t).mean;
        worst = std::max(worst, (long_form - short_form).cwiseAbs().maxCoeff());
    }
    return at_most(worst, 1e-10);
}

Measured check_forward_composition(const Config& cfg, Rng& rng) {
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
        const int T = rng.uniform_int(1, 64);
        const Schedule s = apply_mutation(cfg, random_schedule(rng, T, 0.8, 0.9999));
        const RayFlowParams params{rng.normal_vec(2), 0.1 + rng.uniform()};
        const Vec x0 = rng.normal_vec(2);
        // Push a Gaussian through forward steps: N(m, v) -> N(a m + (1-a) eps_mu, a^2 v + b^2 sigma^2).
        IsoGaussian g{x0, 0.0};
        for (int t = 1; t <= T; ++t) {
            const double a = s.alpha(t);
            const IsoGaussian step = forward_step(s, params, g.mean, t);
            g = IsoGaussian{step.mean, a * a * g.var + step.var};
            const IsoGaussian closed = forward_marginal(s, params, x0, t);
            worst = std::max({worst, (g.mean - closed.mean).cwiseAbs().maxCoeff(), std::abs(g.var - closed.var)});
        }
    }
    return at_most(worst, 1e-10);
}

Measured check_forward_mc(const Config& cfg, Rng& rng) {
    const Schedule s = apply_mutation(cfg, make_linear_schedule(10, 0.1, 0.5));
    const RayFlowParams params{rng.normal_vec(2), 0.7};
    const Vec x0 = rng.normal_vec(2);
    const long n = 100000;
    std::vector<Vec> xs(static_cast<std::size_t>(n));
    for (auto& x : xs) {
        x = x0;
        for (int t = 1; t <= s.T(); ++t) x = sample(forward_step(s, params, x, t), rng);
    }
    const double z = max_z(mc_moments(xs), forward_marginal(s, params, x0, s.T()), n);
    return at_most(z, 3.0, "max |z| over mean coordinates and pooled variance");
}

Measured check_backward_mc(const Config& cfg, Rng& rng) {
    const Schedule s = apply_mutation(cfg, make_linear_schedule(8, 0.1, 0.5));
    const RayFlowParams params{rng.normal_vec(1), 0.3};
    const Vec eps_hat = rng.normal_vec(1);
    const auto noise_means = forward_noise_means(s, params.eps_mu);
    const long n = 100000;
    double worst = 0.0;
    std::vector<Vec> xs(static_cast<std::size_t>(n), eps_hat);
    for (int t = s.T(); t >= 1; --t) {
        for (auto& x : xs) x = sample(backward_step(s, params, x, t), rng);
        const BackwardMarginal bm = backward_marginal_recursive(s, params, eps_hat, t - 1, noise_means);
        worst = std::max(worst, max_z(mc_moments(xs), bm.dist, n));
    }
    return at_most(worst, 3.0, "max |z| over all intermediate timesteps");
}

// Deterministic reverse chain from the optimal terminal point.
Measured check_reconstruction(const Config& cfg, Rng& rng) {
    const Schedule s = apply_mutation(cfg, make_linear_schedule(64, 0.01, 0.3));
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const Vec x0 = rng.normal_vec(2);
        std::vector<Vec> per_t;
        for (int t = 1; t <= s.T(); ++t) per_t.push_back(rng.normal_vec(2));
        const OptimalParams opt = optimal_params(s, x0, per_t, cfg.sigma_star);
        const RayFlowParams params{opt.eps_mu_star, opt.sigma_star};
        Vec x = opt.eps_hat_mu_star;
        for (int t = s.T(); t >= 1; --t) x = backward_step(s, params, x, t).mean;
        worst = std::max(worst, (x - x0).norm());
    }
    return at_most(worst, 1e-3);
}

Measured check_sigma_scaling(const Config& cfg, Rng& rng) {
    const Schedule s = apply_mutation(cfg, make_linear_schedule(64, 0.01, 0.3));
    const Vec x0 = rng.normal_vec(2);
    const OptimalParams opt = optimal_params(s, x0, std::vector<Vec>(64, rng.normal_vec(2)), cfg.sigma_star);
    const long n = 100000;
    auto err_var = [&](double sigma) {
        const RayFlowParams params{opt.eps_mu_star, sigma};
        std::vector<Vec> errs;
        errs.reserve(static_cast<std::size_t>(n));
        for (long i = 0; i < n; ++i) {
            Vec x = opt.eps_hat_mu_star;
            for (int t = s.T(); t >= 1; --t) x = sample(backward_step(s, params, x, t), rng);
            errs.push_back(x - x0);
        }
        return mc_moments(errs).var;
    };
    const double ratio = err_var(2.0 * cfg.sigma_star) / err_var(cfg.sigma_star);
    Measured m{std::abs(ratio - 4.0), ratio >= 3.5 && ratio <= 4.5, fmt("variance ratio %.4f", ratio)};
    return m;
}

Measured check_path_optimum(const Config& cfg, Rng& rng) {
    const Schedule s = apply_mutation(cfg, make_linear_schedule(32, 0.01, 0.3));
    int worse = 0;
    const int trials = 100;
    for (int i = 0; i < trials; ++i) {
        const Vec x0 = rng.normal_vec(2);
        std::vector<Vec> per_t;
        for (int t = 1; t <= s.T(); ++t) per_t.push_back(rng.normal_vec(2));
        const OptimalParams opt = optimal_params(s, x0, per_t, 0.5);
        const RayFlowParams params{opt.eps_mu_star, opt.sigma_star};
        const double best = path_probability(s, params, x0, opt.eps_hat_mu_star, opt.forward_noise_means).log_path;
        const Vec moved = opt.eps_hat_mu_star + 0.05 * rng.normal_vec(2);
        const double other = path_probability(s, params, x0, moved, opt.forward_noise_means).log_path;
        if (other < best) ++worse;
    }
    return {static_cast<double>(trials - worse), worse == trials, "perturbations that did not lower the path log-density"};
}

// --- denoiser ---------------------------------------------------------------

Measured check_denoiser_stationarity(const Config& cfg, Rng& rng) {
    double worst = 0.0;
    int not_min = 0;
    for (int i = 0; i < 100; ++i) {
        const int T = rng.uniform_int(2, 64);
        const Schedule s = apply_mutation(cfg, make_linear_schedule(T, 0.01, 0.3));
        const int K = rng.uniform_int(1, 16);
        const Eigen::Index d = rng.uniform_int(1, 4);
        std::vector<Vec> pts, tgts;
        for (int k = 0; k < K; ++k) {
            pts.push_back(rng.normal_vec(d));
            tgts.push_back(rng.normal_vec(d));
        }
        const FiniteDataset ds(pts, tgts);
        const double sigma = 0.2 + rng.uniform();
        const int t = rng.uniform_int(1, T);
        const Vec x_t = rng.normal_vec(d);
        worst = std::max(worst, optimal_denoise_loss_stationarity(ds, s, sigma, x_t, t));
        const Vec e = optimal_denoise(ds, s, sigma, x_t, t);
        const double base = optimal_denoise_loss(ds, s, sigma, x_t, t, e);
        const Vec other = e + 0.1 * rng.normal_vec(d);
        for (double lambda : {0.25, 0.5, 1.0}) {
            const Vec mix = (1.0 - lambda) * e + lambda * other;
            if (!(optimal_denoise_loss(ds, s, sigma, x_t, t, mix) > base)) ++not_min;
        }
    }
    Measured m = at_most(worst, 1e-8, std::to_string(not_min) + " perturbations failed to increase the loss");
    m.pass = m.pass && not_min == 0;
    return m;
}

Measured check_gmm_score(const Config& cfg, Rng& rng) {
    const Schedule s = apply_mutation(cfg, make_linear_schedule(50, 0.01, 0.3));
    const GaussianMixture mix = gauss8_mixture();
    double worst = 0.0;
    const double h = 1e-5;
    for (int i = 0; i < 50; ++i) {
        const int t = rng.uniform_int(1, s.T());
        const Vec x = 1.2 * rng.normal_vec(2);
        Vec score(2);
        for (Eigen::Index k = 0; k < 2; ++k) {
            Vec xp = x, xm = x;
            xp(k) += h;
            xm(k) -= h;
            score(k) = (gmm_log_marginal(mix, s, xp, t) - gmm_log_marginal(mix, s, xm, t)) / (2.0 * h);
        }
        const Vec fd = -std::sqrt(1.0 - s.alpha_bar(t)) * score;
        const Vec eps = gmm_teacher_denoise(mix, s, x, t);
        worst = std::max(worst, (fd - eps).norm() / std::max(1.0, eps.norm()));
    }
    return at_most(worst, 1e-5, "teacher prediction vs -sqrt(1-ab) * finite-difference score");
}

// --- time sampler -----------------------------------------------------------

std::vector<double> random_prob(Rng& rng, int T) {
    std::vector<double> p(static_cast<std::size_t>(T));
    for (auto& x : p) x = 0.05 + rng.uniform();
    const double z = std::accumulate(p.begin(), p.end(), 0.0);
    for (auto& x : p) x /= z;
    return p;
}

Measured check_variance_inequality(const Config&, Rng& rng) {
    const int T = 32;
    int violations = 0;
    for (int i = 0; i < 100; ++i) {
        std::vector<double> xi_v(T);
        for (auto& x : xi_v) x = rng.uniform() < 0.2 ? 0.0 : std::exp(2.0 * rng.normal());
        const auto p = (i % 2 == 0) ? std::vector<double>(T, 1.0 / T) : random_prob(rng, T);
        const auto q = optimal_q(xi_v, p);
        const double mu = is_exact_mean(xi_v, p);
        const double v_star = is_exact_variance(xi_v, q, p);
        const double v_base = is_exact_variance(xi_v, p, p);
        if (!(v_star <= v_base + 1e-12 * mu * mu)) ++violations;
    }
    return at_most(violations, 0.0, "instances with Var(q*) > Var(p)");
}

Measured check_zero_variance(const Config&, Rng& rng) {
    const int T = 32;
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        std::vector<double> xi_v(T);
        for (auto& x : xi_v) x = rng.uniform() < 0.2 ? 0.0 : std::exp(2.0 * rng.normal());
        const auto p = random_prob(rng, T);
        const auto q = optimal_q(xi_v, p);
        const double mu = is_exact_mean(xi_v, p);
        for (int t = 0; t < T; ++t) {
            if (q[t] == 0.0) continue;
            worst = std::max(worst, std::abs(xi_v[t] * p[t] / q[t] - mu) / mu);
        }
    }
    return at_most(worst, 1e-12, "relative deviation of single-draw estimates from the mean");
}

Measured check_stein_identity(const Config&, Rng& rng) {
    // p = N(m, s^2), f = Gaussian kernel; E_p[score f + f'] = 0.
    const double m = 0.7, sd = 1.3, c = 0.2, h = 0.9;
    const long n = 100000;
    double mean = 0.0, m2 = 0.0;
    for (long i = 1; i <= n; ++i) {
        const double t = m + sd * rng.normal();
        const double f = gaussian_kernel(t, c, h);
        const double g = -(t - m) / (sd * sd) * f - (t - c) / (h * h) * f;
        const double delta = g - mean;
        mean += delta / static_cast<double>(i);
        m2 += delta * (g - mean);
    }
    const double se = std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n));
    return at_most(std::abs(mean) / se, 3.0, fmt("residual %.3e, standard error %.3e", mean, se));
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

Measured check_svgd_ks(const Config&, Rng&) {
    const int T = 100;
    const double mu = T / 2.0, sd = T / 8.0;
    ParticleSet ps = ParticleSet::uniform(256, T);
    const ScalarFn score = [&](double t) { return -(t - mu) / (sd * sd); };
    for (int it = 0; it < 2000; ++it) ps = svgd_step(std::move(ps), score);
    std::vector<double> xs = ps.particles;
    std::sort(xs.begin(), xs.end());
    const double lo = normal_cdf((1.0 - mu) / sd), hi = normal_cdf((T - mu) / sd);
    double ks = 0.0;
    const auto n = static_cast<double>(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double F = (normal_cdf((xs[i] - mu) / sd) - lo) / (hi - lo);
        ks = std::max({ks, std::abs(F - static_cast<double>(i) / n), std::abs(F - static_cast<double>(i + 1) / n)});
    }
    return at_most(ks, 0.1, "KS distance to N(T/2, (T/8)^2) truncated to [1, T], T = 100");
}

// --- net --------------------------------------------------------------------

Measured check_gradients(const Config&, Rng&) {
    const std::vector<std::vector<int>> shapes{
        {2 + kTimeEmbeddingDim, 64, 64, 2}, {4 + kTimeEmbeddingDim, 64, 64, 1}, {4 + kTimeEmbeddingDim, 32, 32, 1},
        {3, 5, 2}, {1, 1}};
    double worst = 0.0;
    std::uint64_t seed = 11;
    for (const auto& dims : shapes) worst = std::max(worst, net_gradient_check(dims, seed++));
    return at_most(worst, 1e-4, "max relative error over all parameters of every network shape");
}

Measured check_displacement_gradient(const Config& cfg, Rng& rng) {
    const Schedule s = apply_mutation(cfg, make_linear_schedule(40, 0.01, 0.3));
    Rng init(rng.split(1));
    const Net net = Net::random({2 * 2 + kTimeEmbeddingDim, 16, 16, 1}, init);
    ParticleSet ps = ParticleSet::uniform(12, s.T());
    for (auto& p : ps.particles) p = std::clamp(p + 0.7 * rng.normal(), ps.t_min, ps.t_max);
    const Vec x0 = rng.normal_vec(2), eps_mu = rng.normal_vec(2);
    const Gradients g = svgd_displacement_gradient(net, s, ps, x0, eps_mu);
    double worst = 0.0;
    const double h = 1e-6;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto check = [&](auto&& param_ref, double analytic) {
            Net plus = net, minus = net;
            param_ref(plus) += h;
            param_ref(minus) -= h;
            const double fd = (svgd_displacement_loss(plus, s, ps, x0, eps_mu) -
                               svgd_displacement_loss(minus, s, ps, x0, eps_mu)) / (2.0 * h);
            worst = std::max(worst, std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-5}));
        };
        const Layer& L = net.layers[l];
        for (Eigen::Index i = 0; i < L.weight.rows(); ++i) {
            for (Eigen::Index j = 0; j < L.weight.cols(); ++j)
                check([&](Net& n) -> double& { return n.layers[l].weight(i, j); }, g.layers[l].weight(i, j));
            check([&](Net& n) -> double& { return n.layers[l].bias(i); }, g.layers[l].bias(i));
        }
    }
    return at_most(worst, 1e-4, "stationarity-loss gradient vs central differences");
}

Measured check_checkpoint_roundtrip(const Config&, Rng& rng) {
    Rng init(rng.split(2));
    const Net net = Net::random({2 + kTimeEmbeddingDim, 64, 64, 2}, init);
    std::stringstream ss;
    save_net(net, ss);
    const Net back = load_net(ss);
    const Mat x = Mat::Random(2 + kTimeEmbeddingDim, 32);
    const bool same = back == net && forward(back, x) == forward(net, x);
    return {same ? 0.0 : 1.0, same, "save -> load -> forward bit-identical"};
}

// --- distill ----------------------------------------------------------------

Measured check_k1_consistency(const Config& cfg, Rng& rng) {
    const Schedule s = apply_mutation(cfg, cfg.schedule());
    Rng init(rng.split(3));
    const Net student = make_student(2, {16, 16}, init);
    const Denoiser den = make_net_denoiser(student, s);
    int mismatches = 0;
    for (int i = 0; i < 100; ++i) {
        const RayFlowParams params{Vec::Zero(2), cfg.sigma};
        Rng a(cfg.seed + 1000 + static_cast<std::uint64_t>(i)), b = a;
        const Vec x1 = sample_k_step(den, s, params, 1, 2, a);
        const Vec x2 = sample_one_step(den, s, params, 2, b);
        if (!(x1.array() == x2.array()).all()) ++mismatches;
    }
    return {static_cast<double>(mismatches), mismatches == 0, "K = 1 multi-step vs one-step, bitwise"};
}

Measured check_loss_equals_xi(const Config& cfg, Rng& rng) {
    const Schedule s = apply_mutation(cfg, cfg.schedule());
    Rng init(rng.split(4));
    const Denoiser den = make_net_denoiser(make_student(2, {16, 16}, init), s);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
        const DistillPair p{rng.normal_vec(2), rng.normal_vec(2), rng.normal_vec(2), 1};
        const int t = rng.uniform_int(1, s.T());
        worst = std::max(worst, std::abs(distill_loss(den, s, p, t) - xi(den, s, p.x0_hat, p.eps_hat_mu, t)));
    }
    return at_most(worst, 0.0, "distillation loss at trajectory means vs xi");
}

struct CheckDef {
    const char* name;
    const char* module;
    const char* property;
    double tolerance;
    std::function<Measured(const Config&, Rng&)> run;
};

const std::vector<CheckDef>& check_defs() {
    static const std::vector<CheckDef> defs{
        {"schedule.invariants", "schedule", "alpha^2 + beta^2 = 1, alpha_bar decreasing, beta_tilde >= 0, beta_tilde_1 = 0",
         1e-12, check_schedule_invariants},
        {"schedule.beta_tilde", "schedule", "beta_tilde_t = (1 - ab_{t-1}) / (1 - ab_t) beta_t^2", 1e-12,
         check_beta_tilde_formula},
        {"chain.reverse_mean_identity", "rayflow_chain", "posterior mean simplifies to x_t / a - (1 - a) / a eps_mu",
         1e-10, check_reverse_mean_identity},
        {"chain.forward_composition", "rayflow_chain", "composed forward steps equal the closed-form marginal", 1e-10,
         check_forward_composition},
        {"chain.forward_marginal_mc", "rayflow_chain", "simulated forward chain matches the marginal moments", 3.0,
         check_forward_mc},
        {"chain.backward_marginal_mc", "rayflow_chain", "simulated reverse chain matches the backward recursion", 3.0,
         check_backward_mc},
        {"chain.reconstruction", "rayflow_chain", "reverse chain from the optimal terminal point returns to x0", 1e-3,
         check_reconstruction},
        {"chain.sigma_scaling", "rayflow_chain", "reconstruction variance scales as sigma^2", 0.5, check_sigma_scaling},
        {"chain.path_optimum", "rayflow_chain", "optimal terminal point maximizes the path log-density", 0.0,
         check_path_optimum},
        {"denoiser.stationarity", "oracle_denoiser", "closed-form denoiser is a stationary point and a minimum", 1e-8,
         check_denoiser_stationarity},
        {"denoiser.gmm_score", "oracle_denoiser", "mixture teacher equals the scaled diffused score", 1e-5,
         check_gmm_score},
        {"time_sampler.variance_inequality", "time_sampler", "Var under q* <= Var under the base distribution", 0.0,
         check_variance_inequality},
        {"time_sampler.zero_variance", "time_sampler", "every single draw from q* returns the exact mean", 1e-12,
         check_zero_variance},
        {"time_sampler.stein_identity", "time_sampler", "Stein operator has zero expectation under the target", 3.0,
         check_stein_identity},
        {"time_sampler.svgd_ks", "time_sampler", "SVGD particles approach a truncated Gaussian", 0.1, check_svgd_ks},
        {"time_sampler.displacement_gradient", "time_sampler", "analytic stationarity-loss gradient", 1e-4,
         check_displacement_gradient},
        {"net.gradient_check", "net", "backprop matches central differences", 1e-4, check_gradients},
        {"net.checkpoint_roundtrip", "net", "checkpoint round trip is exact", 0.0, check_checkpoint_roundtrip},
        {"distill.k1_consistency", "distill", "K = 1 sampler equals the one-step sampler", 0.0, check_k1_consistency},
        {"distill.loss_equals_xi", "distill", "distillation loss equals xi at trajectory means", 0.0,
         check_loss_equals_xi},
    };
    return defs;
}

} // namespace

Schedule apply_mutation(const Config& cfg, const Schedule& sched) {
    if (cfg.mutation != "beta_tilde") return sched;
    std::vector<double> bt(static_cast<std::size_t>(sched.T()));
    for (int t = 1; t <= sched.T(); ++t) bt[static_cast<std::size_t>(t - 1)] = sched.beta(t) * sched.beta(t);
    return sched.with_beta_tilde(std::move(bt));
}

double net_gradient_check(const std::vector<int>& dims, std::uint64_t seed, double floor) {
    Rng rng(seed);
    const Net net = Net::random(dims, rng);
    const int batch = 3;
    Mat x(dims.front(), batch);
    for (Eigen::Index j = 0; j < x.cols(); ++j) x.col(j) = rng.normal_vec(dims.front());
    Mat r(dims.back(), batch);
    for (Eigen::Index j = 0; j < r.cols(); ++j) r.col(j) = rng.normal_vec(dims.back());
    const Gradients g = backward(net, x, r);
    const auto loss = [&](const Net& n) { return (forward(n, x).array() * r.array()).sum(); };
    const double h = 1e-6;
    double worst = 0.0;
    const auto probe = [&](double& param, double analytic, Net& scratch) {
        const double keep = param;
        param = keep + h;
        const double lp = loss(scratch);
        param = keep - h;
        const double lm = loss(scratch);
        param = keep;
        const double fd = (lp - lm) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), floor}));
    };
    Net scratch = net;
    for (std::size_t l = 0; l < scratch.layers.size(); ++l) {
        Layer& L = scratch.layers[l];
        for (Eigen::Index i = 0; i < L.weight.rows(); ++i) {
            for (Eigen::Index j = 0; j < L.weight.cols(); ++j) probe(L.weight(i, j), g.layers[l].weight(i, j), scratch);
            probe(L.bias(i), g.layers[l].bias(i), scratch);
        }
    }
    return worst;
}

const std::vector<std::string>& verification_check_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& d : check_defs()) out.emplace_back(d.name);
        return out;
    }();
    return names;
}

VerificationReport run_verification(const Config& cfg) {
    VerificationReport report;
    report.config = cfg;
    const Rng root(cfg.seed);
    std::uint64_t id = 0;
    for (const auto& def : check_defs()) {
        Rng rng = root.split(id++);
        CheckResult r{def.name, def.module, def.property, 0.0, def.tolerance, false, 0.0, {}};
        const auto start = std::chrono::steady_clock::now();
        try {
            const Measured m = def.run(cfg, rng);
            r.measured = m.value;
            r.pass = m.pass;
            r.detail = m.detail;
        } catch (const std::exception& e) {
            r.measured = std::numeric_limits<double>::quiet_NaN();
            r.pass = false;
            r.detail = std::string("exception: ") + e.what();
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        report.checks.push_back(std::move(r));
    }
    return report;
}

bool VerificationReport::pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

nlohmann::json VerificationReport::to_json() const {
    nlohmann::json checks_j = nlohmann::json::array();
    for (const auto& c : checks) {
        checks_j.push_back({{"name", c.name},
                            {"module", c.module},
                            {"property", c.property},
                            {"measured", std::isfinite(c.measured) ? nlohmann::json(c.measured) : nlohmann::json()},
                            {"tolerance", c.tolerance},
                            {"pass", c.pass},
                            {"seconds", c.seconds},
                            {"detail", c.detail}});
    }
    return {{"schema_version", kSchemaVersion},
            {"pass", pass()},
            {"config",
             {{"schedule.T", config.T},
              {"schedule.beta_min", config.beta_min},
              {"schedule.beta_max", config.beta_max},
              {"chain.sigma", config.sigma},
              {"chain.sigma_star", config.sigma_star},
              {"seed", config.seed},
              {"verify.mutation", config.mutation}}},
            {"checks", checks_j}};
}

VerificationReport VerificationReport::from_json(const nlohmann::json& j) {
    if (j.at("schema_version").get<int>() != kSchemaVersion)
        throw ConfigError("unsupported verification report schema version");
    VerificationReport r;
    const auto& c = j.at("config");
    r.config.T = c.at("schedule.T").get<int>();
    r.config.beta_min = c.at("schedule.beta_min").get<double>();
    r.config.beta_max = c.at("schedule.beta_max").get<double>();
    r.config.sigma = c.at("chain.sigma").get<double>();
    r.config.sigma_star = c.at("chain.sigma_star").get<double>();
    r.config.seed = c.at("seed").get<std::uint64_t>();
    r.config.mutation = c.at("verify.mutation").get<std::string>();
    for (const auto& cj : j.at("checks")) {
        CheckResult cr;
        cr.name = cj.at("name").get<std::string>();
        cr.module = cj.at("module").get<std::string>();
        cr.property = cj.at("property").get<std::string>();
        cr.measured = cj.at("measured").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                  : cj.at("measured").get<double>();
        cr.tolerance = cj.at("tolerance").get<double>();
        cr.pass = cj.at("pass").get<bool>();
        cr.seconds = cj.at("seconds").get<double>();
        cr.detail = cj.at("detail").get<std::string>();
        r.checks.push_back(std::move(cr));
    }
    if (j.at("pass").get<bool>() != r.pass()) throw ConfigError("report overall status disagrees with its checks");
    return r;
}

std::string VerificationReport::table() const {
    std::ostringstream os;
    char line[256];
    std::snprintf(line, sizeof line, "%-36s %-6s %12s %12s %8s\n", "check", "status", "measured", "tolerance", "seconds");
    os << line;
    for (const auto& c : checks) {
        std::snprintf(line, sizeof line, "%-36s %-6s %12.4g %12.4g %8.2f\n", c.name.c_str(), c.pass ? "PASS" : "FAIL",
                      c.measured, c.tolerance, c.seconds);
        os << line;
    }
    os << (pass() ? "overall: PASS\n" : "overall: FAIL\n");
    return os.str();
}

} // namespace rayflow
