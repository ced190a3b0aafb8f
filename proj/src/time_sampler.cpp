#include "rayflow/time_sampler.hpp"

#include "rayflow/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rayflow {
namespace {

void require_prob(const std::vector<double>& p, std::size_t T, const char* what) {
    if (p.size() != T)
        throw DimensionMismatch(std::string(what) + ": length mismatch");
    for (double v : p)
        if (v < 0.0 || !std::isfinite(v))
            throw InvalidRange(std::string(what) + ": entries must be finite and nonnegative");
}

Mat particle_inputs(const Schedule& sched, const ParticleSet& ps, const Vec& x0, const Vec& eps_mu) {
    Mat in(x0.size() + eps_mu.size() + kTimeEmbeddingDim, static_cast<Eigen::Index>(ps.size()));
    for (std::size_t i = 0; i < ps.size(); ++i)
        in.col(static_cast<Eigen::Index>(i)) = sampler_input(sched, x0, eps_mu, ps.particles[i]);
    return in;
}

// Displacement loss and its gradient w.r.t. the per-particle network outputs.
double displacement_loss_and_output_grad(const ParticleSet& ps, const Eigen::RowVectorXd& f,
                                         Eigen::RowVectorXd* df) {
    const auto n = static_cast<Eigen::Index>(ps.size());
    const double h2 = ps.bandwidth * ps.bandwidth;
    const auto& t = ps.particles;
    Eigen::VectorXd w = f.transpose().cwiseAbs();
    if (df)
        df->setZero(n);
    if (!(w.sum() > 0.0))
        return 0.0;

    // logK(m, j) = log k(t_m, t_j)
    Mat logK(n, n);
    for (Eigen::Index m = 0; m < n; ++m)
        for (Eigen::Index j = 0; j < n; ++j) {
            const double d = t[m] - t[j];
            logK(m, j) = -d * d / (2.0 * h2);
        }
    const Mat K = logK.array().exp().matrix();

    // Per-particle kernel-density score and normalizer Z_j = sum_m w_m K(m, j).
    Eigen::VectorXd s(n), lse(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index m = 0; m < n; ++m)
            if (w[m] > 0.0)
                mx = std::max(mx, std::log(w[m]) + logK(m, j));
        double z = 0.0, num = 0.0;
        for (Eigen::Index m = 0; m < n; ++m) {
            if (w[m] <= 0.0)
                continue;
            const double r = std::exp(std::log(w[m]) + logK(m, j) - mx);
            z += r;
            num += r * (-(t[j] - t[m]) / h2);
        }
        s[j] = num / z;
        lse[j] = mx + std::log(z);
    }

    Eigen::VectorXd phi(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < n; ++j)
            acc += s[j] * K(j, i) + K(j, i) * (t[i] - t[j]) / h2;
        phi[i] = acc / static_cast<double>(n);
    }
    const double loss = phi.squaredNorm() / static_cast<double>(n);
    if (!df)
        return loss;

    const double nn = static_cast<double>(n);
    Eigen::VectorXd dL_ds = Eigen::VectorXd::Zero(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            acc += (2.0 * phi[i] / nn) * K(j, i) / nn;
        dL_ds[j] = acc;
    }
    for (Eigen::Index m = 0; m < n; ++m) {
        double dw = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double ratio = std::exp(logK(m, j) - lse[j]);
            dw += dL_ds[j] * ratio * (-(t[j] - t[m]) / h2 - s[j]);
        }
        const double sign = f[m] > 0.0 ? 1.0 : (f[m] < 0.0 ? -1.0 : 0.0);
        (*df)[m] = dw * sign;
    }
    return loss;
}

} // namespace

ParticleSet ParticleSet::uniform(int n, int T, double normalized_bandwidth, double normalized_step) {
    if (n < 2)
        throw InvalidRange("particle set needs n >= 2");
    if (T < 1)
        throw InvalidRange("T must be >= 1");
    if (!(normalized_bandwidth > 0.0) || !(normalized_step > 0.0))
        throw InvalidRange("bandwidth and step size must be positive");
    ParticleSet ps;
    ps.t_min = 1.0;
    ps.t_max = static_cast<double>(T);
    ps.bandwidth = normalized_bandwidth * T;
    ps.step_size = normalized_step * T * T;
    ps.particles.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        ps.particles[i] = T == 1 ? 1.0 : 1.0 + (T - 1.0) * i / (n - 1.0);
    return ps;
}

double xi(const Denoiser& denoiser, const Schedule& sched, const Vec& x0, const Vec& eps_mu, int t) {
    if (t < 1 || t > sched.T())
        throw InvalidRange("xi: timestep outside [1, T]");
    if (x0.size() != eps_mu.size())
        throw DimensionMismatch("xi: x0 and eps_mu differ in dimension");
    const double sab = sched.sqrt_alpha_bar(t);
    const Vec point = sab * x0 + (1.0 - sab) * eps_mu;
    return (denoiser(point, t) - eps_mu).squaredNorm();
}

std::vector<double> xi_profile(const Denoiser& denoiser, const Schedule& sched, const Vec& x0, const Vec& eps_mu) {
    std::vector<double> out(static_cast<std::size_t>(sched.T()));
    for (int t = 1; t <= sched.T(); ++t)
        out[t - 1] = xi(denoiser, sched, x0, eps_mu, t);
    return out;
}

std::vector<double> optimal_q(const std::vector<double>& xi_values, const std::vector<double>& base_p) {
    require_prob(base_p, xi_values.size(), "optimal_q");
    require_prob(xi_values, base_p.size(), "optimal_q");
    const double z = is_exact_mean(xi_values, base_p);
    if (!(z > 0.0))
        throw DegenerateTarget("loss identically zero under base_p; fall back to base_p");
    std::vector<double> q(xi_values.size());
    for (std::size_t t = 0; t < q.size(); ++t)
        q[t] = xi_values[t] * base_p[t] / z;
    return q;
}

double is_exact_mean(const std::vector<double>& xi_values, const std::vector<double>& base_p) {
    double z = 0.0;
    for (std::size_t t = 0; t < xi_values.size(); ++t)
        z += xi_values[t] * base_p[t];
    return z;
}

double is_exact_variance(const std::vector<double>& xi_values, const std::vector<double>& q,
                         const std::vector<double>& base_p) {
    const double mu = is_exact_mean(xi_values, base_p);
    double second = 0.0;
    for (std::size_t t = 0; t < q.size(); ++t) {
        const double mass = xi_values[t] * base_p[t];
        if (mass == 0.0)
            continue;
        if (q[t] <= 0.0)
            throw SupportViolation("q vanishes where xi p is nonzero");
        const double r = mass / q[t];
        second += q[t] * r * r;
    }
    return std::max(0.0, second - mu * mu);
}

ISReport is_estimate(const std::function<double(int)>& xi_at, const std::vector<double>& q,
                     const std::vector<double>& base_p, long n, Rng& rng, std::string tag) {
    require_prob(q, base_p.size(), "is_estimate");
    if (n < 1)
        throw InvalidRange("is_estimate needs n >= 1");
    // Support check over the full grid.
    std::vector<double> xi_vals(q.size());
    for (std::size_t t = 0; t < q.size(); ++t) {
        xi_vals[t] = xi_at(static_cast<int>(t) + 1);
        if (xi_vals[t] * base_p[t] != 0.0 && q[t] <= 0.0)
            throw SupportViolation("q vanishes where xi p is nonzero (t=" + std::to_string(t + 1) + ")");
    }
    double mean = 0.0, m2 = 0.0;
    for (long i = 0; i < n; ++i) {
        const int idx = rng.categorical(q);
        const double term = xi_vals[static_cast<std::size_t>(idx)] * base_p[static_cast<std::size_t>(idx)] /
                            q[static_cast<std::size_t>(idx)];
        const double delta = term - mean;
        mean += delta / static_cast<double>(i + 1);
        m2 += delta * (term - mean);
    }
    ISReport r;
    r.estimate = mean;
    r.variance = n > 1 ? m2 / static_cast<double>(n - 1) : 0.0;
    r.n = n;
    r.distribution = std::move(tag);
    return r;
}

double gaussian_kernel(double a, double b, double h) {
    const double d = a - b;
    return std::exp(-d * d / (2.0 * h * h));
}

std::vector<double> svgd_direction(const ParticleSet& ps, const ScalarFn& target_score) {
    if (!(ps.bandwidth > 0.0))
        throw InvalidRange("SVGD bandwidth must be positive");
    const std::size_t n = ps.size();
    const double h2 = ps.bandwidth * ps.bandwidth;
    std::vector<double> score(n);
    for (std::size_t j = 0; j < n; ++j)
        score[j] = target_score(ps.particles[j]);
    std::vector<double> phi(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double ti = ps.particles[i];
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double tj = ps.particles[j];
            const double k = gaussian_kernel(tj, ti, ps.bandwidth);
            acc += score[j] * k + k * (ti - tj) / h2;
        }
        phi[i] = acc / static_cast<double>(n);
    }
    return phi;
}

ParticleSet svgd_step(ParticleSet ps, const ScalarFn& target_score) {
    const auto phi = svgd_direction(ps, target_score);
    for (std::size_t i = 0; i < ps.size(); ++i)
        ps.particles[i] = std::clamp(ps.particles[i] + ps.step_size * phi[i], ps.t_min, ps.t_max);
    return ps;
}

ScalarFn kde_target_score(const ParticleSet& ps, const ScalarFn& xi_at) {
    if (!(ps.bandwidth > 0.0))
        throw InvalidRange("kernel bandwidth must be positive");
    std::vector<double> centers, log_w;
    for (double t : ps.particles) {
        const double w = xi_at(t);
        if (w < 0.0 || !std::isfinite(w))
            throw InvalidRange("kde_target_score: xi must be finite and nonnegative");
        if (w > 0.0) {
            centers.push_back(t);
            log_w.push_back(std::log(w));
        }
    }
    if (centers.empty())
        throw DegenerateTarget("kde_target_score: all particle weights are zero");
    const double h2 = ps.bandwidth * ps.bandwidth;
    return [centers = std::move(centers), log_w = std::move(log_w), h2](double t) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < centers.size(); ++i) {
            const double d = t - centers[i];
            mx = std::max(mx, log_w[i] - d * d / (2.0 * h2));
        }
        double z = 0.0, num = 0.0;
        for (std::size_t i = 0; i < centers.size(); ++i) {
            const double d = t - centers[i];
            const double r = std::exp(log_w[i] - d * d / (2.0 * h2) - mx);
            z += r;
            num += r * (-d / h2);
        }
        return num / z;
    };
}

std::vector<double> time_weights(const Net& net, const Schedule& sched, const Vec& x0, const Vec& eps_mu) {
    const int T = sched.T();
    Mat in(x0.size() + eps_mu.size() + kTimeEmbeddingDim, T);
    for (int t = 1; t <= T; ++t)
        in.col(t - 1) = sampler_input(sched, x0, eps_mu, t);
    const Mat out = forward(net, in);
    std::vector<double> f(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t)
        f[t] = out(0, t);
    return f;
}

std::vector<double> time_distribution(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights)
        total += std::abs(w);
    std::vector<double> p(weights.size());
    if (!(total > 0.0) || !std::isfinite(total)) {
        std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(weights.size()));
        return p;
    }
    for (std::size_t i = 0; i < p.size(); ++i)
        p[i] = std::abs(weights[i]) / total;
    return p;
}

double time_sampler_regression_step(Net& net, AdamW& opt, const Schedule& sched, const ParticleSet& ps,
                                    const Vec& x0, const Vec& eps_mu, const ScalarFn& xi_at) {
    const Mat in = particle_inputs(sched, ps, x0, eps_mu);
    const Mat out = forward(net, in);
    const double n = static_cast<double>(ps.size());
    Mat grad(1, in.cols());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < in.cols(); ++i) {
        const double r = out(0, i) - xi_at(ps.particles[static_cast<std::size_t>(i)]);
        loss += r * r / n;
        grad(0, i) = 2.0 * r / n;
    }
    opt.step(net, backward(net, in, grad));
    return loss;
}

double svgd_displacement_loss(const Net& net, const Schedule& sched, const ParticleSet& ps, const Vec& x0,
                              const Vec& eps_mu) {
    const Mat out = forward(net, particle_inputs(sched, ps, x0, eps_mu));
    return displacement_loss_and_output_grad(ps, out.row(0), nullptr);
}

Gradients svgd_displacement_gradient(const Net& net, const Schedule& sched, const ParticleSet& ps,
                                     const Vec& x0, const Vec& eps_mu) {
    const Mat in = particle_inputs(sched, ps, x0, eps_mu);
    const Mat out = forward(net, in);
    Eigen::RowVectorXd df;
    displacement_loss_and_output_grad(ps, out.row(0), &df);
    return backward(net, in, Mat(df));
}

double time_sampler_stationarity_step(Net& net, AdamW& opt, const Schedule& sched, const ParticleSet& ps,
                                      const Vec& x0, const Vec& eps_mu) {
    const Mat in = particle_inputs(sched, ps, x0, eps_mu);
    const Mat out = forward(net, in);
    Eigen::RowVectorXd df;
    const double loss = displacement_loss_and_output_grad(ps, out.row(0), &df);
    opt.step(net, backward(net, in, Mat(df)));
    return loss;
}

Net train_time_sampler(Net net, ParticleSet& ps, const Schedule& sched, const Vec& x0, const Vec& eps_mu,
                       const ScalarFn& xi_at, const TimeSamplerConfig& cfg) {
    if (cfg.phase1_steps <= 0 && cfg.phase2_steps <= 0)
        return net;
    AdamW opt(net, cfg.optimizer);
    for (int i = 0; i < cfg.phase1_steps; ++i)
        time_sampler_regression_step(net, opt, sched, ps, x0, eps_mu, xi_at);
    for (int i = 0; i < cfg.phase2_steps; ++i) {
        const ScalarFn score = kde_target_score(ps, xi_at);
        ps = svgd_step(std::move(ps), score);
        time_sampler_stationarity_step(net, opt, sched, ps, x0, eps_mu);
    }
    return net;
}

} // namespace rayflow
