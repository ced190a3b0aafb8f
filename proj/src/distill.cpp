#include "rayflow/distill.hpp"

#include "rayflow/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace rayflow {

int step_to_timestep(int k, int K, int T) {
    if (K < 1) throw InvalidRange("step count K must be >= 1");
    if (k < 0 || k > K) throw InvalidRange("step index out of [0, K]");
    return static_cast<int>(std::lround(static_cast<double>(k) * T / K));
}

DistillPair solve_teacher(const Denoiser& teacher, const Schedule& sched, const Vec& noise, int K) {
    const int T = sched.T();
    if (K < 1 || K > T) throw InvalidRange("teacher steps K must be in [1, T]");
    Vec x = noise;
    Vec eps_sum = Vec::Zero(noise.size());
    int used = 0;
    for (int k = K; k >= 1; --k) {
        const int t = step_to_timestep(k, K, T);
        const int s = step_to_timestep(k - 1, K, T);
        if (t == s) continue;
        const Vec eps = teacher(x, t);
        if (eps.size() != x.size()) throw DimensionMismatch("teacher output size differs from input");
        eps_sum += eps;
        ++used;
        const double ab_t = sched.alpha_bar(t);
        const double ab_s = sched.alpha_bar(s);
        const Vec x0_pred = (x - std::sqrt(1.0 - ab_t) * eps) / std::sqrt(ab_t);
        x = std::sqrt(ab_s) * x0_pred + std::sqrt(1.0 - ab_s) * eps;
    }
    return DistillPair{x, eps_sum / static_cast<double>(used), noise, K};
}

std::vector<DistillPair> construct_pairs(const Denoiser& teacher, const Schedule& sched, int n, int K,
                                         Eigen::Index dim, const Rng& rng) {
    if (n < 1) throw InvalidRange("pair count must be positive");
    if (dim < 1) throw InvalidRange("dimension must be positive");
    std::vector<DistillPair> pairs;
    pairs.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng child = rng.split(static_cast<std::uint64_t>(i));
        pairs.push_back(solve_teacher(teacher, sched, child.normal_vec(dim), K));
    }
    return pairs;
}

namespace {

std::vector<int> with_ends(int in, const std::vector<int>& hidden, int out) {
    std::vector<int> dims{in};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(out);
    return dims;
}

Vec trajectory_mean(const Schedule& sched, const DistillPair& p, double t) {
    const double a = sched.sqrt_alpha_bar_at(t);
    return a * p.x0_hat + (1.0 - a) * p.eps_hat_mu;
}

bool all_finite(const Mat& m) { return m.allFinite(); }

} // namespace

Net make_student(Eigen::Index dim, const std::vector<int>& hidden, Rng& rng) {
    const int d = static_cast<int>(dim);
    return Net::random(with_ends(d + kTimeEmbeddingDim, hidden, d), rng);
}

Net make_time_sampler_net(Eigen::Index dim, const std::vector<int>& hidden, Rng& rng) {
    const int d = static_cast<int>(dim);
    return Net::random(with_ends(2 * d + kTimeEmbeddingDim, hidden, 1), rng);
}

double distill_loss(const Denoiser& student, const Schedule& sched, const DistillPair& pair, int t) {
    const Vec x_t = trajectory_mean(sched, pair, t);
    return (student(x_t, t) - pair.eps_hat_mu).squaredNorm();
}

TrainResult train(Net student, Net sampler_net, const std::vector<DistillPair>& pairs, const Schedule& sched,
                  const TrainConfig& cfg, Rng& rng) {
    if (pairs.empty()) throw InsufficientSamples("no training pairs");
    if (cfg.epochs < 0) throw InvalidRange("epochs must be >= 0");
    if (cfg.batch_size < 1) throw InvalidRange("batch size must be >= 1");
    if (!(cfg.lr > 0.0)) throw InvalidRange("learning rate must be positive");
    const Eigen::Index d = pairs.front().x0_hat.size();
    for (const auto& p : pairs)
        if (p.x0_hat.size() != d || p.eps_hat_mu.size() != d)
            throw DimensionMismatch("training pairs have inconsistent dimensions");
    if (student.input_dim() != d + kTimeEmbeddingDim || student.output_dim() != d)
        throw DimensionMismatch("student network shape does not match the data dimension");
    if (cfg.time_sampler && (sampler_net.input_dim() != 2 * d + kTimeEmbeddingDim || sampler_net.output_dim() != 1))
        throw DimensionMismatch("time sampler network shape does not match the data dimension");

    const int T = sched.T();
    AdamWConfig opt_cfg;
    opt_cfg.lr = cfg.lr;
    AdamW student_opt(student, opt_cfg);
    AdamW sampler_opt(sampler_net, opt_cfg);
    ParticleSet particles = ParticleSet::uniform(std::max(cfg.ts_particles, 2), T, cfg.ts_bandwidth, cfg.ts_step);

    TrainResult out;
    out.log.t_histogram.assign(static_cast<std::size_t>(T), 0);

    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto B = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng.engine());
        double loss_sum = 0.0;
        double sampler_loss_sum = 0.0;
        long batches = 0;
        for (std::size_t start = 0; start < order.size(); start += B) {
            const std::size_t nb = std::min(B, order.size() - start);
            Mat inputs(d + kTimeEmbeddingDim, static_cast<Eigen::Index>(nb));
            Mat targets(d, static_cast<Eigen::Index>(nb));
            for (std::size_t j = 0; j < nb; ++j) {
                const DistillPair& p = pairs[order[start + j]];
                int t;
                if (cfg.time_sampler) {
                    const auto probs = time_distribution(time_weights(sampler_net, sched, p.x0_hat, p.eps_hat_mu));
                    t = 1 + rng.categorical(probs);
                } else {
                    t = rng.uniform_int(1, T);
                }
                ++out.log.t_histogram[static_cast<std::size_t>(t - 1)];
                const auto col = static_cast<Eigen::Index>(j);
                inputs.col(col) = denoiser_input(sched, trajectory_mean(sched, p, t), t);
                targets.col(col) = p.eps_hat_mu;
            }
            const Mat pred = forward(student, inputs);
            const Mat resid = pred - targets;
            const double loss = resid.squaredNorm() / static_cast<double>(nb);
            if (!std::isfinite(loss) || !all_finite(pred)) {
                std::ostringstream msg;
                msg << "non-finite training loss at epoch " << epoch << ", batch " << batches;
                throw NumericalError(msg.str());
            }
            student_opt.step(student, backward(student, inputs, (2.0 / static_cast<double>(nb)) * resid));
            loss_sum += loss;

            if (cfg.time_sampler) {
                // One regression / SVGD / stationarity round on the first pair of the batch.
                const DistillPair& p = pairs[order[start]];
                const ScalarFn xi_at = [&](double t) {
                    const Vec x = trajectory_mean(sched, p, t);
                    return (forward(student, denoiser_input(sched, x, t)) - p.eps_hat_mu).squaredNorm();
                };
                sampler_loss_sum += time_sampler_regression_step(sampler_net, sampler_opt, sched, particles,
                                                                 p.x0_hat, p.eps_hat_mu, xi_at);
                const ScalarFn score = kde_target_score(particles, xi_at);
                particles = svgd_step(std::move(particles), score);
                time_sampler_stationarity_step(sampler_net, sampler_opt, sched, particles, p.x0_hat, p.eps_hat_mu);
            }
            ++batches;
        }
        out.log.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
        out.log.epoch_sampler_loss.push_back(cfg.time_sampler ? sampler_loss_sum / static_cast<double>(batches) : 0.0);
    }
    out.student = std::move(student);
    out.sampler = std::move(sampler_net);
    return out;
}

namespace {

void check_sampling(const Schedule& sched, const RayFlowParams& params, Eigen::Index dim) {
    if (dim < 1) throw InvalidRange("dimension must be positive");
    if (params.sigma < 0.0) throw InvalidRange("sigma must be >= 0");
    if (params.eps_mu.size() != 0 && params.eps_mu.size() != dim)
        throw DimensionMismatch("eps_mu dimension differs from the sample dimension");
    (void)sched;
}

// x / a - (1 - a) / a * eps_hat + sqrt(beta_tilde) sigma z. Shared by both
// samplers so K = 1 reproduces the one-step sampler exactly.
Vec jump(const Vec& x, double a, const Vec& eps_hat, double noise_std, const Vec& z) {
    return x / a - ((1.0 - a) / a) * eps_hat + noise_std * z;
}

} // namespace

Vec sample_k_step(const Denoiser& student, const Schedule& sched, const RayFlowParams& params, int K,
                  Eigen::Index dim, Rng& rng) {
    check_sampling(sched, params, dim);
    const int T = sched.T();
    if (K < 1 || K > T) throw InvalidRange("sampling steps K must be in [1, T]");
    Vec x = rng.normal_vec(dim);
    for (int k = K; k >= 1; --k) {
        const int t = step_to_timestep(k, K, T);
        const int s = step_to_timestep(k - 1, K, T);
        const Vec eps_hat = student(x, t);
        const double a = std::sqrt(sched.alpha_bar(t) / sched.alpha_bar(s));
        const double noise_std = std::sqrt(sched.beta_tilde(t)) * params.sigma;
        const Vec z = rng.normal_vec(dim);
        x = jump(x, a, eps_hat, noise_std, z);
    }
    return x;
}

Vec sample_one_step(const Denoiser& student, const Schedule& sched, const RayFlowParams& params,
                    Eigen::Index dim, Rng& rng) {
    check_sampling(sched, params, dim);
    const int T = sched.T();
    Vec x = rng.normal_vec(dim);
    const Vec eps_hat = student(x, T);
    const double a = std::sqrt(sched.alpha_bar(T) / sched.alpha_bar(0));
    const double noise_std = std::sqrt(sched.beta_tilde(T)) * params.sigma;
    const Vec z = rng.normal_vec(dim);
    return jump(x, a, eps_hat, noise_std, z);
}

std::vector<Vec> sample_many(const Denoiser& student, const Schedule& sched, const RayFlowParams& params, int K,
                             int count, Eigen::Index dim, const Rng& rng) {
    if (count < 0) throw InvalidRange("sample count must be >= 0");
    std::vector<Vec> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Rng child = rng.split(static_cast<std::uint64_t>(i));
        out.push_back(sample_k_step(student, sched, params, K, dim, child));
    }
    return out;
}

nlohmann::json to_json(const TrainingLog& log) {
    return nlohmann::json{{"epoch_loss", log.epoch_loss},
                          {"epoch_sampler_loss", log.epoch_sampler_loss},
                          {"t_histogram", log.t_histogram}};
}

} // namespace rayflow
