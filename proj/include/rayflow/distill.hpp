#pragma once

#include "rayflow/chain.hpp"
#include "rayflow/denoiser.hpp"
#include "rayflow/gaussian.hpp"
#include "rayflow/net.hpp"
#include "rayflow/schedule.hpp"
#include "rayflow/time_sampler.hpp"

#include <cstdint>
#include <vector>

#include <json.hpp>

namespace rayflow {

/// Teacher-generated training pair.
struct DistillPair {
    Vec x0_hat;
    /// Mean of the teacher's per-step noise predictions along the solver path.
    Vec eps_hat_mu;
    Vec source_noise;
    int steps = 0;
};

struct TrainConfig {
    int epochs = 1000;
    int steps = 64; // solver steps K used to build the pairs
    double sigma = 0.3;
    double lr = 1e-3;
    int batch_size = 64;
    std::uint64_t seed = 0;
    bool time_sampler = true;
    std::vector<int> hidden = {64, 64};
    std::vector<int> sampler_hidden = {32, 32};
    int ts_particles = 32;
    double ts_bandwidth = 0.25;
    double ts_step = 1e-3;
};

struct TrainingLog {
    std::vector<double> epoch_loss;
    /// Count of chosen training timesteps, index t-1.
    std::vector<long> t_histogram;
    std::vector<double> epoch_sampler_loss;
};

struct TrainResult {
    Net student;
    Net sampler;
    TrainingLog log;
};

/// Maps sampler step k in [0, K] to a schedule index: round(k T / K).
int step_to_timestep(int k, int K, int T);

/// Deterministic K-step DDIM-style VP reverse solver starting at noise. Returns
/// (x0_hat, mean of the per-step noise predictions).
DistillPair solve_teacher(const Denoiser& teacher, const Schedule& sched, const Vec& noise, int K);

/// n pairs; pair i draws its source noise from rng.split(i).
std::vector<DistillPair> construct_pairs(const Denoiser& teacher, const Schedule& sched, int n, int K,
                                         Eigen::Index dim, const Rng& rng);

Net make_student(Eigen::Index dim, const std::vector<int>& hidden, Rng& rng);
Net make_time_sampler_net(Eigen::Index dim, const std::vector<int>& hidden, Rng& rng);

/// Distillation training of the student denoiser, optionally with the Time
/// Sampler choosing the training timesteps.
TrainResult train(Net student, Net sampler_net, const std::vector<DistillPair>& pairs, const Schedule& sched,
                  const TrainConfig& cfg, Rng& rng);

/// Student loss at the trajectory point of one pair and timestep.
double distill_loss(const Denoiser& student, const Schedule& sched, const DistillPair& pair, int t);

/// K-step sampler from x_K ~ N(0, I). Each step jumps between schedule indices
/// t(k) -> t(k-1) with a = sqrt(ab_{t(k)} / ab_{t(k-1)}) and adds
/// sqrt(beta_tilde_{t(k)}) sigma noise.
Vec sample_k_step(const Denoiser& student, const Schedule& sched, const RayFlowParams& params, int K,
                  Eigen::Index dim, Rng& rng);

/// Single jump from x_T ~ N(0, I) to x_0.
Vec sample_one_step(const Denoiser& student, const Schedule& sched, const RayFlowParams& params,
                    Eigen::Index dim, Rng& rng);

/// count independent chains; chain i uses rng.split(i).
std::vector<Vec> sample_many(const Denoiser& student, const Schedule& sched, const RayFlowParams& params, int K,
                             int count, Eigen::Index dim, const Rng& rng);

nlohmann::json to_json(const TrainingLog& log);

} // namespace rayflow
