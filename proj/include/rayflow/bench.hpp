#pragma once

#include "rayflow/chain.hpp"
#include "rayflow/distill.hpp"
#include "rayflow/schedule.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace rayflow {

struct DistillRunConfig {
    std::string dataset = "gauss8";
    int T = 100;
    double beta_min = 0.01;
    double beta_max = 0.3;
    int teacher_steps = 64;
    int pairs = 1024;
    int samples = 512;
    std::vector<int> eval_steps = {1, 2, 4, 8};
    TrainConfig train;

    Schedule schedule() const { return make_linear_schedule(T, beta_min, beta_max); }
};

nlohmann::json to_json(const DistillRunConfig& cfg);
DistillRunConfig distill_run_config_from_json(const nlohmann::json& j);

struct MetricRow {
    std::string dataset;
    int K = 0;
    /// "on", "off", or "teacher" for the K = T teacher reference row.
    std::string time_sampler;
    std::uint64_t seed = 0;
    double w2 = 0.0;
    double mmd = 0.0;
    int n = 0;
};

struct DistillRun {
    DistillRunConfig config;
    TrainResult result;
    std::vector<MetricRow> metrics;
};

/// Reference sample of the true data distribution for a (dataset, seed) cell.
std::vector<Vec> reference_sample(const std::string& dataset, int n, std::uint64_t seed);

/// Teacher samples drawn with the full K = T solver.
std::vector<Vec> teacher_sample(const std::string& dataset, const Schedule& sched, int n, std::uint64_t seed);

/// W2 between two independent teacher clouds of n points: the sampling noise floor.
double teacher_floor(const std::string& dataset, const Schedule& sched, int n, std::uint64_t seed);

/// Builds pairs, trains one student, and scores it at every K in eval_steps.
DistillRun run_distill(const DistillRunConfig& cfg);

void write_run_dir(const DistillRun& run, const std::filesystem::path& dir);

struct BenchConfig {
    DistillRunConfig base;
    std::vector<std::string> datasets = {"gauss8"};
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
    bool with_time_sampler = true;
    bool without_time_sampler = true;
    /// Worker threads for independent cells; 0 uses the hardware concurrency.
    int threads = 0;
};

struct BenchResult {
    std::vector<MetricRow> rows;
    /// Teacher self-distance per (dataset, seed), same order as the loops.
    std::vector<MetricRow> floors;
};

using Progress = std::function<void(const std::string&)>;

/// Teacher rows, then students at each K with and without the Time Sampler.
BenchResult run_benchmark(const BenchConfig& cfg, const Progress& progress = {});

/// Header plus one row per metric; floats with 9 significant digits.
void write_metrics_csv(const std::vector<MetricRow>& rows, std::ostream& os);

struct TimeSamplerBenchRow {
    int instance_id = 0;
    double var_uniform = 0.0;
    double var_qstar = 0.0;
    double ratio = 0.0;
};

/// Exact estimator variances of xi profiles taken from randomly initialized
/// students on random (x0, eps_mu) pairs, T = 32.
std::vector<TimeSamplerBenchRow> bench_time_sampler(int instances, std::uint64_t seed);
void write_time_sampler_csv(const std::vector<TimeSamplerBenchRow>& rows, std::ostream& os);
nlohmann::json time_sampler_summary(const std::vector<TimeSamplerBenchRow>& rows);

/// Collects every run directory (one containing run.json) under root.
nlohmann::json collect_report(const std::filesystem::path& root);

std::string format_sig9(double x);

} // namespace rayflow
