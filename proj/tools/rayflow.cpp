// rayflow command line: verification suite, distillation runs, sampling and reports.

#include "rayflow/bench.hpp"
#include "rayflow/config.hpp"
#include "rayflow/datasets.hpp"
#include "rayflow/error.hpp"
#include "rayflow/verify.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace rayflow;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

int cmd_verify(const std::string& config_path, const std::string& json_out, const std::string& mutation) {
    Config cfg = config_path.empty() ? Config{} : load_config(config_path);
    if (!mutation.empty()) cfg.mutation = mutation;
    const VerificationReport report = run_verification(cfg);
    std::cout << report.table();
    if (!json_out.empty()) write_text(json_out, report.to_json().dump(2) + "\n");
    return report.pass() ? 0 : 1;
}

int cmd_distill(DistillRunConfig cfg, const std::string& out_dir) {
    const DistillRun run = run_distill(cfg);
    write_run_dir(run, out_dir);
    std::cout << "final epoch loss " << format_sig9(run.result.log.epoch_loss.empty() ? 0.0 : run.result.log.epoch_loss.back())
              << "\n";
    write_metrics_csv(run.metrics, std::cout);
    return 0;
}

int cmd_sample(const std::string& ckpt, int K, int count, std::uint64_t seed, const std::string& out) {
    const fs::path run_json = fs::path(ckpt).parent_path() / "run.json";
    DistillRunConfig cfg;
    if (fs::exists(run_json)) {
        std::ifstream in(run_json);
        cfg = distill_run_config_from_json(nlohmann::json::parse(in).at("config"));
    } else {
        std::cerr << "note: no run.json beside the checkpoint, using default schedule and sigma\n";
    }
    const Net student = load_net(fs::path(ckpt));
    const Schedule sched = cfg.schedule();
    const Eigen::Index dim = student.output_dim();
    const auto xs = sample_many(make_net_denoiser(student, sched), sched, RayFlowParams{Vec::Zero(dim), cfg.train.sigma},
                                K, count, dim, Rng(seed));
    std::ostringstream os;
    for (Eigen::Index k = 0; k < dim; ++k) os << (k ? "," : "") << "x" << k;
    os << "\n";
    for (const auto& x : xs) {
        for (Eigen::Index k = 0; k < dim; ++k) os << (k ? "," : "") << format_sig9(x(k));
        os << "\n";
    }
    write_text(out, os.str());
    return 0;
}

int cmd_bench_time_sampler(int instances, std::uint64_t seed, const std::string& out, std::string summary_out) {
    const auto rows = bench_time_sampler(instances, seed);
    std::ostringstream os;
    write_time_sampler_csv(rows, os);
    write_text(out, os.str());
    if (summary_out.empty()) summary_out = fs::path(out).replace_extension(".json").string();
    const auto summary = time_sampler_summary(rows);
    write_text(summary_out, summary.dump(2) + "\n");
    std::cout << summary.dump(2) << "\n";
    return 0;
}

void bench_once(const BenchConfig& cfg, const fs::path& out) {
    const BenchResult res = run_benchmark(cfg, [](const std::string& msg) { std::cerr << msg << "\n"; });
    std::ostringstream os;
    write_metrics_csv(res.rows, os);
    write_text(out, os.str());
    std::ostringstream floors;
    write_metrics_csv(res.floors, floors);
    write_text(fs::path(out).replace_extension(".floor.csv"), floors.str());
}

// With a sigma sweep each value gets its own CSV: out_sigma<value>.csv.
int cmd_bench(BenchConfig cfg, const std::string& out, const std::vector<double>& sigmas) {
    if (sigmas.empty()) {
        bench_once(cfg, out);
        return 0;
    }
    const fs::path base(out);
    for (double s : sigmas) {
        cfg.base.train.sigma = s;
        fs::path path = base;
        path.replace_filename(base.stem().string() + "_sigma" + format_sig9(s) + base.extension().string());
        bench_once(cfg, path);
        std::cout << path.string() << "\n";
    }
    return 0;
}

int cmd_report(const std::string& runs, const std::string& out) {
    const auto report = collect_report(runs);
    write_text(out, report.dump(2) + "\n");
    std::cout << report.at("summary").dump(2) << "\n";
    return 0;
}

void add_run_options(CLI::App* sub, DistillRunConfig& cfg) {
    sub->add_option("--dataset", cfg.dataset, "gauss8, two_moons or ring")
        ->check(CLI::IsMember(dataset_names()))
        ->capture_default_str();
    sub->add_option("--T", cfg.T, "number of schedule timesteps")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--beta-min", cfg.beta_min)->capture_default_str();
    sub->add_option("--beta-max", cfg.beta_max)->capture_default_str();
    sub->add_option("--teacher-steps", cfg.teacher_steps, "solver steps used to build pairs")->capture_default_str();
    sub->add_option("--pairs", cfg.pairs)->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--samples", cfg.samples, "evaluation sample count (<= 512)")->capture_default_str();
    sub->add_option("--sigma", cfg.train.sigma)->check(CLI::NonNegativeNumber)->capture_default_str();
    sub->add_option("--epochs", cfg.train.epochs)->check(CLI::NonNegativeNumber)->capture_default_str();
    sub->add_option("--lr", cfg.train.lr)->capture_default_str();
    sub->add_option("--batch-size", cfg.train.batch_size)->check(CLI::PositiveNumber)->capture_default_str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"RayFlow desk-scale diffusion distillation"};
    app.require_subcommand(1);

    std::string config_path, json_out, mutation;
    auto* verify = app.add_subcommand("verify", "run the named invariant checks");
    verify->add_option("--config", config_path, "flat key = value config file")->check(CLI::ExistingFile);
    verify->add_option("--json", json_out, "write the JSON report here");
    verify->add_option("--mutation", mutation, "override verify.mutation")->check(CLI::IsMember({"none", "beta_tilde"}));

    DistillRunConfig run_cfg;
    std::string out_dir;
    bool no_ts = false;
    auto* distill = app.add_subcommand("distill", "build pairs from the teacher, train a student, score it");
    add_run_options(distill, run_cfg);
    distill->add_option("--steps", run_cfg.train.steps, "sampler steps K recorded with the run")->capture_default_str();
    distill->add_option("--seed", run_cfg.train.seed)->capture_default_str();
    distill->add_flag("--no-time-sampler", no_ts, "sample training timesteps uniformly");
    distill->add_option("--out", out_dir, "run directory")->required();

    std::string ckpt, csv_out;
    int k_steps = 4, count = 512;
    std::uint64_t seed = 0;
    auto* sample = app.add_subcommand("sample", "draw samples from a student checkpoint");
    sample->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
    sample->add_option("--k", k_steps)->check(CLI::PositiveNumber)->capture_default_str();
    sample->add_option("--count", count)->check(CLI::NonNegativeNumber)->capture_default_str();
    sample->add_option("--seed", seed)->capture_default_str();
    sample->add_option("--out", csv_out)->required();

    int instances = 100;
    std::string summary_out;
    auto* bts = app.add_subcommand("bench-time-sampler", "exact IS variance: uniform vs optimal proposal");
    bts->add_option("--instances", instances)->check(CLI::PositiveNumber)->capture_default_str();
    bts->add_option("--seed", seed)->capture_default_str();
    bts->add_option("--out", csv_out)->required();
    bts->add_option("--summary", summary_out, "JSON summary path (default: CSV path with .json)");

    BenchConfig bench_cfg;
    std::vector<std::string> datasets{"gauss8"};
    int n_seeds = 5;
    auto* bench = app.add_subcommand("bench", "teacher and student metrics over datasets, K and seeds");
    add_run_options(bench, bench_cfg.base);
    bench->add_option("--datasets", datasets)->check(CLI::IsMember(dataset_names()));
    bench->add_option("--seeds", n_seeds)->check(CLI::PositiveNumber)->capture_default_str();
    bench->add_option("--out", csv_out)->required();
    bench->add_option("--threads", bench_cfg.threads, "worker threads, 0 = all cores")->capture_default_str();
    std::vector<double> sigmas;
    bench->add_option("--sigmas", sigmas, "sweep the chain noise scale, one CSV per value")
        ->check(CLI::NonNegativeNumber);

    std::string runs_dir;
    auto* report = app.add_subcommand("report", "aggregate run directories into one JSON");
    report->add_option("--runs", runs_dir)->required()->check(CLI::ExistingDirectory);
    report->add_option("--out", json_out)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*verify) return cmd_verify(config_path, json_out, mutation);
        if (*distill) {
            run_cfg.train.time_sampler = !no_ts;
            return cmd_distill(run_cfg, out_dir);
        }
        if (*sample) return cmd_sample(ckpt, k_steps, count, seed, csv_out);
        if (*bts) return cmd_bench_time_sampler(instances, seed, csv_out, summary_out);
        if (*bench) {
            bench_cfg.datasets = datasets;
            bench_cfg.seeds.clear();
            for (int s = 0; s < n_seeds; ++s) bench_cfg.seeds.push_back(static_cast<std::uint64_t>(s));
            return cmd_bench(bench_cfg, csv_out, sigmas);
        }
        if (*report) return cmd_report(runs_dir, json_out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
