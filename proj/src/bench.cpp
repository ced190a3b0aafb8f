#include "rayflow/bench.hpp"

#include "rayflow/datasets.hpp"
#include "rayflow/error.hpp"
#include "rayflow/metrics.hpp"
#include "rayflow/time_sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

namespace rayflow {

namespace {

constexpr int kSchemaVersion = 1;

std::vector<Vec> teacher_cloud(const std::string& dataset, const Schedule& sched, int n, std::uint64_t seed,
                               std::uint64_t stream) {
    const Denoiser teacher = make_gmm_teacher(teacher_mixture(dataset), sched);
    const auto pairs = construct_pairs(teacher, sched, n, sched.T(), 2, Rng(seed).split(stream));
    std::vector<Vec> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(p.x0_hat);
    return out;
}

MetricRow score(const std::string& dataset, int K, std::string ts, std::uint64_t seed, const std::vector<Vec>& xs,
                const std::vector<Vec>& ref) {
    return MetricRow{dataset, K, std::move(ts), seed, wasserstein2(xs, ref), mmd(xs, ref), static_cast<int>(xs.size())};
}

nlohmann::json to_json(const MetricRow& r) {
    return {{"dataset", r.dataset}, {"K", r.K},     {"time_sampler", r.time_sampler}, {"seed", r.seed},
            {"w2", r.w2},           {"mmd", r.mmd}, {"n", r.n}};
}

} // namespace

std::string format_sig9(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", x);
    return buf;
}

nlohmann::json to_json(const DistillRunConfig& c) {
    const TrainConfig& t = c.train;
    return {{"dataset", c.dataset},
            {"T", c.T},
            {"beta_min", c.beta_min},
            {"beta_max", c.beta_max},
            {"teacher_steps", c.teacher_steps},
            {"pairs", c.pairs},
            {"samples", c.samples},
            {"eval_steps", c.eval_steps},
            {"epochs", t.epochs},
            {"steps", t.steps},
            {"sigma", t.sigma},
            {"lr", t.lr},
            {"batch_size", t.batch_size},
            {"seed", t.seed},
            {"time_sampler", t.time_sampler},
            {"hidden", t.hidden},
            {"sampler_hidden", t.sampler_hidden},
            {"ts_particles", t.ts_particles},
            {"ts_bandwidth", t.ts_bandwidth},
            {"ts_step", t.ts_step}};
}

DistillRunConfig distill_run_config_from_json(const nlohmann::json& j) {
    DistillRunConfig c;
    c.dataset = j.at("dataset").get<std::string>();
    c.T = j.at("T").get<int>();
    c.beta_min = j.at("beta_min").get<double>();
    c.beta_max = j.at("beta_max").get<double>();
    c.teacher_steps = j.at("teacher_steps").get<int>();
    c.pairs = j.at("pairs").get<int>();
    c.samples = j.at("samples").get<int>();
    c.eval_steps = j.at("eval_steps").get<std::vector<int>>();
    TrainConfig& t = c.train;
    t.epochs = j.at("epochs").get<int>();
    t.steps = j.at("steps").get<int>();
    t.sigma = j.at("sigma").get<double>();
    t.lr = j.at("lr").get<double>();
    t.batch_size = j.at("batch_size").get<int>();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.time_sampler = j.at("time_sampler").get<bool>();
    t.hidden = j.at("hidden").get<std::vector<int>>();
    t.sampler_hidden = j.at("sampler_hidden").get<std::vector<int>>();
    t.ts_particles = j.at("ts_particles").get<int>();
    t.ts_bandwidth = j.at("ts_bandwidth").get<double>();
    t.ts_step = j.at("ts_step").get<double>();
    return c;
}

std::vector<Vec> reference_sample(const std::string& dataset, int n, std::uint64_t seed) {
    return gen_dataset(dataset, n, splitmix64(seed ^ 0x5eedULL)).points;
}

std::vector<Vec> teacher_sample(const std::string& dataset, const Schedule& sched, int n, std::uint64_t seed) {
    return teacher_cloud(dataset, sched, n, seed, 7);
}

double teacher_floor(const std::string& dataset, const Schedule& sched, int n, std::uint64_t seed) {
    return wasserstein2(teacher_cloud(dataset, sched, n, seed, 7), teacher_cloud(dataset, sched, n, seed, 8));
}

DistillRun run_distill(const DistillRunConfig& cfg) {
    if (cfg.samples < 2 || static_cast<std::size_t>(cfg.samples) > kMaxAssignmentSize)
        throw InvalidRange("evaluation sample count must be in [2, 512]");
    const Schedule sched = cfg.schedule();
    const std::uint64_t seed = cfg.train.seed;
    const Rng root(seed);
    const Denoiser teacher = make_gmm_teacher(teacher_mixture(cfg.dataset), sched);
    const auto pairs = construct_pairs(teacher, sched, cfg.pairs, cfg.teacher_steps, 2, root.split(1));

    Rng init = root.split(2);
    Net student = make_student(2, cfg.train.hidden, init);
    Net sampler = make_time_sampler_net(2, cfg.train.sampler_hidden, init);
    Rng train_rng = root.split(3);

    DistillRun run{cfg, train(std::move(student), std::move(sampler), pairs, sched, cfg.train, train_rng), {}};
    const Denoiser den = make_net_denoiser(run.result.student, sched);
    const auto ref = reference_sample(cfg.dataset, cfg.samples, seed);
    const RayFlowParams params{Vec::Zero(2), cfg.train.sigma};
    const std::string ts = cfg.train.time_sampler ? "on" : "off";
    for (int K : cfg.eval_steps) {
        const auto xs = sample_many(den, sched, params, K, cfg.samples, 2, root.split(4));
        run.metrics.push_back(score(cfg.dataset, K, ts, seed, xs, ref));
    }
    return run;
}

void write_run_dir(const DistillRun& run, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    save_net(run.result.student, dir / "student.ckpt");
    save_net(run.result.sampler, dir / "sampler.ckpt");
    nlohmann::json metrics = nlohmann::json::array();
    for (const auto& m : run.metrics) metrics.push_back(to_json(m));
    const nlohmann::json run_j{{"schema_version", kSchemaVersion}, {"config", to_json(run.config)}, {"metrics", metrics}};
    nlohmann::json log_j = to_json(run.result.log);
    log_j["schema_version"] = kSchemaVersion;
    for (const auto& [name, j] : {std::pair{"run.json", run_j}, std::pair{"train_log.json", log_j}}) {
        std::ofstream out(dir / name);
        if (!out) throw IoError("cannot write " + (dir / name).string());
        out << j.dump(2) << "\n";
    }
}

namespace {

// Runs jobs[i] for every i on up to `threads` workers. Results land by index,
// so the output does not depend on scheduling.
void run_parallel(std::size_t count, int threads, const std::function<void(std::size_t)>& job) {
    const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(threads, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    job(i);
                } catch (...) {
                    const std::lock_guard lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace

BenchResult run_benchmark(const BenchConfig& cfg, const Progress& progress) {
    const Schedule sched = cfg.base.schedule();
    std::vector<bool> flags;
    if (cfg.without_time_sampler) flags.push_back(false);
    if (cfg.with_time_sampler) flags.push_back(true);

    struct Cell {
        std::string dataset;
        std::uint64_t seed;
        int flag; // -1 teacher, else index into flags
    };
    std::vector<Cell> cells;
    for (const auto& dataset : cfg.datasets)
        for (std::uint64_t seed : cfg.seeds) {
            cells.push_back({dataset, seed, -1});
            for (std::size_t f = 0; f < flags.size(); ++f) cells.push_back({dataset, seed, static_cast<int>(f)});
        }

    std::vector<std::vector<MetricRow>> rows(cells.size());
    std::vector<MetricRow> floors(cells.size());
    std::mutex progress_mutex;
    const auto report = [&](const std::string& msg) {
        if (!progress) return;
        const std::lock_guard lock(progress_mutex);
        progress(msg);
    };
    const unsigned hw = std::thread::hardware_concurrency();
    const int threads = cfg.threads > 0 ? cfg.threads : static_cast<int>(hw ? hw : 1);
    run_parallel(cells.size(), threads, [&](std::size_t i) {
        const Cell& c = cells[i];
        const std::string tag = c.dataset + " seed " + std::to_string(c.seed);
        if (c.flag < 0) {
            const auto ref = reference_sample(c.dataset, cfg.base.samples, c.seed);
            const auto tsamp = teacher_sample(c.dataset, sched, cfg.base.samples, c.seed);
            rows[i].push_back(score(c.dataset, sched.T(), "teacher", c.seed, tsamp, ref));
            floors[i] = score(c.dataset, sched.T(), "teacher", c.seed, tsamp,
                              teacher_cloud(c.dataset, sched, cfg.base.samples, c.seed, 8));
            report(tag + ": teacher floor " + format_sig9(floors[i].w2));
            return;
        }
        DistillRunConfig rc = cfg.base;
        rc.dataset = c.dataset;
        rc.train.seed = c.seed;
        rc.train.time_sampler = flags[static_cast<std::size_t>(c.flag)];
        rows[i] = run_distill(rc).metrics;
        for (const auto& m : rows[i])
            report(tag + " ts " + m.time_sampler + " K " + std::to_string(m.K) + ": w2 " + format_sig9(m.w2));
    });

    BenchResult out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        out.rows.insert(out.rows.end(), rows[i].begin(), rows[i].end());
        if (cells[i].flag < 0) out.floors.push_back(floors[i]);
    }
    return out;
}

void write_metrics_csv(const std::vector<MetricRow>& rows, std::ostream& os) {
    os << "dataset,K,time_sampler,seed,w2,mmd\n";
    for (const auto& r : rows)
        os << r.dataset << ',' << r.K << ',' << r.time_sampler << ',' << r.seed << ',' << format_sig9(r.w2) << ','
           << format_sig9(r.mmd) << '\n';
}

std::vector<TimeSamplerBenchRow> bench_time_sampler(int instances, std::uint64_t seed) {
    if (instances < 1) throw InvalidRange("instance count must be positive");
    const int T = 32;
    const Schedule sched = make_linear_schedule(T, 0.01, 0.3);
    const std::vector<double> uniform(static_cast<std::size_t>(T), 1.0 / T);
    const Rng root(seed);
    std::vector<TimeSamplerBenchRow> rows;
    for (int i = 0; i < instances; ++i) {
        Rng rng = root.split(static_cast<std::uint64_t>(i));
        const Denoiser den = make_net_denoiser(make_student(2, {16, 16}, rng), sched);
        const Vec x0 = rng.normal_vec(2), eps_mu = rng.normal_vec(2);
        const auto xi_v = xi_profile(den, sched, x0, eps_mu);
        const double v_uniform = is_exact_variance(xi_v, uniform, uniform);
        double v_star = 0.0;
        try {
            v_star = is_exact_variance(xi_v, optimal_q(xi_v, uniform), uniform);
        } catch (const DegenerateTarget&) {
            v_star = v_uniform;
        }
        // Rounding can leave a tiny negative variance under q*.
        v_star = std::max(v_star, 0.0);
        const double ratio = v_uniform > 0.0 ? v_star / v_uniform : 1.0;
        rows.push_back({i, v_uniform, v_star, ratio});
    }
    return rows;
}

void write_time_sampler_csv(const std::vector<TimeSamplerBenchRow>& rows, std::ostream& os) {
    os << "instance_id,var_uniform,var_qstar,ratio\n";
    for (const auto& r : rows)
        os << r.instance_id << ',' << format_sig9(r.var_uniform) << ',' << format_sig9(r.var_qstar) << ','
           << format_sig9(r.ratio) << '\n';
}

nlohmann::json time_sampler_summary(const std::vector<TimeSamplerBenchRow>& rows) {
    const auto ok = std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r.ratio <= 1.0; });
    double worst = 0.0;
    for (const auto& r : rows) worst = std::max(worst, r.ratio);
    return {{"schema_version", kSchemaVersion},
            {"instances", rows.size()},
            {"fraction_ratio_le_1", rows.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(rows.size())},
            {"max_ratio", worst}};
}

nlohmann::json collect_report(const std::filesystem::path& root) {
    if (!std::filesystem::is_directory(root)) throw IoError("runs directory not found: " + root.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(root))
        if (e.is_regular_file() && e.path().filename() == "run.json") files.push_back(e.path());
    std::sort(files.begin(), files.end());

    nlohmann::json runs = nlohmann::json::array();
    struct Acc {
        double sum = 0.0, lo = 1e300, hi = -1e300;
        int n = 0;
    };
    std::map<std::tuple<std::string, int, std::string>, Acc> groups;
    for (const auto& f : files) {
        std::ifstream in(f);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw IoError("cannot parse " + f.string() + ": " + e.what());
        }
        j["path"] = std::filesystem::relative(f.parent_path(), root).generic_string();
        for (const auto& m : j.at("metrics")) {
            Acc& a = groups[{m.at("dataset").get<std::string>(), m.at("K").get<int>(),
                             m.at("time_sampler").get<std::string>()}];
            const double w = m.at("w2").get<double>();
            a.sum += w;
            a.lo = std::min(a.lo, w);
            a.hi = std::max(a.hi, w);
            ++a.n;
        }
        runs.push_back(std::move(j));
    }
    nlohmann::json summary = nlohmann::json::array();
    for (const auto& [key, a] : groups) {
        const auto& [dataset, K, ts] = key;
        summary.push_back({{"dataset", dataset},
                           {"K", K},
                           {"time_sampler", ts},
                           {"runs", a.n},
                           {"w2_mean", a.sum / a.n},
                           {"w2_min", a.lo},
                           {"w2_max", a.hi}});
    }
    return {{"schema_version", kSchemaVersion}, {"runs", runs}, {"summary", summary}};
}

} // namespace rayflow
