#include "rayflow/bench.hpp"
#include "rayflow/chain.hpp"
#include "rayflow/config.hpp"
#include "rayflow/datasets.hpp"
#include "rayflow/denoiser.hpp"
#include "rayflow/distill.hpp"
#include "rayflow/error.hpp"
#include "rayflow/metrics.hpp"
#include "rayflow/net.hpp"
#include "rayflow/time_sampler.hpp"
#include "rayflow/verify.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace rayflow;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<Vec> rows_of(const Eigen::Ref<const RowMat>& m) {
    std::vector<Vec> out;
    out.reserve(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) out.emplace_back(m.row(i).transpose());
    return out;
}

RowMat to_rows(const std::vector<Vec>& xs) {
    RowMat m(static_cast<Eigen::Index>(xs.size()), xs.empty() ? 0 : xs.front().size());
    for (std::size_t i = 0; i < xs.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = xs[i].transpose();
    return m;
}

// JSON crosses the boundary as text; the Python side parses it with json.loads.
nlohmann::json parse(const std::string& text) { return text.empty() ? nlohmann::json::object() : nlohmann::json::parse(text); }

DistillRunConfig run_config(const std::string& json_text) {
    DistillRunConfig base;
    nlohmann::json merged = to_json(base);
    const nlohmann::json patch = parse(json_text);
    if (!patch.is_object()) throw ConfigError("run config must be a JSON object");
    for (const auto& [key, value] : patch.items())
        if (!merged.contains(key)) throw ConfigError("unknown run config key '" + key + "'");
    merged.merge_patch(patch);
    return distill_run_config_from_json(merged);
}

} // namespace

PYBIND11_MODULE(_rayflow, m) {
    m.doc() = "RayFlow diffusion core";

    py::register_exception<Error>(m, "RayFlowError");
    py::register_exception<InvalidRange>(m, "InvalidRange", PyExc_ValueError);
    py::register_exception<DimensionMismatch>(m, "DimensionMismatch", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    py::class_<Rng>(m, "Rng")
        .def(py::init<std::uint64_t>(), py::arg("seed") = 0)
        .def("split", &Rng::split)
        .def("normal", [](Rng& r, Eigen::Index d) { return r.normal_vec(d); })
        .def_property_readonly("seed", &Rng::seed);

    py::class_<Schedule>(m, "Schedule")
        .def_static("linear", &make_linear_schedule, py::arg("T"), py::arg("beta_min"), py::arg("beta_max"))
        .def_static("from_alphas", &Schedule::from_alphas)
        .def_property_readonly("T", &Schedule::T)
        .def("alpha", &Schedule::alpha)
        .def("beta", &Schedule::beta)
        .def("alpha_bar", &Schedule::alpha_bar)
        .def("sqrt_alpha_bar", &Schedule::sqrt_alpha_bar)
        .def("beta_tilde", &Schedule::beta_tilde)
        .def_property_readonly("alphas", &Schedule::alphas)
        .def_property_readonly("alpha_bars", &Schedule::alpha_bars)
        .def_property_readonly("beta_tildes", &Schedule::beta_tildes);

    py::class_<IsoGaussian>(m, "IsoGaussian")
        .def(py::init([](Vec mean, double var) { return IsoGaussian{std::move(mean), var}; }))
        .def_readonly("mean", &IsoGaussian::mean)
        .def_readonly("var", &IsoGaussian::var)
        .def("__repr__", [](const IsoGaussian& g) {
            std::ostringstream os;
            os << "IsoGaussian(dim=" << g.dim() << ", var=" << g.var << ")";
            return os.str();
        });

    py::class_<RayFlowParams>(m, "RayFlowParams")
        .def(py::init([](Vec eps_mu, double sigma) { return RayFlowParams{std::move(eps_mu), sigma}; }),
             py::arg("eps_mu"), py::arg("sigma"))
        .def_readwrite("eps_mu", &RayFlowParams::eps_mu)
        .def_readwrite("sigma", &RayFlowParams::sigma);

    py::class_<OptimalParams>(m, "OptimalParams")
        .def_readonly("eps_mu_star", &OptimalParams::eps_mu_star)
        .def_readonly("eps_hat_mu_star", &OptimalParams::eps_hat_mu_star)
        .def_readonly("sigma_star", &OptimalParams::sigma_star)
        .def_property_readonly("forward_noise_means",
                               [](const OptimalParams& o) { return to_rows(o.forward_noise_means); });

    m.def("forward_step", &forward_step, py::arg("sched"), py::arg("params"), py::arg("x_prev"), py::arg("t"));
    m.def("forward_marginal", &forward_marginal, py::arg("sched"), py::arg("params"), py::arg("x0"), py::arg("t"));
    m.def("backward_step", &backward_step, py::arg("sched"), py::arg("params"), py::arg("x_t"), py::arg("t"));
    m.def(
        "backward_marginal",
        [](const Schedule& s, const RayFlowParams& p, const Vec& eps_hat, int t) {
            return backward_marginal_recursive(s, p, eps_hat, t, forward_noise_means(s, p.eps_mu)).dist;
        },
        py::arg("sched"), py::arg("params"), py::arg("eps_hat"), py::arg("t"));
    m.def(
        "optimal_params",
        [](const Schedule& s, const Vec& x0, const Eigen::Ref<const RowMat>& noise_means, double sigma_star) {
            return optimal_params(s, x0, rows_of(noise_means), sigma_star);
        },
        py::arg("sched"), py::arg("x0_hat"), py::arg("noise_mean_per_t"), py::arg("sigma_star") = 1e-4);
    m.def("sample", [](const IsoGaussian& g, Rng& rng) { return sample(g, rng); });

    m.def(
        "optimal_denoise",
        [](const Eigen::Ref<const RowMat>& points, const Eigen::Ref<const RowMat>& targets, const Schedule& s,
           double sigma, const Vec& x_t, int t) {
            return optimal_denoise(FiniteDataset(rows_of(points), rows_of(targets)), s, sigma, x_t, t);
        },
        py::arg("points"), py::arg("targets"), py::arg("sched"), py::arg("sigma"), py::arg("x_t"), py::arg("t"));
    m.def(
        "gmm_teacher_denoise",
        [](const Eigen::Ref<const RowMat>& means, std::vector<double> weights, double var, const Schedule& s,
           const Vec& x_t, int t) {
            return gmm_teacher_denoise(GaussianMixture(rows_of(means), std::move(weights), var), s, x_t, t);
        },
        py::arg("means"), py::arg("weights"), py::arg("component_var"), py::arg("sched"), py::arg("x_t"), py::arg("t"));

    m.def("optimal_q", &optimal_q, py::arg("xi"), py::arg("base_p"));
    m.def("is_exact_mean", &is_exact_mean, py::arg("xi"), py::arg("base_p"));
    m.def("is_exact_variance", &is_exact_variance, py::arg("xi"), py::arg("q"), py::arg("base_p"));

    py::class_<Net>(m, "Net")
        .def_static("load", py::overload_cast<const std::filesystem::path&>(&load_net))
        .def("save", [](const Net& n, const std::filesystem::path& p) { save_net(n, p); })
        .def_property_readonly("dims", &Net::dims)
        .def_property_readonly("num_parameters", &Net::num_parameters)
        .def("__call__", [](const Net& n, const Vec& x) { return forward(n, x); });

    m.def(
        "gen_dataset",
        [](const std::string& name, int n, std::uint64_t seed) { return to_rows(gen_dataset(name, n, seed).points); },
        py::arg("name"), py::arg("n"), py::arg("seed"));
    m.def("dataset_names", &dataset_names);
    m.def(
        "wasserstein2",
        [](const Eigen::Ref<const RowMat>& a, const Eigen::Ref<const RowMat>& b) {
            return wasserstein2(rows_of(a), rows_of(b));
        },
        py::arg("a"), py::arg("b"));
    m.def(
        "mmd", [](const Eigen::Ref<const RowMat>& a, const Eigen::Ref<const RowMat>& b) { return mmd(rows_of(a), rows_of(b)); },
        py::arg("a"), py::arg("b"));

    m.def(
        "_verify",
        [](const std::string& config_text) {
            std::istringstream in(config_text);
            const VerificationReport r = run_verification(parse_config(in));
            return r.to_json().dump();
        },
        py::arg("config_text") = "", py::call_guard<py::gil_scoped_release>());

    m.def(
        "_distill",
        [](const std::string& cfg_json, const std::string& out_dir) {
            const DistillRun run = run_distill(run_config(cfg_json));
            if (!out_dir.empty()) write_run_dir(run, out_dir);
            nlohmann::json metrics = nlohmann::json::array();
            for (const auto& r : run.metrics)
                metrics.push_back({{"dataset", r.dataset}, {"K", r.K}, {"time_sampler", r.time_sampler},
                                   {"seed", r.seed}, {"w2", r.w2}, {"mmd", r.mmd}});
            return nlohmann::json{{"config", to_json(run.config)},
                                  {"metrics", metrics},
                                  {"log", to_json(run.result.log)}}
                .dump();
        },
        py::arg("config_json") = "", py::arg("out_dir") = "", py::call_guard<py::gil_scoped_release>());

    m.def(
        "sample_student",
        [](const Net& student, const Schedule& s, double sigma, int K, int count, std::uint64_t seed) {
            const Eigen::Index dim = student.output_dim();
            return to_rows(sample_many(make_net_denoiser(student, s), s, RayFlowParams{Vec::Zero(dim), sigma}, K,
                                       count, dim, Rng(seed)));
        },
        py::arg("student"), py::arg("sched"), py::arg("sigma"), py::arg("K"), py::arg("count"), py::arg("seed"));
}
