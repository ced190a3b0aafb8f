#include "rayflow/denoiser.hpp"

#include "rayflow/error.hpp"

#include <cmath>
#include <numbers>

namespace rayflow {
namespace {

double log_sum_exp(const Eigen::VectorXd& v) {
    const double m = v.maxCoeff();
    return m + std::log((v.array() - m).exp().sum());
}

} // namespace

FiniteDataset::FiniteDataset(std::vector<Vec> pts, std::vector<Vec> tgts)
    : points(std::move(pts)), targets(std::move(tgts)) {
    if (points.empty() || points.size() != targets.size())
        throw InvalidRange("dataset needs K >= 1 points with one target each");
    const auto d = points.front().size();
    for (std::size_t i = 0; i < points.size(); ++i)
        if (points[i].size() != d || targets[i].size() != d)
            throw DimensionMismatch("dataset vectors must share one dimension");
}

GaussianMixture::GaussianMixture(std::vector<Vec> m, std::vector<double> w, double var)
    : means(std::move(m)), weights(std::move(w)), component_var(var) {
    if (means.empty() || means.size() != weights.size())
        throw InvalidRange("mixture needs one weight per component");
    if (component_var < 0.0)
        throw InvalidRange("mixture component variance must be >= 0");
    double total = 0.0;
    for (double x : weights) {
        if (x < 0.0)
            throw InvalidRange("mixture weights must be nonnegative");
        total += x;
    }
    if (!(total > 0.0))
        throw InvalidRange("mixture weights sum to zero");
    for (double& x : weights)
        x /= total;
}

Eigen::VectorXd optimal_denoise_weights(const FiniteDataset& ds, const Schedule& sched, double sigma,
                                        const Vec& x_t, int t) {
    if (t < 1 || t > sched.T())
        throw InvalidRange("optimal_denoise: timestep outside [1, T]");
    const double ab = sched.alpha_bar(t);
    const double var = (1.0 - ab) * sigma * sigma;
    if (!(var > 0.0))
        throw DegenerateVariance("optimal_denoise: (1 - alpha_bar) sigma^2 is zero");
    if (x_t.size() != ds.dim())
        throw DimensionMismatch("optimal_denoise: query dimension");
    const double sab = std::sqrt(ab);
    const auto K = static_cast<Eigen::Index>(ds.size());
    Eigen::VectorXd logw(K);
    // Shared normalizing constants cancel in the softmax.
    for (Eigen::Index i = 0; i < K; ++i) {
        const Vec mean = sab * ds.points[i] + (1.0 - sab) * ds.targets[i];
        logw[i] = -(x_t - mean).squaredNorm() / (2.0 * var);
    }
    const double lse = log_sum_exp(logw);
    return (logw.array() - lse).exp().matrix();
}

Vec optimal_denoise(const FiniteDataset& ds, const Schedule& sched, double sigma, const Vec& x_t, int t) {
    const Eigen::VectorXd w = optimal_denoise_weights(ds, sched, sigma, x_t, t);
    Vec out = Vec::Zero(ds.dim());
    for (Eigen::Index i = 0; i < w.size(); ++i)
        out += w[i] * ds.targets[i];
    return out;
}

double optimal_denoise_loss(const FiniteDataset& ds, const Schedule& sched, double sigma, const Vec& x_t,
                            int t, const Vec& prediction) {
    const Eigen::VectorXd w = optimal_denoise_weights(ds, sched, sigma, x_t, t);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i)
        loss += w[i] * (prediction - ds.targets[i]).squaredNorm();
    return loss;
}

double optimal_denoise_loss_stationarity(const FiniteDataset& ds, const Schedule& sched, double sigma,
                                         const Vec& x_t, int t) {
    const Eigen::VectorXd w = optimal_denoise_weights(ds, sched, sigma, x_t, t);
    const Vec e = optimal_denoise(ds, sched, sigma, x_t, t);
    // Gradient of sum_i w_i |e - eps_i|^2, accumulated term by term.
    Vec grad = Vec::Zero(ds.dim());
    for (Eigen::Index i = 0; i < w.size(); ++i)
        grad += 2.0 * w[i] * (e - ds.targets[i]);
    return grad.norm() / w.sum();
}

Vec gmm_teacher_denoise(const GaussianMixture& mixture, const Schedule& sched, const Vec& x_t, int t) {
    if (t < 1 || t > sched.T())
        throw InvalidRange("gmm_teacher_denoise: timestep outside [1, T]");
    if (x_t.size() != mixture.dim())
        throw DimensionMismatch("gmm_teacher_denoise: query dimension");
    const double ab = sched.alpha_bar(t);
    const double sab = std::sqrt(ab);
    const double v = ab * mixture.component_var + (1.0 - ab);
    const auto K = static_cast<Eigen::Index>(mixture.means.size());
    Eigen::VectorXd logr(K);
    for (Eigen::Index k = 0; k < K; ++k)
        logr[k] = std::log(mixture.weights[k]) - (x_t - sab * mixture.means[k]).squaredNorm() / (2.0 * v);
    const double lse = log_sum_exp(logr);
    Vec score = Vec::Zero(x_t.size());
    for (Eigen::Index k = 0; k < K; ++k)
        score -= std::exp(logr[k] - lse) * (x_t - sab * mixture.means[k]) / v;
    return -std::sqrt(1.0 - ab) * score;
}

double gmm_log_marginal(const GaussianMixture& mixture, const Schedule& sched, const Vec& x, int t) {
    const double ab = sched.alpha_bar(t);
    const double sab = std::sqrt(ab);
    const double v = ab * mixture.component_var + (1.0 - ab);
    const double d = static_cast<double>(x.size());
    const auto K = static_cast<Eigen::Index>(mixture.means.size());
    Eigen::VectorXd terms(K);
    for (Eigen::Index k = 0; k < K; ++k)
        terms[k] = std::log(mixture.weights[k]) - 0.5 * d * std::log(2.0 * std::numbers::pi * v) -
                   (x - sab * mixture.means[k]).squaredNorm() / (2.0 * v);
    return log_sum_exp(terms);
}

Denoiser make_gmm_teacher(GaussianMixture mixture, Schedule sched) {
    return [mixture = std::move(mixture), sched = std::move(sched)](const Vec& x, int t) {
        return gmm_teacher_denoise(mixture, sched, x, t);
    };
}

Denoiser make_oracle_denoiser(FiniteDataset ds, Schedule sched, double sigma) {
    return [ds = std::move(ds), sched = std::move(sched), sigma](const Vec& x, int t) {
        return optimal_denoise(ds, sched, sigma, x, t);
    };
}

} // namespace rayflow
