#include "rayflow/schedule.hpp"

#include "rayflow/error.hpp"

#include <cmath>
#include <string>

namespace rayflow {

Schedule Schedule::from_alphas(std::vector<double> alphas) {
    if (alphas.empty())
        throw InvalidRange("schedule needs at least one step");
    Schedule s;
    const std::size_t T = alphas.size();
    s.alpha_ = std::move(alphas);
    s.beta_.resize(T);
    s.beta_sq_.resize(T);
    s.alpha_bar_.resize(T);
    s.beta_tilde_.resize(T);
    double ab = 1.0;
    for (std::size_t i = 0; i < T; ++i) {
        const double a = s.alpha_[i];
        if (!(a > 0.0 && a < 1.0))
            throw InvalidRange("alpha must lie in (0,1), got " + std::to_string(a));
        const double b2 = 1.0 - a * a;
        s.beta_sq_[i] = b2;
        s.beta_[i] = std::sqrt(b2);
        const double prev = ab;
        ab *= a * a;
        s.alpha_bar_[i] = ab;
        s.beta_tilde_[i] = b2 * (1.0 - prev) / (1.0 - ab);
    }
    return s;
}

Schedule Schedule::with_beta_tilde(std::vector<double> beta_tilde) const {
    if (beta_tilde.size() != beta_tilde_.size())
        throw DimensionMismatch("beta_tilde length must equal T");
    Schedule s = *this;
    s.beta_tilde_ = std::move(beta_tilde);
    return s;
}

void Schedule::check_t(int t, int lo) const {
    if (t < lo || t > T())
        throw InvalidRange("timestep " + std::to_string(t) + " outside [" + std::to_string(lo) +
                           ", " + std::to_string(T()) + "]");
}

double Schedule::alpha(int t) const {
    check_t(t, 1);
    return alpha_[t - 1];
}

double Schedule::beta(int t) const {
    check_t(t, 1);
    return beta_[t - 1];
}

double Schedule::alpha_bar(int t) const {
    check_t(t, 0);
    return t == 0 ? 1.0 : alpha_bar_[t - 1];
}

double Schedule::sqrt_alpha_bar(int t) const { return std::sqrt(alpha_bar(t)); }

double Schedule::beta_tilde(int t) const {
    check_t(t, 1);
    return beta_tilde_[t - 1];
}

double Schedule::sqrt_alpha_bar_at(double t) const {
    if (!(t >= 0.0 && t <= T()))
        throw InvalidRange("continuous timestep outside [0, T]");
    const int lo = static_cast<int>(std::floor(t));
    if (lo >= T())
        return sqrt_alpha_bar(T());
    const double w = t - lo;
    return (1.0 - w) * sqrt_alpha_bar(lo) + w * sqrt_alpha_bar(lo + 1);
}

Schedule make_linear_schedule(int T, double beta_min, double beta_max) {
    if (T < 1)
        throw InvalidRange("T must be >= 1");
    if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0))
        throw InvalidRange("require 0 < beta_min <= beta_max < 1");
    const double lo = beta_min * beta_min;
    const double hi = beta_max * beta_max;
    std::vector<double> alphas(static_cast<std::size_t>(T));
    for (int t = 1; t <= T; ++t) {
        const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
        const double b2 = lo + frac * (hi - lo);
        alphas[t - 1] = std::sqrt(1.0 - b2);
    }
    return Schedule::from_alphas(std::move(alphas));
}

std::string_view to_string(TrajectoryKind kind) {
    switch (kind) {
    case TrajectoryKind::RayFlow: return "rayflow";
    case TrajectoryKind::VP: return "vp";
    case TrajectoryKind::RF: return "rf";
    }
    return "unknown";
}

TrajectoryKind trajectory_kind_from_string(std::string_view name) {
    if (name == "rayflow") return TrajectoryKind::RayFlow;
    if (name == "vp") return TrajectoryKind::VP;
    if (name == "rf") return TrajectoryKind::RF;
    throw InvalidRange("unknown trajectory kind: " + std::string(name));
}

Vec trajectory_point(TrajectoryKind kind, const Schedule& sched, const Vec& x0, const Vec& eps,
                     const Vec& eps_mu, int t) {
    if (x0.size() != eps.size() || (kind == TrajectoryKind::RayFlow && eps_mu.size() != x0.size()))
        throw DimensionMismatch("trajectory_point: vectors must share a dimension");
    const double ab = sched.alpha_bar(t);
    const double sab = std::sqrt(ab);
    switch (kind) {
    case TrajectoryKind::RayFlow:
        return sab * x0 + (1.0 - sab) * eps_mu + std::sqrt(1.0 - ab) * eps;
    case TrajectoryKind::VP:
        return sab * x0 + std::sqrt(1.0 - ab) * eps;
    case TrajectoryKind::RF: {
        const double u = static_cast<double>(t) / sched.T();
        return (1.0 - u) * x0 + u * eps;
    }
    }
    return x0;
}

} // namespace rayflow
