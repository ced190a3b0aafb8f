#pragma once

#include <Eigen/Dense>

#include <string_view>
#include <vector>

namespace rayflow {

using Vec = Eigen::VectorXd;

/// Per-timestep coefficients of a T-step Gaussian chain.
///
/// Timesteps are 1-based. The cumulative signal coefficient follows the
/// squared-product convention alpha_bar(t) = prod_{s<=t} alpha(s)^2, with
/// alpha_bar(0) = 1 so that the first reverse transition is deterministic
/// (beta_tilde(1) = 0).
///
/// Immutable after construction.
class Schedule {
public:
    /// Builds a schedule from per-step alphas in (0,1). beta is derived as
    /// sqrt(1 - alpha^2).
    static Schedule from_alphas(std::vector<double> alphas);

    int T() const { return static_cast<int>(alpha_.size()); }

    double alpha(int t) const;
    double beta(int t) const;
    /// Valid for t in [0, T]; alpha_bar(0) == 1.
    double alpha_bar(int t) const;
    double sqrt_alpha_bar(int t) const;
    double beta_tilde(int t) const;

    /// sqrt(alpha_bar) linearly interpolated at a continuous timestep in [0, T].
    double sqrt_alpha_bar_at(double t) const;

    const std::vector<double>& alphas() const { return alpha_; }
    const std::vector<double>& betas() const { return beta_; }
    const std::vector<double>& alpha_bars() const { return alpha_bar_; }
    const std::vector<double>& beta_tildes() const { return beta_tilde_; }

    /// Replaces the backward-variance coefficients. Only used to build
    /// deliberately corrupted schedules for mutation testing.
    Schedule with_beta_tilde(std::vector<double> beta_tilde) const;

private:
    Schedule() = default;
    void check_t(int t, int lo) const;

    std::vector<double> alpha_;
    std::vector<double> beta_;
    std::vector<double> beta_sq_;
    std::vector<double> alpha_bar_;
    std::vector<double> beta_tilde_;
};

/// beta_t^2 interpolated linearly from beta_min^2 to beta_max^2.
/// Requires 0 < beta_min <= beta_max < 1 and T >= 1.
Schedule make_linear_schedule(int T, double beta_min, double beta_max);

enum class TrajectoryKind { RayFlow, VP, RF };

std::string_view to_string(TrajectoryKind kind);
TrajectoryKind trajectory_kind_from_string(std::string_view name);

/// Point on a forward trajectory at timestep t in [0, T].
///
///   RayFlow: sqrt(ab) x0 + (1 - sqrt(ab)) eps_mu + sqrt(1 - ab) eps
///   VP:      sqrt(ab) x0 + sqrt(1 - ab) eps
///   RF:      (1 - t/T) x0 + (t/T) eps
///
/// eps_mu is ignored for VP and RF.
Vec trajectory_point(TrajectoryKind kind, const Schedule& sched, const Vec& x0, const Vec& eps,
                     const Vec& eps_mu, int t);

} // namespace rayflow
