#pragma once

#include "rayflow/config.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace rayflow {

struct CheckResult {
    std::string name;
    std::string module;
    /// Short statement of the property being checked.
    std::string property;
    double measured = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    double seconds = 0.0;
    std::string detail;
};

struct VerificationReport {
    static constexpr int kSchemaVersion = 1;
    std::vector<CheckResult> checks;
    Config config;

    bool pass() const;
    nlohmann::json to_json() const;
    static VerificationReport from_json(const nlohmann::json& j);
    /// Fixed-width human-readable table, one row per check.
    std::string table() const;
};

/// Names of every check in suite order.
const std::vector<std::string>& verification_check_names();

/// Runs the whole suite. A throwing check is recorded as failed with the
/// exception text; the remaining checks still run.
VerificationReport run_verification(const Config& cfg);

/// Schedule as seen by the suite: cfg.schedule() or, under the beta_tilde
/// mutation, a copy whose backward variances drop the (1 - ab_{t-1}) / (1 - ab_t)
/// factor.
Schedule apply_mutation(const Config& cfg, const Schedule& sched);

/// Central-difference gradient check of a network with loss <r, net(x)> over a
/// random batch. Returns the max elementwise relative error
/// |a - n| / max(|a|, |n|, floor).
double net_gradient_check(const std::vector<int>& dims, std::uint64_t seed, double floor = 1e-5);

} // namespace rayflow
