#pragma once

#include "rayflow/schedule.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace rayflow {

/// Flat `key = value` configuration. Lines starting with '#' are comments.
/// Unknown keys, duplicate keys and malformed values throw ConfigError.
struct Config {
    int T = 100;           // schedule.T
    double beta_min = 0.01; // schedule.beta_min
    double beta_max = 0.3;  // schedule.beta_max
    double sigma = 0.3;     // chain.sigma
    double sigma_star = 1e-4; // chain.sigma_star
    std::uint64_t seed = 0; // seed
    /// verify.mutation: "none" or "beta_tilde" (corrupts the backward variance
    /// coefficients to prove the suite notices).
    std::string mutation = "none";

    Schedule schedule() const;
};

const std::vector<std::string>& config_keys();

Config parse_config(std::istream& is);
Config load_config(const std::filesystem::path& path);
std::string to_config_text(const Config& cfg);

} // namespace rayflow
