#include "rayflow/config.hpp"

#include "rayflow/error.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace rayflow {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class N>
N parse_number(const std::string& key, const std::string& value) {
    N out{};
    const char* first = value.data();
    const char* last = first + value.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc{} || ptr != last)
        throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
    return out;
}

} // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys{"schedule.T",  "schedule.beta_min", "schedule.beta_max",
                                               "chain.sigma", "chain.sigma_star",  "seed",
                                               "verify.mutation"};
    return keys;
}

Schedule Config::schedule() const { return make_linear_schedule(T, beta_min, beta_max); }

Config parse_config(std::istream& is) {
    Config cfg;
    std::set<std::string> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string body = trim(line.substr(0, line.find('#')));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(body.substr(0, eq));
        const std::string value = trim(body.substr(eq + 1));
        if (!seen.insert(key).second) throw ConfigError("duplicate config key '" + key + "'");
        if (key == "schedule.T") cfg.T = parse_number<int>(key, value);
        else if (key == "schedule.beta_min") cfg.beta_min = parse_number<double>(key, value);
        else if (key == "schedule.beta_max") cfg.beta_max = parse_number<double>(key, value);
        else if (key == "chain.sigma") cfg.sigma = parse_number<double>(key, value);
        else if (key == "chain.sigma_star") cfg.sigma_star = parse_number<double>(key, value);
        else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
        else if (key == "verify.mutation") {
            if (value != "none" && value != "beta_tilde")
                throw ConfigError("verify.mutation must be 'none' or 'beta_tilde'");
            cfg.mutation = value;
        } else {
            throw ConfigError("unknown config key '" + key + "' on line " + std::to_string(lineno));
        }
    }
    if (cfg.T < 1) throw ConfigError("schedule.T must be >= 1");
    if (!(cfg.beta_min > 0.0 && cfg.beta_min <= cfg.beta_max && cfg.beta_max < 1.0))
        throw ConfigError("need 0 < schedule.beta_min <= schedule.beta_max < 1");
    if (cfg.sigma < 0.0) throw ConfigError("chain.sigma must be >= 0");
    if (!(cfg.sigma_star > 0.0)) throw ConfigError("chain.sigma_star must be > 0");
    return cfg;
}

Config load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    return parse_config(in);
}

std::string to_config_text(const Config& cfg) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "schedule.T = " << cfg.T << "\n"
       << "schedule.beta_min = " << cfg.beta_min << "\n"
       << "schedule.beta_max = " << cfg.beta_max << "\n"
       << "chain.sigma = " << cfg.sigma << "\n"
       << "chain.sigma_star = " << cfg.sigma_star << "\n"
       << "seed = " << cfg.seed << "\n"
       << "verify.mutation = " << cfg.mutation << "\n";
    return os.str();
}

} // namespace rayflow
