#pragma once

// Merged run configuration read from JSON. Every section is optional; keys not
// listed here are rejected.

#include "sdo/bench.hpp"
#include "sdo/datagen.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sdo {

struct DataConfig {
    int surrogate_count = 1000;
    int surrogate_steps = 144;
    std::uint64_t surrogate_seed = 7;
    double rod_step_fraction = 0.25;
    double rod_ao_gain = 0.15;
    int bench_count = 20;
    std::uint64_t bench_seed = 11;
    double history_ao_gain = 0.1;
    int bc_count = 100;
    std::uint64_t bc_seed = 13;
    int expert_iterations = 50;
};

struct BenchConfig {
    std::vector<std::string> strategies{"cold", "shift", "bc", "sdo_1", "sdo_5"};
    std::vector<int> violation_at{0, 5, 10};
    double fd_rel_step = 1e-4;
};

struct SweepConfig {
    std::vector<double> fractions{0.1, 0.3, 1.0};
    int checkpoint_every = 20;
    int n_eval = 5;
};

struct PathConfig {
    std::string out = "out";
    std::string data;       // surrogate training dataset directory
    std::string suite;      // bench suite directory
    std::string bc_data;    // BC dataset directory
    std::string surrogate;  // trained surrogate JSON
    std::string bc;         // trained BC JSON
};

struct RunConfig {
    ModelParams model;
    OcpSpec ocp;
    SurrogateConfig surrogate;
    BcConfig bc;
    OptBudget budget;
    SdoOptions sdo;
    DataConfig data;
    BenchConfig bench;
    SweepConfig sweep;
    PathConfig paths;
    std::optional<std::uint64_t> seed;  // when set, every component seed is derived from it
    int parallelism = 1;

    RunConfig();

    /// Throws ConfigError listing every invalid field.
    void validate() const;
    nlohmann::json to_json() const;
    std::string hash() const;

    /// Seed for a named component: derived from `seed` when present, else the default.
    std::uint64_t seed_for(const std::string& component, std::uint64_t fallback) const;

    SurrogateDataOptions surrogate_data_options() const;
    ScenarioOptions scenario_options() const;
    BcDataOptions bc_data_options() const;
    SurrogateConfig surrogate_config() const;
    BcConfig bc_config() const;
    BenchOptions bench_options() const;
    SweepOptions sweep_options() const;
};

/// Overlays `j` on `base`; unknown keys and type errors are collected and
/// reported together as "section.key: reason".
RunConfig config_from_json(const nlohmann::json& j, const RunConfig& base = {});
RunConfig load_config(const std::string& path);

}  // namespace sdo
