#pragma once

// Training data and benchmark scenario generation with simulator-call accounting.

#include "sdo/io.hpp"
#include "sdo/warmstart.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace sdo {

enum class DatasetKind { SurrogateTraining, BcTraining, BenchSuite };
std::string to_string(DatasetKind k);
DatasetKind dataset_kind_from_string(const std::string& s);

struct DatasetManifest {
    DatasetKind kind = DatasetKind::SurrogateTraining;
    std::size_t count = 0;
    double dt = 600.0;
    int horizon = 0;
    std::uint64_t seed = 0;
    std::string params_hash;
    std::uint64_t sim_calls = 0;  // simulator sub-steps spent producing the dataset
    int retries = 0;
    std::vector<std::string> files;

    double sim_calls_per_item() const { return count ? static_cast<double>(sim_calls) / count : 0.0; }
    nlohmann::json to_json() const;
    static DatasetManifest from_json(const nlohmann::json& j);
};

struct LoadProfileOptions {
    double level_min = 0.3;
    double level_max = 1.0;
    int max_segments = 4;
    double ramp_min = 0.005;  // per minute, in units of P_nom
    double ramp_max = 0.05;
    int min_segments = 1;
};

/// Piecewise ramp-and-hold profile of N values. If `start` is given the first
/// segment holds that level; otherwise it is drawn.
LoadProfile sample_load_profile(std::mt19937_64& rng, int N, double dt, const LoadProfileOptions& opt = {},
                                std::optional<double> start = std::nullopt);

struct RodWalkOptions {
    int hold_steps = 3;           // 30 min at dt = 600 s
    double step_fraction = 0.25;  // increment bound as a fraction of u_max - u_min
    double ao_gain = 0.1;         // stabilizer u -= ao_gain * AO (steps/s per unit AO); 0 = pure walk
};

/// Zero-mean bounded random walk in rod speed, reflected at the box, held for
/// hold_steps intervals between updates.
ControlSequence sample_rod_walk(std::mt19937_64& rng, int N, const ControlBox& box, const RodWalkOptions& opt = {});

/// Closed-loop run: u_k = clip(walk_k - ao_gain * AO(x_k)).
Trajectory simulate_excited(const PwrModel& model, const SimState& x0, std::span<const double> walk,
                            std::span<const double> w, double dt, const ControlBox& box, double ao_gain,
                            CallCounter* counter);

struct SurrogateDataOptions {
    int count = 1000;
    int N = 144;
    double dt = 600.0;
    std::uint64_t seed = 7;
    LoadProfileOptions load;
    RodWalkOptions rods{3, 0.25, 0.15};
};

struct SurrogateDataset {
    std::vector<Trajectory> trajectories;
    DatasetManifest manifest;
};

SurrogateDataset gen_surrogate_dataset(const PwrModel& model, const SurrogateDataOptions& opt);

struct ScenarioOptions {
    int count = 20;
    int H = 1;
    std::uint64_t seed = 11;
    OcpSpec spec;                 // N, dt, band and penalty of every generated problem
    int history_steps = 36;       // operating history before the pre-change solve
    RodWalkOptions history_rods{3, 0.1, 0.1};
    int expert_iterations = 50;   // pre-change solve budget
    double w_start_min = 0.5;
    double w_start_max = 1.0;
    LoadProfileOptions load;
    RefineOptions refine;
};

/// One scenario: history, pre-change solve, first move applied, then a
/// last-minute change of the load forecast or the cost.
Scenario make_scenario(const PwrModel& model, std::mt19937_64& rng, int id, Perturbation kind,
                       const ScenarioOptions& opt, CallCounter* counter);

struct BenchSuite {
    std::vector<Scenario> scenarios;
    DatasetManifest manifest;
};

/// Even split of the two perturbation kinds (LoadChange first on odd counts).
BenchSuite gen_bench_suite(const PwrModel& model, const ScenarioOptions& opt);

struct BcDataOptions {
    ScenarioOptions scenarios;   // count = number of solved problems
    int expert_iterations = 50;  // budget of each labelled solve (from cold start)
};

struct BcDataset {
    std::vector<BcSample> samples;
    DatasetManifest manifest;
};

BcDataset gen_bc_dataset(const PwrModel& model, const BcDataOptions& opt);

// File formats.
void write_trajectory_csv(const std::string& path, const Trajectory& t, const std::string& header_comment = "");
Trajectory read_trajectory_csv(const std::string& path, int n_z);
void write_surrogate_dataset(const std::string& dir, SurrogateDataset& ds);
SurrogateDataset read_surrogate_dataset(const std::string& dir, int n_z);
void write_bench_suite(const std::string& dir, const BenchSuite& suite);
BenchSuite read_bench_suite(const std::string& dir);
void write_bc_dataset(const std::string& dir, const BcDataset& ds);
BcDataset read_bc_dataset(const std::string& dir);

}  // namespace sdo
