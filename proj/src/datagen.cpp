#include "sdo/datagen.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace sdo {

std::string to_string(DatasetKind k) {
    switch (k) {
        case DatasetKind::SurrogateTraining: return "surrogate";
        case DatasetKind::BcTraining: return "bc";
        case DatasetKind::BenchSuite: return "bench";
    }
    return "surrogate";
}

DatasetKind dataset_kind_from_string(const std::string& s) {
    if (s == "surrogate") return DatasetKind::SurrogateTraining;
    if (s == "bc") return DatasetKind::BcTraining;
    if (s == "bench") return DatasetKind::BenchSuite;
    throw ConfigError("unknown dataset kind '" + s + "' (expected surrogate, bc or bench)");
}

nlohmann::json DatasetManifest::to_json() const {
    return {{"kind", to_string(kind)},     {"count", count},         {"dt", dt},
            {"horizon", horizon},          {"seed", seed},           {"params_hash", params_hash},
            {"sim_calls", sim_calls},      {"sim_calls_per_item", sim_calls_per_item()},
            {"retries", retries},          {"files", files},         {"version", kVersion}};
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
    DatasetManifest m;
    m.kind = dataset_kind_from_string(j.at("kind"));
    m.count = j.at("count");
    m.dt = j.at("dt");
    m.horizon = j.at("horizon");
    m.seed = j.at("seed");
    m.params_hash = j.at("params_hash");
    m.sim_calls = j.at("sim_calls");
    m.retries = j.at("retries");
    m.files = j.at("files").get<std::vector<std::string>>();
    if (m.files.size() != m.count && m.kind == DatasetKind::SurrogateTraining) {
        throw std::runtime_error("manifest file list does not match its count");
    }
    return m;
}

namespace {

double uniform(std::mt19937_64& rng, double a, double b) {
    return std::uniform_real_distribution<double>(a, b)(rng);
}

int uniform_int(std::mt19937_64& rng, int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); }

}  // namespace

LoadProfile sample_load_profile(std::mt19937_64& rng, int N, double dt, const LoadProfileOptions& opt,
                                std::optional<double> start) {
    if (N < 1) throw std::invalid_argument("load profile needs N >= 1");
    const int segments = uniform_int(rng, std::max(1, opt.min_segments), std::max(opt.min_segments, opt.max_segments));
    double level = start ? *start : uniform(rng, opt.level_min, opt.level_max);
    std::vector<int> change_at;
    for (int s = 1; s < segments; ++s) change_at.push_back(N > 1 ? uniform_int(rng, 1, N - 1) : 0);
    std::sort(change_at.begin(), change_at.end());
    std::vector<double> targets, rates;
    for (std::size_t s = 0; s < change_at.size(); ++s) {
        targets.push_back(uniform(rng, opt.level_min, opt.level_max));
        rates.push_back(uniform(rng, opt.ramp_min, opt.ramp_max) / 60.0);  // per second
    }
    LoadProfile w(static_cast<std::size_t>(N));
    double target = level, rate = 0.0;
    std::size_t next = 0;
    for (int k = 0; k < N; ++k) {
        while (next < change_at.size() && change_at[next] <= k) {
            target = targets[next];
            rate = rates[next];
            ++next;
        }
        if (level < target) {
            level = std::min(target, level + rate * dt);
        } else if (level > target) {
            level = std::max(target, level - rate * dt);
        }
        w[static_cast<std::size_t>(k)] = level;
    }
    return w;
}

ControlSequence sample_rod_walk(std::mt19937_64& rng, int N, const ControlBox& box, const RodWalkOptions& opt) {
    const double a = opt.step_fraction * (box.hi - box.lo);
    ControlSequence u(static_cast<std::size_t>(N));
    double v = box.nearest_to_zero();
    for (int k = 0; k < N; ++k) {
        if (k % std::max(1, opt.hold_steps) == 0) {
            v += uniform(rng, -a, a);
            if (v > box.hi) v = 2.0 * box.hi - v;
            if (v < box.lo) v = 2.0 * box.lo - v;
            v = box.clip(v);
        }
        u[static_cast<std::size_t>(k)] = v;
    }
    return u;
}

Trajectory simulate_excited(const PwrModel& model, const SimState& x0, std::span<const double> walk,
                            std::span<const double> w, double dt, const ControlBox& box, double ao_gain,
                            CallCounter* counter) {
    if (walk.size() != w.size()) throw std::invalid_argument("walk and load lengths differ");
    Trajectory t;
    t.dt = dt;
    t.states.reserve(walk.size() + 1);
    t.states.push_back(x0);
    for (std::size_t k = 0; k < walk.size(); ++k) {
        const double u = box.clip(walk[k] - ao_gain * axial_offset(t.states.back().P));
        try {
            t.states.push_back(model.step(t.states.back(), u, w[k], dt, counter));
        } catch (const IntegrationError& e) {
            throw IntegrationError(std::string(e.what()) + " (step " + std::to_string(k) + ")",
                                   static_cast<int>(k), e.residual());
        }
        t.u.push_back(u);
        t.w.push_back(w[k]);
    }
    return t;
}

SurrogateDataset gen_surrogate_dataset(const PwrModel& model, const SurrogateDataOptions& opt) {
    if (opt.count < 1) throw std::invalid_argument("count must be >= 1");
    SurrogateDataset ds;
    auto& m = ds.manifest;
    m.kind = DatasetKind::SurrogateTraining;
    m.dt = opt.dt;
    m.horizon = opt.N;
    m.seed = opt.seed;
    m.params_hash = params_hash(model.params());
    CallCounter counter;
    std::mt19937_64 rng(opt.seed);
    const ControlBox box{model.params().u_min, model.params().u_max};
    for (int i = 0; i < opt.count; ++i) {
        for (int attempt = 0;; ++attempt) {
            const auto w = sample_load_profile(rng, opt.N, opt.dt, opt.load);
            const auto u = sample_rod_walk(rng, opt.N, box, opt.rods);
            try {
                const auto x0 = model.steady_state(w.front());
                ds.trajectories.push_back(
                    simulate_excited(model, x0, u, w, opt.dt, box, opt.rods.ao_gain, &counter));
                break;
            } catch (const IntegrationError&) {
                ++m.retries;
                if (attempt >= 2) throw;
            }
        }
    }
    m.count = ds.trajectories.size();
    m.sim_calls = counter.value();
    return ds;
}

Scenario make_scenario(const PwrModel& model, std::mt19937_64& rng, int id, Perturbation kind,
                       const ScenarioOptions& opt, CallCounter* counter) {
    const OcpSpec& base = opt.spec;
    const double dt = base.dt;
    const ControlBox box = base.box;

    const double w_a = uniform(rng, opt.w_start_min, opt.w_start_max);
    const auto x_ss = model.steady_state(w_a);
    const auto w_hist = sample_load_profile(rng, opt.history_steps, dt, opt.load, w_a);
    const auto u_hist = sample_rod_walk(rng, opt.history_steps, box, opt.history_rods);
    const auto hist = simulate_excited(model, x_ss, u_hist, w_hist, dt, box, opt.history_rods.ao_gain, counter);
    const SimState& x_m1 = hist.states.back();

    OcpSpec spec_prev = base;
    spec_prev.cost_kind = uniform_int(rng, 0, 1) == 0 ? CostKind::AxialOffsetTarget : CostKind::BoronSmoothness;
    const auto w_prev = sample_load_profile(rng, base.N, dt, opt.load, w_hist.back());
    const auto solved = refine_full(model, x_m1, w_prev, spec_prev, cold_start(spec_prev), opt.expert_iterations,
                                    opt.refine);
    if (counter) counter->add(solved.trace.rows.back().sim_calls);
    const SimState x0 = model.step(x_m1, solved.u_best.front(), w_prev.front(), dt, counter);

    Scenario sc;
    sc.id = id;
    sc.kind = kind;
    const int H = opt.H;
    const int avail = static_cast<int>(hist.states.size());
    for (int i = std::max(0, avail - H); i < avail; ++i) sc.context.push_back(hist.states[i]);
    while (static_cast<int>(sc.context.size()) < H) sc.context.insert(sc.context.begin(), sc.context.front());
    sc.context.push_back(x0);
    sc.w_prev = w_prev;
    sc.spec_prev = spec_prev;
    sc.u_prev = solved.u_best;

    LoadProfile w_shift(w_prev.begin() + 1, w_prev.end());
    w_shift.push_back(w_prev.back());
    if (kind == Perturbation::LoadChange) {
        LoadProfileOptions lo = opt.load;
        lo.min_segments = std::max(2, lo.min_segments);
        sc.w = sample_load_profile(rng, base.N, dt, lo, w_shift.front());
        sc.spec = spec_prev;
    } else {
        sc.w = w_shift;
        sc.spec = spec_prev;
        sc.spec.cost_kind = spec_prev.cost_kind == CostKind::AxialOffsetTarget ? CostKind::BoronSmoothness
                                                                                : CostKind::AxialOffsetTarget;
    }
    sc.validate();
    return sc;
}

BenchSuite gen_bench_suite(const PwrModel& model, const ScenarioOptions& opt) {
    if (opt.count < 1) throw std::invalid_argument("count must be >= 1");
    BenchSuite suite;
    CallCounter counter;
    std::mt19937_64 rng(opt.seed);
    for (int i = 0; i < opt.count; ++i) {
        const auto kind = i % 2 == 0 ? Perturbation::LoadChange : Perturbation::CostChange;
        suite.scenarios.push_back(make_scenario(model, rng, i, kind, opt, &counter));
    }
    auto& m = suite.manifest;
    m.kind = DatasetKind::BenchSuite;
    m.count = suite.scenarios.size();
    m.dt = opt.spec.dt;
    m.horizon = opt.spec.N;
    m.seed = opt.seed;
    m.params_hash = params_hash(model.params());
    m.sim_calls = counter.value();
    return suite;
}

BcDataset gen_bc_dataset(const PwrModel& model, const BcDataOptions& opt) {
    const auto& so = opt.scenarios;
    if (so.count < 1) throw std::invalid_argument("count must be >= 1");
    BcDataset ds;
    CallCounter counter;
    std::mt19937_64 rng(so.seed);
    for (int i = 0; i < so.count; ++i) {
        const auto kind = i % 2 == 0 ? Perturbation::LoadChange : Perturbation::CostChange;
        BcSample s;
        s.scenario = make_scenario(model, rng, i, kind, so, &counter);
        const auto r = refine_full(model, s.scenario, cold_start(s.scenario.spec), opt.expert_iterations, so.refine);
        counter.add(r.trace.rows.back().sim_calls);
        s.u_star = r.u_best;
        ds.samples.push_back(std::move(s));
    }
    auto& m = ds.manifest;
    m.kind = DatasetKind::BcTraining;
    m.count = ds.samples.size();
    m.dt = so.spec.dt;
    m.horizon = so.spec.N;
    m.seed = so.seed;
    m.params_hash = params_hash(model.params());
    m.sim_calls = counter.value();
    return ds;
}

void write_trajectory_csv(const std::string& path, const Trajectory& t, const std::string& header_comment) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    if (!header_comment.empty()) f << "# " << header_comment << '\n';
    const int nz = t.states.front().n_z();
    f << "t";
    for (int j = 1; j <= nz; ++j) f << ",I_" << j;
    for (int j = 1; j <= nz; ++j) f << ",X_" << j;
    f << ",h_cr";
    for (int j = 1; j <= nz; ++j) f << ",P_" << j;
    f << ",C_b,T_in,u,w\n";
    for (std::size_t k = 0; k < t.states.size(); ++k) {
        f << fmt_double(static_cast<double>(k) * t.dt);
        for (double v : t.states[k].to_vector()) f << ',' << fmt_double(v);
        if (k < t.u.size()) {
            f << ',' << fmt_double(t.u[k]) << ',' << fmt_double(t.w[k]);
        } else {
            f << ",,";
        }
        f << '\n';
    }
}

Trajectory read_trajectory_csv(const std::string& path, int n_z) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);
    Trajectory t;
    std::string line;
    const int dim = state_dim(n_z);
    bool header = false;
    std::vector<double> times;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            header = true;
            continue;
        }
        const auto cells = split_csv(line);
        if (static_cast<int>(cells.size()) != dim + 3) throw std::runtime_error(path + ": malformed row");
        times.push_back(std::stod(cells[0]));
        std::vector<double> v(static_cast<std::size_t>(dim));
        for (int i = 0; i < dim; ++i) v[i] = std::stod(cells[i + 1]);
        t.states.push_back(SimState::from_vector(v, n_z));
        if (!cells[dim + 1].empty()) {
            t.u.push_back(std::stod(cells[dim + 1]));
            t.w.push_back(std::stod(cells[dim + 2]));
        }
    }
    if (t.states.empty()) throw std::runtime_error(path + ": no rows");
    if (times.size() > 1) t.dt = times[1] - times[0];
    return t;
}

void write_surrogate_dataset(const std::string& dir, SurrogateDataset& ds) {
    fs::create_directories(dir);
    ds.manifest.files.clear();
    for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "traj_%05zu.csv", i);
        write_trajectory_csv((fs::path(dir) / name).string(), ds.trajectories[i]);
        ds.manifest.files.emplace_back(name);
    }
    write_json_file((fs::path(dir) / "manifest.json").string(), ds.manifest.to_json());
}

SurrogateDataset read_surrogate_dataset(const std::string& dir, int n_z) {
    SurrogateDataset ds;
    ds.manifest = DatasetManifest::from_json(read_json_file((fs::path(dir) / "manifest.json").string()));
    for (const auto& name : ds.manifest.files) {
        ds.trajectories.push_back(read_trajectory_csv((fs::path(dir) / name).string(), n_z));
    }
    return ds;
}

void write_bench_suite(const std::string& dir, const BenchSuite& suite) {
    fs::create_directories(dir);
    nlohmann::json sc = nlohmann::json::array();
    for (const auto& s : suite.scenarios) sc.push_back(to_json(s));
    write_json_file((fs::path(dir) / "scenarios.json").string(), sc);
    auto m = suite.manifest;
    m.files = {"scenarios.json"};
    write_json_file((fs::path(dir) / "manifest.json").string(), m.to_json());
}

BenchSuite read_bench_suite(const std::string& dir) {
    BenchSuite suite;
    suite.manifest = DatasetManifest::from_json(read_json_file((fs::path(dir) / "manifest.json").string()));
    for (const auto& j : read_json_file((fs::path(dir) / "scenarios.json").string())) {
        suite.scenarios.push_back(scenario_from_json(j));
    }
    return suite;
}

void write_bc_dataset(const std::string& dir, const BcDataset& ds) {
    fs::create_directories(dir);
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : ds.samples) arr.push_back({{"scenario", to_json(s.scenario)}, {"u_star", s.u_star}});
    write_json_file((fs::path(dir) / "samples.json").string(), arr);
    auto m = ds.manifest;
    m.files = {"samples.json"};
    write_json_file((fs::path(dir) / "manifest.json").string(), m.to_json());
}

BcDataset read_bc_dataset(const std::string& dir) {
    BcDataset ds;
    ds.manifest = DatasetManifest::from_json(read_json_file((fs::path(dir) / "manifest.json").string()));
    for (const auto& j : read_json_file((fs::path(dir) / "samples.json").string())) {
        ds.samples.push_back({scenario_from_json(j.at("scenario")), j.at("u_star").get<ControlSequence>()});
    }
    return ds;
}

}  // namespace sdo
