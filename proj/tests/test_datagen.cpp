#include "sdo/datagen.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace sdo;
namespace fs = std::filesystem;

namespace {

const PwrModel& model() {
    static const PwrModel m = PwrModel::calibrate(ModelParams{});
    return m;
}

fs::path scratch_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("sdo_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

ScenarioOptions small_scenarios(int count) {
    ScenarioOptions o;
    o.count = count;
    o.spec = OcpSpec::defaults_for(model().params());
    o.spec.N = 8;
    o.history_steps = 6;
    o.expert_iterations = 3;
    return o;
}

}  // namespace

TEST_CASE("load profiles") {
    const double dt = 600.0;
    LoadProfileOptions opt;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        std::mt19937_64 rng(seed);
        const auto w = sample_load_profile(rng, 144, dt, opt);
        REQUIRE(w.size() == 144);
        for (std::size_t k = 0; k < w.size(); ++k) {
            CHECK(w[k] >= opt.level_min);
            CHECK(w[k] <= opt.level_max);
            if (k > 0) CHECK(std::abs(w[k] - w[k - 1]) <= opt.ramp_max / 60.0 * dt + 1e-12);
        }
        std::mt19937_64 again(seed);
        CHECK(sample_load_profile(again, 144, dt, opt) == w);
    }
    LoadProfileOptions flat;
    flat.level_min = flat.level_max = 1.0;
    flat.max_segments = 1;
    std::mt19937_64 rng(1);
    CHECK(sample_load_profile(rng, 10, dt, flat) == LoadProfile(10, 1.0));
    CHECK(sample_load_profile(rng, 5, dt, opt, 0.42).front() == doctest::Approx(0.42).epsilon(0.2));
    CHECK_THROWS_AS(sample_load_profile(rng, 0, dt, opt), std::invalid_argument);
}

TEST_CASE("rod walk stays in the box and holds between updates") {
    const ControlBox box{-0.02, 0.02};
    RodWalkOptions opt{3, 0.25, 0.0};
    std::mt19937_64 rng(4);
    const auto u = sample_rod_walk(rng, 300, box, opt);
    double mean = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        CHECK(box.contains(u[k]));
        if (k % 3 != 0) CHECK(u[k] == u[k - 1]);
        else if (k > 0) CHECK(std::abs(u[k] - u[k - 1]) <= 0.25 * 0.04 + 1e-15);
        mean += u[k];
    }
    CHECK(std::abs(mean / u.size()) < 0.01);

    // The closed-loop run applies clip(walk - gain * AO).
    const SimState x0 = model().steady_state(0.9);
    const std::vector<double> w(20, 0.9);
    const auto walk = sample_rod_walk(rng, 20, box, opt);
    const Trajectory t = simulate_excited(model(), x0, walk, w, 600.0, box, 0.3, nullptr);
    for (std::size_t k = 0; k < walk.size(); ++k) {
        CHECK(t.u[k] == box.clip(walk[k] - 0.3 * axial_offset(t.states[k].P)));
    }
}

TEST_CASE("surrogate dataset accounting and round trip") {
    SurrogateDataOptions opt;
    opt.count = 10;
    opt.N = 144;
    auto ds = gen_surrogate_dataset(model(), opt);
    CHECK(ds.manifest.count == 10);
    CHECK(ds.manifest.retries == 0);
    CHECK(ds.manifest.sim_calls == 10u * 144u * static_cast<std::uint64_t>(model().params().n_sub));
    CHECK(ds.manifest.kind == DatasetKind::SurrogateTraining);
    for (const auto& t : ds.trajectories) {
        REQUIRE(t.states.size() == 145);
        // Replay: the stored controls reproduce the stored states.
        CHECK(model().simulate(t.states.front(), t.u, t.w, 600.0).states == t.states);
        for (double u : t.u) CHECK(std::abs(u) <= 0.02);
    }

    const auto dir = scratch_dir("surr");
    write_surrogate_dataset(dir.string(), ds);
    CHECK(ds.manifest.files.size() == 10);
    for (const auto& f : ds.manifest.files) CHECK(fs::exists(dir / f));
    const auto back = read_surrogate_dataset(dir.string(), 6);
    CHECK(back.manifest.sim_calls == ds.manifest.sim_calls);
    REQUIRE(back.trajectories.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(back.trajectories[i].states == ds.trajectories[i].states);
        CHECK(back.trajectories[i].u == ds.trajectories[i].u);
        CHECK(back.trajectories[i].w == ds.trajectories[i].w);
    }

    // Same seed, byte-identical files.
    auto ds2 = gen_surrogate_dataset(model(), opt);
    const auto dir2 = scratch_dir("surr2");
    write_surrogate_dataset(dir2.string(), ds2);
    for (const auto& f : ds.manifest.files) CHECK(slurp(dir / f) == slurp(dir2 / f));
    CHECK(slurp(dir / "manifest.json") == slurp(dir2 / "manifest.json"));
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("trajectory csv layout") {
    const SimState x0 = model().steady_state(1.0);
    const Trajectory t = model().simulate(x0, std::vector<double>(3, 0.01), std::vector<double>(3, 0.95), 600.0);
    const auto dir = scratch_dir("csv");
    fs::create_directories(dir);
    write_trajectory_csv((dir / "t.csv").string(), t, "demo");
    std::ifstream f(dir / "t.csv");
    std::string line;
    std::getline(f, line);
    CHECK(line.rfind("#", 0) == 0);
    std::getline(f, line);
    const auto cols = split_csv(line);
    REQUIRE(cols.size() == 1 + 21 + 2);
    CHECK(cols.front() == "t");
    CHECK(cols[1] == "I_1");
    CHECK(cols[13] == "h_cr");
    CHECK(cols[22] == "u");
    CHECK(cols[23] == "w");
    const Trajectory back = read_trajectory_csv((dir / "t.csv").string(), 6);
    CHECK(back.states == t.states);
    CHECK(back.u == t.u);
    fs::remove_all(dir);
}

TEST_CASE("bench suite construction") {
    auto opt = small_scenarios(4);
    const BenchSuite s = gen_bench_suite(model(), opt);
    REQUIRE(s.scenarios.size() == 4);
    CHECK(s.manifest.sim_calls > 0);
    int load = 0;
    for (const auto& sc : s.scenarios) {
        CHECK(sc.context.size() == 2);
        CHECK(sc.u_prev.size() == 8);
        for (double u : sc.u_prev) CHECK(sc.spec.box.contains(u));
        if (sc.kind == Perturbation::LoadChange) {
            ++load;
            CHECK(sc.spec.cost_kind == sc.spec_prev.cost_kind);
            CHECK(sc.spec.nu == sc.spec_prev.nu);
        } else {
            // The load forecast is the shifted previous one.
            for (int k = 0; k + 1 < 8; ++k) CHECK(sc.w[k] == sc.w_prev[k + 1]);
            CHECK(sc.spec.cost_kind != sc.spec_prev.cost_kind);
        }
        // x0 is the step of the last history state under the first solved move.
        CHECK(model().step(sc.context[0], sc.u_prev[0], sc.w_prev[0], 600.0) == sc.x0());
    }
    CHECK(load == 2);

    const auto dir = scratch_dir("suite");
    write_bench_suite(dir.string(), s);
    const BenchSuite back = read_bench_suite(dir.string());
    REQUIRE(back.scenarios.size() == 4);
    CHECK(back.scenarios[3].x0() == s.scenarios[3].x0());
    CHECK(back.manifest.sim_calls == s.manifest.sim_calls);
    fs::remove_all(dir);

    opt.count = 0;
    CHECK_THROWS_AS(gen_bench_suite(model(), opt), std::invalid_argument);
}

TEST_CASE("bc dataset accounting") {
    BcDataOptions opt;
    opt.scenarios = small_scenarios(2);
    opt.expert_iterations = 4;
    const BcDataset ds = gen_bc_dataset(model(), opt);
    REQUIRE(ds.samples.size() == 2);
    CHECK(ds.manifest.kind == DatasetKind::BcTraining);
    // At least the gradient probes of every labelled solve: iterations * N evaluations.
    const std::uint64_t per_eval = 8u * static_cast<std::uint64_t>(model().params().n_sub);
    CHECK(ds.manifest.sim_calls >= 2u * 4u * 8u * per_eval);
    for (const auto& s : ds.samples) {
        for (double u : s.u_star) CHECK(s.scenario.spec.box.contains(u));
    }
    const auto dir = scratch_dir("bc");
    write_bc_dataset(dir.string(), ds);
    const BcDataset back = read_bc_dataset(dir.string());
    CHECK(back.samples.size() == 2);
    CHECK(back.samples[1].u_star == ds.samples[1].u_star);
    CHECK(back.manifest.sim_calls_per_item() == ds.manifest.sim_calls_per_item());
    fs::remove_all(dir);
}

TEST_CASE("manifest json round trip") {
    DatasetManifest m;
    m.kind = DatasetKind::BenchSuite;
    m.count = 3;
    m.horizon = 48;
    m.seed = 77;
    m.params_hash = "abc";
    m.sim_calls = 123456789012ull;
    m.files = {"a", "b", "c"};
    const auto back = DatasetManifest::from_json(m.to_json());
    CHECK(back.to_json() == m.to_json());
    CHECK(dataset_kind_from_string("bc") == DatasetKind::BcTraining);
}
