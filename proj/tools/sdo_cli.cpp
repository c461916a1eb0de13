// sdo: command-line front end for simulation, data generation, training,
// warm-started solves, the strategy benchmark and the bound check.

#include "sdo/bound_check.hpp"
#include "sdo/config.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>

namespace fs = std::filesystem;
using namespace sdo;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    std::string config_path;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<int> parallelism;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app->add_option("--out", c.out, "output directory");
    app->add_option("--seed", c.seed, "master seed (derives every component seed)");
    app->add_option("--parallelism", c.parallelism, "worker threads")->check(CLI::PositiveNumber);
}

/// Defaults, then the config file, then command-line flags; the merge is logged.
RunConfig resolve(const Common& c, const std::function<void(RunConfig&)>& flags = {}) {
    RunConfig cfg;
    if (!c.config_path.empty()) cfg = load_config(c.config_path);
    std::clog << "config: defaults" << (c.config_path.empty() ? "" : " < " + c.config_path);
    if (c.out) cfg.paths.out = *c.out;
    if (c.seed) cfg.seed = *c.seed;
    if (c.parallelism) cfg.parallelism = *c.parallelism;
    if (flags) flags(cfg);
    std::clog << " < command line\n";
    cfg.validate();
    std::clog << "config: hash=" << cfg.hash() << " out=" << cfg.paths.out << '\n';
    fs::create_directories(cfg.paths.out);
    write_json_file((fs::path(cfg.paths.out) / "config.json").string(), cfg.to_json());
    return cfg;
}

Provenance provenance(const RunConfig& cfg, const std::string& command) {
    return {{"sdo", kVersion},
            {"command", command},
            {"config", cfg.hash()},
            {"seed", cfg.seed ? std::to_string(*cfg.seed) : std::string("default")}};
}

std::string out_file(const RunConfig& cfg, const std::string& name) { return (fs::path(cfg.paths.out) / name).string(); }

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    return f;
}

std::string require(const std::string& value, const std::string& what) {
    if (value.empty()) throw UsageError(what + " is required (flag or paths section)");
    return value;
}

std::vector<TrajectoryData> load_training_data(const RunConfig& cfg) {
    const auto ds = read_surrogate_dataset(require(cfg.paths.data, "--data"), cfg.model.n_z);
    std::vector<TrajectoryData> td;
    td.reserve(ds.trajectories.size());
    for (const auto& t : ds.trajectories) td.push_back(TrajectoryData::from(t));
    return td;
}

int run(int argc, char** argv) {
    CLI::App app{"Surrogate dynamics optimization warm starts for a PWR load-following NMPC"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    // simulate
    Common sim_c;
    double hours = 24.0, load = 1.0, rod_speed = 0.0, w0 = 1.0;
    auto* sim = app.add_subcommand("simulate", "steady state, then constant load and rod speed");
    add_common(sim, sim_c);
    sim->add_option("--hours", hours, "simulated time")->check(CLI::PositiveNumber);
    sim->add_option("--w0", w0, "initial steady-state load")->check(CLI::Range(0.0, 1.0));
    sim->add_option("--load", load, "load during the run")->check(CLI::Range(0.0, 1.0));
    sim->add_option("--u", rod_speed, "rod speed (steps/s)");

    // calibrate
    Common cal_c;
    auto* cal = app.add_subcommand("calibrate", "write the nominal operating point");
    add_common(cal, cal_c);

    // gen-data
    Common gen_c;
    std::string kind;
    std::optional<int> count;
    auto* gen = app.add_subcommand("gen-data", "generate a surrogate, bc or bench dataset");
    add_common(gen, gen_c);
    gen->add_option("--kind", kind, "surrogate | bc | bench")
        ->required()
        ->check(CLI::IsMember({"surrogate", "bc", "bench"}));
    gen->add_option("--count", count, "number of trajectories or scenarios")->check(CLI::PositiveNumber);

    // train-surrogate
    Common ts_c;
    std::string ts_data;
    std::optional<int> epochs;
    auto* ts = app.add_subcommand("train-surrogate", "train the surrogate on a trajectory dataset");
    add_common(ts, ts_c);
    ts->add_option("--data", ts_data, "surrogate dataset directory");
    ts->add_option("--epochs", epochs, "maximum epochs")->check(CLI::NonNegativeNumber);

    // train-bc
    Common tb_c;
    std::string tb_data;
    std::optional<int> bc_epochs;
    auto* tb = app.add_subcommand("train-bc", "train the behavior-cloning baseline");
    add_common(tb, tb_c);
    tb->add_option("--data", tb_data, "bc dataset directory");
    tb->add_option("--epochs", bc_epochs, "full-batch epochs")->check(CLI::NonNegativeNumber);

    // solve
    Common so_c;
    std::string so_suite, so_surrogate, so_bc, so_strategy = "sdo_5";
    int so_scenario = 0;
    std::optional<int> so_iters;
    auto* so = app.add_subcommand("solve", "warm-start and refine one scenario");
    add_common(so, so_c);
    so->add_option("--suite", so_suite, "bench suite directory");
    so->add_option("--scenario", so_scenario, "scenario id");
    so->add_option("--strategy", so_strategy, "cold | shift | bc | sdo_<percent>");
    so->add_option("--surrogate", so_surrogate, "trained surrogate JSON");
    so->add_option("--bc", so_bc, "trained BC JSON");
    so->add_option("--iterations", so_iters, "full-scale iterations")->check(CLI::NonNegativeNumber);

    // bench
    Common be_c;
    std::string be_suite, be_surrogate, be_bc;
    std::vector<std::string> be_strategies;
    auto* be = app.add_subcommand("bench", "compare warm-start strategies on a suite");
    add_common(be, be_c);
    be->add_option("--suite", be_suite, "bench suite directory");
    be->add_option("--surrogate", be_surrogate, "trained surrogate JSON");
    be->add_option("--bc", be_bc, "trained BC JSON");
    be->add_option("--strategies", be_strategies, "strategy names")->delimiter(',');

    // sweep
    Common sw_c;
    std::string sw_data, sw_suite;
    auto* sw = app.add_subcommand("sweep", "data-efficiency sweep over dataset fractions");
    add_common(sw, sw_c);
    sw->add_option("--data", sw_data, "surrogate dataset directory");
    sw->add_option("--suite", sw_suite, "bench suite directory");

    // verify-bound
    Common vb_c;
    int vb_count = 100, vb_max_dims = 6, vb_trials = 50;
    auto* vb = app.add_subcommand("verify-bound", "check the warm-start bounds on synthetic quadratic problems");
    add_common(vb, vb_c);
    vb->add_option("--count", vb_count, "instances")->check(CLI::PositiveNumber);
    vb->add_option("--max-dims", vb_max_dims, "largest control dimension")->check(CLI::Range(1, 10));
    vb->add_option("--trials", vb_trials, "random directions in the tightness study")->check(CLI::NonNegativeNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 2;
    }

    if (sim->parsed()) {
        const auto cfg = resolve(sim_c);
        const auto model = PwrModel::calibrate(cfg.model);
        const int steps = static_cast<int>(std::lround(hours * 3600.0 / cfg.ocp.dt));
        if (steps < 1) throw UsageError("--hours shorter than one control interval");
        const std::vector<double> u(steps, rod_speed), w(steps, load);
        const auto t = model.simulate(model.steady_state(w0), u, w, cfg.ocp.dt);
        std::string header;
        for (const auto& [k, v] : provenance(cfg, "simulate")) header += k + "=" + v + " ";
        write_trajectory_csv(out_file(cfg, "trajectory.csv"), t, header);
        std::cout << "wrote " << t.states.size() << " states to " << out_file(cfg, "trajectory.csv") << '\n';
    } else if (cal->parsed()) {
        const auto cfg = resolve(cal_c);
        const auto model = PwrModel::calibrate(cfg.model);
        const auto& c = model.calibration();
        nlohmann::json j{{"P0", c.P0}, {"X0", c.X0}, {"I0", c.I0}, {"C_b0", c.C_b0}, {"T_in0", c.T_in0},
                         {"rod_bias", c.rod_bias}, {"params_hash", params_hash(cfg.model)}};
        write_json_file(out_file(cfg, "calibration.json"), j);
        std::cout << j.dump(2) << '\n';
    } else if (gen->parsed()) {
        const auto cfg = resolve(gen_c, [&](RunConfig& c) {
            if (!count) return;
            if (kind == "surrogate") c.data.surrogate_count = *count;
            if (kind == "bc") c.data.bc_count = *count;
            if (kind == "bench") c.data.bench_count = *count;
        });
        const auto model = PwrModel::calibrate(cfg.model);
        DatasetManifest m;
        if (kind == "surrogate") {
            auto ds = gen_surrogate_dataset(model, cfg.surrogate_data_options());
            write_surrogate_dataset(cfg.paths.out, ds);
            m = ds.manifest;
        } else if (kind == "bench") {
            const auto suite = gen_bench_suite(model, cfg.scenario_options());
            write_bench_suite(cfg.paths.out, suite);
            m = suite.manifest;
        } else {
            const auto ds = gen_bc_dataset(model, cfg.bc_data_options());
            write_bc_dataset(cfg.paths.out, ds);
            m = ds.manifest;
        }
        std::cout << "wrote " << m.count << " items, " << m.sim_calls << " simulator calls ("
                  << m.sim_calls_per_item() << " per item) to " << cfg.paths.out << '\n';
    } else if (ts->parsed()) {
        const auto cfg = resolve(ts_c, [&](RunConfig& c) {
            if (!ts_data.empty()) c.paths.data = ts_data;
            if (epochs) c.surrogate.max_epochs = *epochs;
        });
        const auto model = PwrModel::calibrate(cfg.model);
        const auto data = load_training_data(cfg);
        auto log = open_out(out_file(cfg, "training.csv"));
        write_provenance(log, provenance(cfg, "train-surrogate"));
        log << "epoch,train_loss,val_mse_1,val_mse_L\n";
        const auto res = train_surrogate(data, cfg.surrogate_config(), PhysicsConsts::from(cfg.model, cfg.ocp.dt),
                                         [&](const TrainEpoch& e, const SurrogateNet&) {
                                             log << e.epoch << ',' << fmt_double(e.train_loss) << ','
                                                 << fmt_double(e.val_mse_1) << ',' << fmt_double(e.val_mse_L) << '\n';
                                             std::clog << "epoch " << e.epoch << " val_mse_L " << e.val_mse_L << '\n';
                                         });
        (void)model;
        res.net.save(out_file(cfg, "surrogate.json"));
        std::cout << "best epoch " << res.record.best_epoch << ", wrote " << out_file(cfg, "surrogate.json") << '\n';
    } else if (tb->parsed()) {
        const auto cfg = resolve(tb_c, [&](RunConfig& c) {
            if (!tb_data.empty()) c.paths.bc_data = tb_data;
            if (bc_epochs) c.bc.epochs = *bc_epochs;
        });
        const auto ds = read_bc_dataset(require(cfg.paths.bc_data, "--data"));
        const auto net = bc_train(ds.samples, cfg.bc_config(), ds.manifest.sim_calls);
        net.save(out_file(cfg, "bc.json"));
        std::cout << "train loss " << net.train_loss << ", val loss " << net.val_loss << ", wrote "
                  << out_file(cfg, "bc.json") << '\n';
    } else if (so->parsed()) {
        const auto cfg = resolve(so_c, [&](RunConfig& c) {
            if (!so_suite.empty()) c.paths.suite = so_suite;
            if (!so_surrogate.empty()) c.paths.surrogate = so_surrogate;
            if (!so_bc.empty()) c.paths.bc = so_bc;
            if (so_iters) {
                c.budget.max_iterations = *so_iters;
                c.budget.record_at.clear();
            }
        });
        const auto model = PwrModel::calibrate(cfg.model);
        const auto suite = read_bench_suite(require(cfg.paths.suite, "--suite"));
        const auto it = std::find_if(suite.scenarios.begin(), suite.scenarios.end(),
                                     [&](const Scenario& s) { return s.id == so_scenario; });
        if (it == suite.scenarios.end()) throw UsageError("no scenario with id " + std::to_string(so_scenario));
        const auto strategy = Strategy::parse(so_strategy);
        std::optional<SurrogateNet> net;
        std::optional<BcNet> bc;
        if (strategy.kind == StrategyKind::Sdo) net = SurrogateNet::load(require(cfg.paths.surrogate, "--surrogate"));
        if (strategy.kind == StrategyKind::Bc) bc = BcNet::load(require(cfg.paths.bc, "--bc"));
        ControlSequence u0;
        switch (strategy.kind) {
            case StrategyKind::Cold: u0 = cold_start(it->spec); break;
            case StrategyKind::Shift: u0 = shift_init(it->u_prev, it->spec.box); break;
            case StrategyKind::Bc: u0 = bc->predict(*it); break;
            case StrategyKind::Sdo: {
                auto o = cfg.bench_options().sdo;
                o.fraction = strategy.fraction;
                const auto r = sdo_warmstart(*net, *it, o);
                if (r.fell_back) std::clog << "warning: " << r.warning << '\n';
                std::clog << "sdo: " << r.iterations << " surrogate iterations, " << r.used_units << " of "
                          << r.budget_units << " budget units\n";
                u0 = r.u;
                break;
            }
        }
        auto ro = cfg.bench_options().refine;
        ro.parallelism = cfg.parallelism;
        const auto res = refine_full(model, *it, u0, cfg.budget.max_iterations, ro);
        auto f = open_out(out_file(cfg, "trace.csv"));
        write_provenance(f, provenance(cfg, "solve"));
        f << "iteration,J,J_pen,violation,best_J,best_J_pen,best_violation,step,sim_calls\n";
        for (const auto& r : res.trace.rows) {
            f << r.iteration << ',' << fmt_double(r.J) << ',' << fmt_double(r.J_pen) << ',' << fmt_double(r.violation)
              << ',' << fmt_double(r.best_J) << ',' << fmt_double(r.best_J_pen) << ','
              << fmt_double(r.best_violation) << ',' << fmt_double(r.step) << ',' << r.sim_calls << '\n';
        }
        auto uf = open_out(out_file(cfg, "controls.csv"));
        write_provenance(uf, provenance(cfg, "solve"));
        uf << "k,u_init,u_best\n";
        for (std::size_t k = 0; k < u0.size(); ++k) {
            uf << k << ',' << fmt_double(u0[k]) << ',' << fmt_double(res.u_best[k]) << '\n';
        }
        std::cout << "J_pen " << res.best.value << " J " << res.best.J << " violation " << res.best.violation << '\n';
    } else if (be->parsed()) {
        const auto cfg = resolve(be_c, [&](RunConfig& c) {
            if (!be_suite.empty()) c.paths.suite = be_suite;
            if (!be_surrogate.empty()) c.paths.surrogate = be_surrogate;
            if (!be_bc.empty()) c.paths.bc = be_bc;
            if (!be_strategies.empty()) c.bench.strategies = be_strategies;
        });
        const auto model = PwrModel::calibrate(cfg.model);
        const auto suite = read_bench_suite(require(cfg.paths.suite, "--suite"));
        std::vector<Strategy> strategies;
        for (const auto& s : cfg.bench.strategies) strategies.push_back(Strategy::parse(s));
        std::optional<SurrogateNet> net;
        std::optional<BcNet> bc;
        for (const auto& s : strategies) {
            if (s.kind == StrategyKind::Sdo && !net) net = SurrogateNet::load(require(cfg.paths.surrogate, "--surrogate"));
            if (s.kind == StrategyKind::Bc && !bc) bc = BcNet::load(require(cfg.paths.bc, "--bc"));
        }
        BenchArtifacts art{&model, net ? &*net : nullptr, bc ? &*bc : nullptr};
        const auto rep = run_benchmark(suite.scenarios, strategies, art, cfg.bench_options());
        const auto prov = provenance(cfg, "bench");
        auto f1 = open_out(out_file(cfg, "cells.csv"));
        write_cells_csv(f1, rep, prov);
        auto f2 = open_out(out_file(cfg, "gain_table.csv"));
        write_gain_table_csv(f2, rep, prov);
        auto f3 = open_out(out_file(cfg, "violation_table.csv"));
        write_violation_table_csv(f3, rep, prov);
        auto f4 = open_out(out_file(cfg, "timing.csv"));
        write_timing_csv(f4, rep, prov);
        for (const auto& l : rep.log) std::clog << "bench: " << l << '\n';
        for (const auto& s : rep.strategies) {
            for (auto k : {Perturbation::LoadChange, Perturbation::CostChange}) {
                const auto* a = rep.aggregate(s, k, cfg.budget.record_at.front());
                if (a) {
                    std::cout << s << ' ' << to_string(k) << " median dJ_rel,n" << a->n << " = " << a->summary.median
                              << '\n';
                }
            }
        }
    } else if (sw->parsed()) {
        const auto cfg = resolve(sw_c, [&](RunConfig& c) {
            if (!sw_data.empty()) c.paths.data = sw_data;
            if (!sw_suite.empty()) c.paths.suite = sw_suite;
        });
        const auto model = PwrModel::calibrate(cfg.model);
        const auto data = load_training_data(cfg);
        const auto suite = read_bench_suite(require(cfg.paths.suite, "--suite"));
        const auto rep = data_efficiency_sweep(model, data, suite.scenarios, cfg.sweep_options());
        auto f = open_out(out_file(cfg, "sweep.csv"));
        write_sweep_csv(f, rep, provenance(cfg, "sweep"));
        for (const auto& l : rep.log) std::clog << "sweep: " << l << '\n';
        for (const auto& [fr, rho] : rep.spearman) std::cout << "fraction " << fr << " spearman " << rho << '\n';
    } else if (vb->parsed()) {
        const auto cfg = resolve(vb_c);
        std::mt19937_64 rng(cfg.seed_for("verify_bound", 5));
        InstanceOptions io;
        io.max_dims = vb_max_dims;
        std::uniform_real_distribution<double> logM(-4.0, 0.0);
        std::vector<BoundCheck> rows;
        int failures = 0;
        for (int i = 0; i < vb_count; ++i) {
            const auto inst = make_instance(rng, std::pow(10.0, logM(rng)), io);
            rows.push_back(check_bounds(inst));
            failures += !(rows.back().dist_ok && rows.back().gap_ok);
        }
        auto f = open_out(out_file(cfg, "bound.csv"));
        write_bound_csv(f, rows, provenance(cfg, "verify-bound"));
        auto tf = open_out(out_file(cfg, "tightness.csv"));
        write_provenance(tf, provenance(cfg, "verify-bound"));
        tf << "instance,dims,ratio\n";
        for (int i = 0; i < 10; ++i) {
            const auto inst = make_instance(rng, 1e-2, io);
            tf << i << ',' << inst.dims << ',' << fmt_double(tightness_study(inst, rng, vb_trials).first) << '\n';
        }
        std::cout << rows.size() << " instances, " << failures << " bound violations\n";
        return failures == 0 ? 0 : 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "error: kind=config message=\"" << e.what() << "\"\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "error: kind=usage message=\"" << e.what() << "\"\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: kind=runtime message=\"" << e.what() << "\"\n";
        return 1;
    }
}
