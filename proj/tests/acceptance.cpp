// Acceptance run: one PASS/FAIL line per criterion, artifacts under --out.

#include "sdo/bench.hpp"
#include "sdo/bound_check.hpp"
#include "sdo/config.hpp"
#include "sdo/io.hpp"
#include "support.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace sdo;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool ok, const std::string& what) {
    failures += !ok;
    std::printf("[%s] %2d %s\n", ok ? "PASS" : "FAIL", id, what.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::ofstream open(const fs::path& p) {
    fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    return f;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

double total(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

// Criterion 1.
struct HoldResult {
    double drift = 0.0;
    double residual = 0.0;
    double seconds = 0.0;
};

HoldResult steady_hold(const PwrModel& m, const fs::path& dir) {
    const auto t0 = Clock::now();
    const SimState s0 = m.steady_state(1.0);
    const std::vector<double> u(144, 0.0), w(144, 1.0);
    const Trajectory t = m.simulate(s0, u, w, 600.0);
    HoldResult r;
    r.seconds = since(t0);
    const auto ref = s0.to_vector();
    for (const auto& s : t.states) {
        const auto v = s.to_vector();
        for (std::size_t i = 0; i < v.size(); ++i) {
            r.drift = std::max(r.drift, std::abs(v[i] - ref[i]) / std::abs(ref[i]));
        }
        r.residual = std::max(r.residual, m.algebraic_residual(s, 1.0).lpNorm<Eigen::Infinity>());
    }
    write_trajectory_csv((dir / "steady_hold.csv").string(), t, "steady state w=1 u=0");
    return r;
}

// Criterion 5.
struct BoundResult {
    int violations = 0;
    int count = 0;
    double worst_dist_ratio = 0.0;
    double worst_zero_gap = 0.0;
    double seconds = 0.0;
};

BoundResult bound_study(const fs::path& dir) {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> logM(-4.0, 0.0);
    BoundResult r;
    std::vector<BoundCheck> rows;
    for (int i = 0; i < 100; ++i) {
        const auto inst = make_instance(rng, std::pow(10.0, logM(rng)));
        rows.push_back(check_bounds(inst));
        r.violations += !(rows.back().dist_ok && rows.back().gap_ok);
        r.worst_dist_ratio = std::max(r.worst_dist_ratio, rows.back().dist_ratio());
        const auto zero = with_gap(inst, 0.0);
        r.worst_zero_gap = std::max(r.worst_zero_gap, (zero.u_star() - zero.u_hat()).norm());
    }
    r.count = static_cast<int>(rows.size());
    auto f = open(dir / "bound.csv");
    write_bound_csv(f, rows, {{"run", "acceptance"}, {"seed", "2024"}});
    r.seconds = since(t0);
    return r;
}

// Criteria 6-9, 11: datasets, surrogate, BC and the benchmark.
struct Pipeline {
    std::vector<TrajectoryData> data;
    BenchSuite suite;
    DatasetManifest surrogate_manifest;
    DatasetManifest bc_manifest;
    std::optional<SurrogateNet> net;
    std::optional<BcNet> bc;
    BenchReport report;
    double seconds = 0.0;
};

Pipeline run_pipeline(const PwrModel& m, const RunConfig& cfg, const fs::path& dir) {
    const auto t0 = Clock::now();
    Pipeline p;
    const Provenance prov{{"run", "acceptance"}, {"config", cfg.hash()}};

    auto ds = gen_surrogate_dataset(m, cfg.surrogate_data_options());
    p.surrogate_manifest = ds.manifest;
    for (const auto& t : ds.trajectories) p.data.push_back(TrajectoryData::from(t));
    ds.trajectories.clear();
    std::clog << "  surrogate data: " << p.data.size() << " trajectories, " << since(t0) << " s\n";

    p.suite = gen_bench_suite(m, cfg.scenario_options());
    write_bench_suite((dir / "suite").string(), p.suite);
    std::clog << "  bench suite: " << p.suite.scenarios.size() << " scenarios, " << since(t0) << " s\n";

    const auto bcd = gen_bc_dataset(m, cfg.bc_data_options());
    p.bc_manifest = bcd.manifest;
    p.bc = bc_train(bcd.samples, cfg.bc_config(), bcd.manifest.sim_calls);
    p.bc->save((dir / "bc.json").string());
    std::clog << "  bc: " << bcd.samples.size() << " samples, " << since(t0) << " s\n";

    auto log = open(dir / "training.csv");
    write_provenance(log, prov);
    log << "epoch,train_loss,val_mse_1,val_mse_L\n";
    auto tr = train_surrogate(p.data, cfg.surrogate_config(), PhysicsConsts::from(cfg.model, cfg.ocp.dt),
                              [&](const TrainEpoch& e, const SurrogateNet&) {
                                  log << e.epoch << ',' << fmt_double(e.train_loss) << ',' << fmt_double(e.val_mse_1)
                                      << ',' << fmt_double(e.val_mse_L) << '\n';
                              });
    p.net = std::move(tr.net);
    p.net->save((dir / "surrogate.json").string());
    std::clog << "  surrogate: best epoch " << tr.record.best_epoch << ", " << since(t0) << " s\n";

    std::vector<Strategy> strategies;
    for (const auto& s : cfg.bench.strategies) strategies.push_back(Strategy::parse(s));
    p.report = run_benchmark(p.suite.scenarios, strategies, {&m, &*p.net, &*p.bc}, cfg.bench_options());
    for (const auto& l : p.report.log) std::clog << "  bench: " << l << '\n';
    auto f1 = open(dir / "cells.csv");
    write_cells_csv(f1, p.report, prov);
    auto f2 = open(dir / "gain_table.csv");
    write_gain_table_csv(f2, p.report, prov);
    auto f3 = open(dir / "violation_table.csv");
    write_violation_table_csv(f3, p.report, prov);
    p.seconds = since(t0);
    std::clog << "  bench done, " << p.seconds << " s\n";
    return p;
}

double median_of(const BenchReport& r, const std::string& s, Perturbation k, int n) {
    const auto* a = r.aggregate(s, k, n);
    return a ? a->summary.median : std::nan("");
}

double worst_of(const BenchReport& r, const std::string& s, Perturbation k, int n) {
    const auto* a = r.aggregate(s, k, n);
    return a ? a->summary.worst : std::nan("");
}

bool same_files(const fs::path& a, const fs::path& b, const std::vector<std::string>& names, std::string& diff) {
    for (const auto& n : names) {
        if (!fs::exists(a / n) || slurp(a / n) != slurp(b / n)) {
            diff += " " + n;
        }
    }
    return diff.empty();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::string out = "acceptance_out";
    app.add_option("--out", out, "artifact directory");
    CLI11_PARSE(app, argc, argv);

    const fs::path root(out);
    fs::remove_all(root);
    const fs::path run1 = root / "run1", run2 = root / "run2";
    fs::create_directories(run1);
    fs::create_directories(run2);

    const RunConfig cfg;
    const PwrModel m = PwrModel::calibrate(cfg.model);

    // 1. Equilibrium hold.
    const HoldResult hold = steady_hold(m, run1);
    report(1, hold.drift <= 1e-8 && hold.residual <= 1e-10 && hold.seconds < 5.0,
           fmt("steady-state hold: drift %.2e (<= 1e-8), residual %.2e (<= 1e-10), %.2f s (< 5 s)", hold.drift,
               hold.residual, hold.seconds));

    // 2. Xenon transient after a 1.0 -> 0.7 load step.
    {
        const auto t0 = Clock::now();
        const SimState s0 = m.steady_state(1.0);
        const int steps = 48 * 6;
        const Trajectory t = m.simulate(s0, std::vector<double>(steps, 0.0), std::vector<double>(steps, 0.7), 600.0);
        const double secs = since(t0);
        const double X0 = total(s0.X);
        int peak = 0;
        for (int k = 0; k <= steps; ++k) {
            if (total(t.states[k].X) > total(t.states[peak].X)) peak = k;
        }
        int below = -1;
        for (int k = peak; k <= steps && below < 0; ++k) {
            if (total(t.states[k].X) < X0) below = k;
        }
        write_trajectory_csv((run1 / "xenon_transient.csv").string(), t, "load step 1.0 -> 0.7 u=0");
        const double peak_h = peak / 6.0, below_h = below / 6.0;
        report(2, peak_h >= 4.0 && peak_h <= 12.0 && below >= 0 && secs < 10.0,
               fmt("xenon transient: peak at %.2f h (4-12 h), below pre-step value at %.2f h (<= 48 h), %.2f s (< 10 s)",
                   peak_h, below >= 0 ? below_h : std::nan(""), secs));
    }

    // 3. Surrogate gradients, tiny net.
    {
        const auto t0 = Clock::now();
        const auto data = testing::pwr_windows(m, 6, 30, 31);
        SurrogateConfig sc;
        sc.hidden = {2};
        sc.L = 3;
        const auto net = testing::fitted_net(data, sc, 3);
        const auto g = testing::check_surrogate_gradients(net, data, 5);
        const double secs = since(t0);
        const std::size_t probes = g.param_probes + g.input_probes;
        report(3, g.param_rel <= 1e-5 && g.input_rel <= 1e-5 && probes >= 50 && secs < 30.0,
               fmt("surrogate gradients vs central differences: parameter %.2e, input %.2e (<= 1e-5), %zu probes "
                   "(>= 50), %.2f s (< 30 s)",
                   g.param_rel, g.input_rel, probes, secs));
    }

    // 4. Full-scale forward-difference gradient vs a 10x finer central difference.
    {
        const auto t0 = Clock::now();
        std::mt19937_64 rng(404);
        OcpSpec spec = cfg.ocp;
        spec.N = 24;
        std::uniform_real_distribution<double> du(spec.box.lo, spec.box.hi), dw(0.5, 1.0);
        double worst = 0.0;
        for (int trial = 0; trial < 5; ++trial) {
            const double w0 = dw(rng);
            const LoadProfile w = sample_load_profile(rng, spec.N, spec.dt, {}, w0);
            FullProblem prob{&m, m.steady_state(w0), w, spec, nullptr};
            std::vector<double> u(spec.N);
            for (double& v : u) v = du(rng);
            const Evaluation at = prob.evaluate(u);
            const auto g = prob.gradient(u, at, cfg.bench_options().refine);
            FdOptions fine;
            fine.rel_step = cfg.bench.fd_rel_step / 10.0;
            fine.u_scale = 0.5 * (spec.box.hi - spec.box.lo);
            fine.central = true;
            const auto ref = fd_gradient([&](std::span<const double> v) { return prob.evaluate(v).value; }, u, fine);
            double num = 0.0, den = 0.0;
            for (std::size_t k = 0; k < u.size(); ++k) {
                num = std::max(num, std::abs(g[k] - ref[k]));
                den = std::max(den, std::abs(ref[k]));
            }
            worst = std::max(worst, num / den);
        }
        const double secs = since(t0);
        report(4, worst <= 1e-3 && secs < 300.0,
               fmt("full-scale gradient, N=24, 5 controls: relative inf-norm error %.2e (<= 1e-3), %.2f s (< 300 s)",
                   worst, secs));
    }

    // 5. Warm-start bounds on random quadratic problems.
    const BoundResult bound = bound_study(run1);
    report(5, bound.violations == 0 && bound.worst_zero_gap <= 1e-10 && bound.seconds < 60.0,
           fmt("quadratic bounds: %d/%d violations, max dist/bound %.3f, M=0 minimizer gap %.2e (<= 1e-10), %.2f s "
               "(< 60 s)",
               bound.violations, bound.count, bound.worst_dist_ratio, bound.worst_zero_gap, bound.seconds));

    // 6-9, 11.
    std::clog << "pipeline (first run)\n";
    const Pipeline p = run_pipeline(m, cfg, run1);
    const auto& r = p.report;
    const auto Load = Perturbation::LoadChange, Cost = Perturbation::CostChange;
    {
        const double sdo_load = median_of(r, "sdo_5", Load, 5);
        const double shift_load = median_of(r, "shift", Load, 5);
        const double sdo_cost = median_of(r, "sdo_5", Cost, 5);
        report(6, sdo_load > shift_load && sdo_load > 0 && sdo_cost > 0 && p.seconds < 3600.0,
               fmt("median dJ_rel,5: sdo_5 %.3f > shift %.3f (load change), sdo_5 %.3f > 0 (cost change), suite "
                   "%.0f s (< 3600 s)",
                   sdo_load, shift_load, sdo_cost, p.seconds));
    }
    {
        const double sdo_min = worst_of(r, "sdo_5", Load, 20);
        const double shift_min = worst_of(r, "shift", Load, 20);
        report(7, sdo_min > shift_min,
               fmt("worst dJ_rel,20 under load change: sdo_5 %.3f > shift %.3f", sdo_min, shift_min));
    }
    {
        double worst_p = 0.0;
        std::string detail;
        for (const std::string s : {"sdo_1", "sdo_5"}) {
            const auto* v = r.violation(s, "all", 10);
            const double pr = v ? v->stats.probability : std::nan("");
            worst_p = std::isnan(pr) ? pr : std::max(worst_p, pr);
            detail += fmt(" %s %.0f%%", s.c_str(), 100.0 * pr);
        }
        report(8, worst_p == 0.0, "P(h+ > 0) at n=10 for SDO-refined solutions:" + detail + " (= 0%)");
    }
    {
        const double bc = p.bc_manifest.sim_calls_per_item();
        const double surr = p.surrogate_manifest.sim_calls_per_item();
        report(9, bc >= 100.0 * surr,
               fmt("simulator calls per trajectory: bc %.0f >= 100 x surrogate %.0f (ratio %.0f)", bc, surr,
                   bc / surr));
    }

    // 10. Data-efficiency sweep on the same data and suite.
    {
        std::clog << "data-efficiency sweep\n";
        const auto t0 = Clock::now();
        const SweepReport sw = data_efficiency_sweep(m, p.data, p.suite.scenarios, cfg.sweep_options());
        const double secs = since(t0);
        for (const auto& l : sw.log) std::clog << "  sweep: " << l << '\n';
        auto f = open(run1 / "sweep.csv");
        write_sweep_csv(f, sw, {{"run", "acceptance"}, {"config", cfg.hash()}});
        const auto* lo = sw.final_point(cfg.sweep.fractions.front());
        const auto* hi = sw.final_point(cfg.sweep.fractions.back());
        double rho = std::nan("");
        for (const auto& [fr, v] : sw.spearman) {
            if (fr == cfg.sweep.fractions.back()) rho = v;
        }
        const double g_lo = lo ? lo->gain.median : std::nan("");
        const double g_hi = hi ? hi->gain.median : std::nan("");
        report(10, g_hi > g_lo && rho < 0 && secs < 7200.0,
               fmt("data efficiency: final median dJ_rel,5 %.3f at 100%% > %.3f at 10%%, spearman(val MSE, gain) "
                   "%.3f (< 0), %.0f s (< 7200 s)",
                   g_hi, g_lo, rho, secs));
    }

    {
        int nonzero = 0, dropped = 0, seen = 0;
        for (const auto& c : r.cells) {
            if (c.strategy != "cold") continue;
            for (double d : c.delta) {
                ++seen;
                if (std::isnan(d)) ++dropped;
                else if (d != 0.0) ++nonzero;
            }
        }
        report(11, nonzero == 0 && dropped == 0 && seen > 0,
               fmt("cold dJ_rel identically zero: %d nonzero, %d dropped of %d", nonzero, dropped, seen));
    }

    // 12. Repeat criteria 1, 5 and 6 into a second directory.
    {
        std::clog << "repeat run\n";
        steady_hold(m, run2);
        bound_study(run2);
        run_pipeline(m, cfg, run2);
        std::string diff;
        const bool same = same_files(run1, run2,
                                     {"steady_hold.csv", "bound.csv", "cells.csv", "gain_table.csv",
                                      "violation_table.csv", "training.csv", "surrogate.json", "bc.json"},
                                     diff);
        report(12, same, same ? "repeat run: all CSVs and artifacts byte-identical" : "repeat run differs:" + diff);
    }

    std::printf("%d of 12 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
