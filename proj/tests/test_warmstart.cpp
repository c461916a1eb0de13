#include "sdo/datagen.hpp"
#include "sdo/warmstart.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace sdo;

namespace {

const PwrModel& model() {
    static const PwrModel m = PwrModel::calibrate(ModelParams{});
    return m;
}

ScenarioOptions small_options(int count, int N) {
    ScenarioOptions o;
    o.count = count;
    o.spec = OcpSpec::defaults_for(model().params());
    o.spec.N = N;
    o.history_steps = 12;
    o.expert_iterations = 10;
    return o;
}

const BenchSuite& suite() {
    static const BenchSuite s = gen_bench_suite(model(), small_options(4, 12));
    return s;
}

const SurrogateNet& quick_net() {
    static const SurrogateNet net = [] {
        const auto data = testing::pwr_windows(model(), 12, 40, 5);
        SurrogateConfig cfg;
        cfg.hidden = {16};
        cfg.L = 6;
        cfg.max_epochs = 5;
        cfg.batches_per_epoch = 10;
        return train_surrogate(data, cfg, PhysicsConsts::from(model().params(), 600.0)).net;
    }();
    return net;
}

}  // namespace

TEST_CASE("cold start and shift") {
    OcpSpec spec;
    spec.N = 144;
    const auto c = cold_start(spec);
    CHECK(c.size() == 144);
    for (double u : c) CHECK(u == 0.0);
    CHECK(cold_start(spec) == c);

    const ControlBox box{-1.0, 1.0};
    CHECK(shift_init({0.1, 0.2, 0.3}, box) == ControlSequence{0.2, 0.3, 0.0});
    CHECK(shift_init({0.0, 0.0, 0.0}, box) == ControlSequence{0.0, 0.0, 0.0});
    CHECK(shift_init({0.1, 0.2, 0.3}, ControlBox{0.05, 1.0}) == ControlSequence{0.2, 0.3, 0.05});
    CHECK(shift_init({-0.5, 0.9, 2.0}, ControlBox{-0.3, 0.4}) == ControlSequence{0.4, 0.4, 0.0});
}

TEST_CASE("refine from the trace start equals a direct evaluation") {
    const auto& sc = suite().scenarios.front();
    const auto u0 = shift_init(sc.u_prev, sc.spec.box);
    const OptResult r = refine_full(model(), sc, u0, 3);
    const FullEvaluation ev = evaluate_full(model(), u0, sc.x0(), sc.w, sc.spec);
    CHECK(r.trace.rows.front().J_pen == ev.J_pen);
    CHECK(r.trace.rows.front().J == ev.J);
    CHECK(r.trace.rows.size() == 4);
    for (double u : r.u_best) CHECK(sc.spec.box.contains(u));

    // Budget accounting: base evaluation, then per iteration N gradient probes
    // plus at most max_trials line-search evaluations.
    const std::uint64_t per_eval = static_cast<std::uint64_t>(sc.spec.N * model().params().n_sub);
    const auto& rows = r.trace.rows;
    CHECK(rows.front().sim_calls == per_eval);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const std::uint64_t spent = rows[i].sim_calls - rows[i - 1].sim_calls;
        CHECK(spent == per_eval * static_cast<std::uint64_t>(sc.spec.N + rows[i].line_search_evals));
    }

    std::vector<double> outside(u0.size(), 1.0);
    CHECK_THROWS_AS(refine_full(model(), sc, outside, 1), std::invalid_argument);
}

TEST_CASE("refining a converged solution stays flat") {
    // Equilibrium with the AO target at its own AO: u = 0 is optimal.
    OcpSpec spec = OcpSpec::defaults_for(model().params());
    spec.N = 6;
    const SimState x0 = model().steady_state(1.0);
    spec.AO_ref = axial_offset(x0.P);
    const LoadProfile w(6, 1.0);
    const OptResult r = refine_full(model(), x0, w, spec, cold_start(spec), 4);
    for (const auto& row : r.trace.rows) CHECK(row.best_J_pen <= 1e-20);
    CHECK(r.u_best == cold_start(spec));
}

TEST_CASE("surrogate objective gradient matches finite differences") {
    for (const auto& sc : suite().scenarios) {
        const auto prob = SurrogateProblem::from(quick_net(), sc, 10.0);
        std::vector<double> u(sc.spec.N);
        for (int k = 0; k < sc.spec.N; ++k) u[k] = 0.015 * std::sin(0.7 * k + sc.id);
        Evaluation at;
        const auto g = prob.gradient(u, &at);
        CHECK(at.value == prob.evaluate(u).value);
        std::vector<double> fd(u.size());
        for (std::size_t k = 0; k < u.size(); ++k) {
            auto p = u, q = u;
            p[k] += 1e-7;
            q[k] -= 1e-7;
            fd[k] = (prob.evaluate(p).value - prob.evaluate(q).value) / 2e-7;
        }
        CHECK(testing::max_rel_error(g, fd) <= 1e-4);
    }
}

TEST_CASE("sdo warm start") {
    const auto& sc = suite().scenarios[1];
    SdoOptions opt;
    opt.fraction = 0.0;
    const SdoResult none = sdo_warmstart(quick_net(), sc, opt);
    CHECK(none.u == cold_start(sc.spec));
    CHECK(none.iterations == 0);

    opt.fraction = 0.05;
    const SdoResult r = sdo_warmstart(quick_net(), sc, opt);
    CHECK_FALSE(r.fell_back);
    CHECK(r.iterations > 0);
    CHECK(r.used_units <= r.budget_units);
    CHECK(r.budget_units == doctest::Approx(0.05 * 20 * (sc.spec.N + 2)));
    for (double u : r.u) CHECK(sc.spec.box.contains(u));
    const auto prob = SurrogateProblem::from(quick_net(), sc, opt.nu);
    CHECK(prob.evaluate(r.u).value <= prob.evaluate(cold_start(sc.spec)).value);
    CHECK(r.best.value <= r.start.value);

    // A larger budget never ends worse on the surrogate objective.
    opt.fraction = 0.2;
    CHECK(sdo_warmstart(quick_net(), sc, opt).best.value <= r.best.value);

    // A window the scenario cannot supply: fall back to cold with a warning.
    SurrogateConfig wide;
    wide.H = 3;
    wide.hidden = {4};
    const auto data = testing::pwr_windows(model(), 3, 20, 2);
    const SurrogateNet h3 = testing::fitted_net(data, wide, 1);
    opt.fraction = 0.05;
    const SdoResult fb = sdo_warmstart(h3, sc, opt);
    CHECK(fb.fell_back);
    CHECK(fb.u == cold_start(sc.spec));
    CHECK_FALSE(fb.warning.empty());
}

TEST_CASE("behavior cloning memorizes a tiny dataset") {
    std::vector<BcSample> data;
    for (const auto& sc : suite().scenarios) {
        data.push_back({sc, refine_full(model(), sc, cold_start(sc.spec), 5).u_best});
    }
    auto more = gen_bench_suite(model(), [] {
        auto o = small_options(1, 12);
        o.seed = 99;
        return o;
    }());
    data.push_back({more.scenarios[0], refine_full(model(), more.scenarios[0], cold_start(more.scenarios[0].spec), 5).u_best});
    REQUIRE(data.size() == 5);

    BcConfig cfg;
    cfg.hidden = {32};
    cfg.epochs = 4000;
    cfg.lr = 3e-3;
    const BcNet a = bc_train(data, cfg, 1234);
    CHECK(a.train_loss < 1e-4);
    CHECK(a.dataset_sim_calls == 1234);
    CHECK(a.horizon() == 12);
    for (const auto& s : data) {
        const auto u = a.predict(s.scenario);
        CHECK(u.size() == 12);
        for (double v : u) CHECK(s.scenario.spec.box.contains(v));
    }

    cfg.epochs = 50;
    cfg.seed = 2;
    const BcNet b = bc_train(data, cfg, 0);
    cfg.seed = 3;
    const BcNet c = bc_train(data, cfg, 0);
    CHECK(b.mlp().sizes() == c.mlp().sizes());
    CHECK(b.mlp().get_params() != c.mlp().get_params());

    const BcNet round = BcNet::from_json(a.to_json());
    CHECK(round.predict(data[0].scenario) == a.predict(data[0].scenario));
    CHECK_THROWS_AS(bc_train({data[0]}, cfg, 0), std::invalid_argument);
}

TEST_CASE("scenario serialization") {
    for (const auto& sc : suite().scenarios) {
        const Scenario back = scenario_from_json(to_json(sc));
        CHECK(back.id == sc.id);
        CHECK(back.kind == sc.kind);
        CHECK(back.context == sc.context);
        CHECK(back.w == sc.w);
        CHECK(back.u_prev == sc.u_prev);
        CHECK(back.spec.cost_kind == sc.spec.cost_kind);
        CHECK(back.spec.boron_scale == sc.spec.boron_scale);
    }
    CHECK(perturbation_from_string(to_string(Perturbation::CostChange)) == Perturbation::CostChange);
    CHECK(budget_mode_from_string(to_string(BudgetMode::WallClock)) == BudgetMode::WallClock);
}
