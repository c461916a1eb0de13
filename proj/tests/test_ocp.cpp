#include "sdo/ocp.hpp"

#include <doctest.h>

#include <random>

using namespace sdo;

namespace {

const PwrModel& model() {
    static const PwrModel m = PwrModel::calibrate(ModelParams{});
    return m;
}

std::vector<double> random_u(std::mt19937_64& rng, int N, const ControlBox& box) {
    std::uniform_real_distribution<double> d(box.lo, box.hi);
    std::vector<double> u(N);
    for (double& x : u) x = d(rng);
    return u;
}

}  // namespace

TEST_CASE("axial offset") {
    CHECK(axial_offset(std::vector<double>{1, 1, 1, 1}) == 0.0);
    CHECK(axial_offset(std::vector<double>{2, 2, 1, 1}) == doctest::Approx(1.0 / 3.0));
    CHECK(axial_offset(std::vector<double>{0.1, 0.1, 0.1, 0.7}) == doctest::Approx(-0.6));
    CHECK_THROWS_AS(axial_offset(std::vector<double>{0, 0, 0, 0}), std::domain_error);

    const std::vector<double> P{0.3, 0.15, 0.2, 0.1, 0.12, 0.13};
    const auto g = axial_offset_grad(P);
    for (std::size_t j = 0; j < P.size(); ++j) {
        auto hi = P, lo = P;
        hi[j] += 1e-6;
        lo[j] -= 1e-6;
        CHECK(g[j] == doctest::Approx((axial_offset(hi) - axial_offset(lo)) / 2e-6).epsilon(1e-7));
    }
}

TEST_CASE("stage cost") {
    OcpSpec spec;
    SimState prev, next;
    next.P = {0.3, 0.3, 0.2, 0.2};  // AO = 0.2
    prev.P = next.P;
    prev.C_b = next.C_b = 812.0;

    spec.AO_ref = 0.2;
    CHECK(stage_cost(next, prev, 0.0, spec) == doctest::Approx(0.0));

    next.P = {0.2625, 0.2625, 0.2375, 0.2375};  // AO = 0.05
    spec.AO_ref = -0.05;
    CHECK(stage_cost(next, prev, 0.0, spec) == doctest::Approx(0.01));

    spec.cost_kind = CostKind::BoronSmoothness;
    CHECK(stage_cost(next, prev, 0.0, spec) == 0.0);
    next.C_b = prev.C_b + 2.0 * spec.boron_scale;
    CHECK(stage_cost(next, prev, 0.0, spec) == doctest::Approx(4.0));
}

TEST_CASE("violation is the positive part of the band") {
    OcpSpec spec;
    CHECK(ao_violation(0.0, spec) == 0.0);
    CHECK(ao_violation(0.05, spec) == 0.0);
    CHECK(ao_violation(0.08, spec) == doctest::Approx(0.03));
    CHECK(ao_violation(-0.11, spec) == doctest::Approx(0.06));
}

TEST_CASE("spec validation") {
    OcpSpec s;
    s.N = 0;
    s.AO_min = 0.1;
    s.AO_max = 0.0;
    s.nu = -1.0;
    try {
        s.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string m = e.what();
        CHECK(m.find("N must") != std::string::npos);
        CHECK(m.find("AO_min") != std::string::npos);
        CHECK(m.find("nu") != std::string::npos);
    }
    CHECK(cost_kind_from_string(to_string(CostKind::BoronSmoothness)) == CostKind::BoronSmoothness);
    CHECK_THROWS_AS(cost_kind_from_string("nope"), ConfigError);
}

TEST_CASE("equilibrium has zero cost") {
    const auto& m = model();
    OcpSpec spec = OcpSpec::defaults_for(m.params());
    spec.N = 24;
    const SimState x0 = m.steady_state(1.0);
    spec.AO_ref = axial_offset(x0.P);
    const std::vector<double> u(spec.N, 0.0), w(spec.N, 1.0);
    const FullEvaluation ev = evaluate_full(m, u, x0, w, spec);
    CHECK(ev.J <= 1e-18);
    CHECK(ev.violation_sum == 0.0);
    spec.cost_kind = CostKind::BoronSmoothness;
    CHECK(evaluate_full(m, u, x0, w, spec).J <= 1e-18);
}

TEST_CASE("penalized cost properties") {
    const auto& m = model();
    std::mt19937_64 rng(5);
    OcpSpec spec = OcpSpec::defaults_for(m.params());
    spec.N = 36;
    const SimState x0 = m.steady_state(0.8);
    const std::vector<double> w(spec.N, 0.8);
    for (int trial = 0; trial < 4; ++trial) {
        const auto u = random_u(rng, spec.N, spec.box);
        for (CostKind kind : {CostKind::AxialOffsetTarget, CostKind::BoronSmoothness}) {
            spec.cost_kind = kind;
            CallCounter local;
            spec.nu = 100.0;
            const FullEvaluation a = evaluate_full(m, u, x0, w, spec, &local);
            CHECK(local.value() == static_cast<std::uint64_t>(spec.N * m.params().n_sub));
            CHECK(a.J >= 0.0);
            CHECK(a.J_pen >= a.J);
            CHECK((a.J_pen == a.J) == (a.violation_sum == 0.0));
            double prev = -1.0;
            for (double nu : {0.0, 1.0, 10.0, 100.0, 1000.0}) {
                spec.nu = nu;
                const double jp = evaluate_full(m, u, x0, w, spec).J_pen;
                CHECK(jp >= prev);
                prev = jp;
            }
            spec.nu = 100.0;
            const FullEvaluation b = evaluate_full(m, u, x0, w, spec);
            CHECK(b.J_pen == a.J_pen);
            CHECK(b.violations == a.violations);
        }
    }
}

TEST_CASE("one-step horizon is a single stage cost") {
    const auto& m = model();
    OcpSpec spec = OcpSpec::defaults_for(m.params());
    spec.N = 1;
    spec.AO_ref = 0.01;
    const SimState x0 = m.steady_state(0.9);
    const std::vector<double> u{0.015}, w{0.85};
    const FullEvaluation ev = evaluate_full(m, u, x0, w, spec);
    const SimState x1 = m.step(x0, u[0], w[0], spec.dt);
    CHECK(ev.J == stage_cost(x1, x0, u[0], spec));
    CHECK(ev.trajectory.states.size() == 2);
    CHECK_THROWS_AS(evaluate_full(m, std::vector<double>{0.0, 0.0}, x0, w, spec), std::invalid_argument);
}
