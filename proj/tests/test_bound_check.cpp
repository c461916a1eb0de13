#include "sdo/bound_check.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace sdo;

namespace {

// Projected gradient with step 1/L, run long enough to converge on small problems.
Eigen::VectorXd projected_gradient(const Eigen::MatrixXd& H, const Eigen::VectorXd& g, const Eigen::VectorXd& lo,
                                   const Eigen::VectorXd& hi) {
    const double L = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(H).eigenvalues().maxCoeff();
    Eigen::VectorXd u = 0.5 * (lo + hi);
    for (int it = 0; it < 200000; ++it) {
        const Eigen::VectorXd next = (u - (H * u + g) / L).cwiseMax(lo).cwiseMin(hi);
        if ((next - u).lpNorm<Eigen::Infinity>() < 1e-15) break;
        u = next;
    }
    return u;
}

}  // namespace

TEST_CASE("exact box QP agrees with projected gradient") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 40; ++trial) {
        const int d = 1 + trial % 5;
        Eigen::MatrixXd R(d, d);
        for (Eigen::Index i = 0; i < R.size(); ++i) R.data()[i] = nd(rng);
        const Eigen::MatrixXd H = R * R.transpose() + 0.2 * Eigen::MatrixXd::Identity(d, d);
        Eigen::VectorXd g(d), lo(d), hi(d);
        for (int i = 0; i < d; ++i) {
            g(i) = 3.0 * nd(rng);
            lo(i) = -0.5 - std::abs(nd(rng));
            hi(i) = 0.5 + std::abs(nd(rng));
        }
        const Eigen::VectorXd a = box_qp_exact(H, g, lo, hi);
        const Eigen::VectorXd b = projected_gradient(H, g, lo, hi);
        CHECK((a - b).lpNorm<Eigen::Infinity>() < 1e-8);
        CHECK((a.array() >= lo.array()).all());
        CHECK((a.array() <= hi.array()).all());
    }
}

TEST_CASE("instance construction") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const QuadraticInstance inst = make_instance(rng, 0.05 + trial * 0.02);
        CHECK(inst.dims >= 1);
        CHECK(inst.dims <= 6);
        CHECK(inst.M == doctest::Approx(0.05 + trial * 0.02).epsilon(1e-12));
        CHECK(inst.gap_sup() == doctest::Approx(inst.M).epsilon(1e-12));

        const Eigen::VectorXd eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(inst.hessian_true()).eigenvalues();
        CHECK(std::abs(inst.mu - eig.minCoeff()) <= 1e-10);
        CHECK(inst.mu > 0.0);
        CHECK(inst.K_J == doctest::Approx(lipschitz_bound(inst)));

        // Sampled gap never exceeds the supremum.
        double worst = 0.0;
        Eigen::VectorXd u(inst.dims);
        for (int s = 0; s < 100000 / 10; ++s) {
            for (int i = 0; i < inst.dims; ++i) u(i) = inst.lo(i) + unif(rng) * (inst.hi(i) - inst.lo(i));
            worst = std::max(worst, (inst.E * u + inst.f).norm());
        }
        CHECK(worst <= inst.M * (1 + 1e-12));
    }
}

TEST_CASE("sampled gap over 1e5 points on one instance") {
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const QuadraticInstance inst = make_instance(rng, 0.3);
    Eigen::VectorXd u(inst.dims);
    double worst = 0.0;
    for (int s = 0; s < 100000; ++s) {
        for (int i = 0; i < inst.dims; ++i) u(i) = inst.lo(i) + unif(rng) * (inst.hi(i) - inst.lo(i));
        worst = std::max(worst, (inst.E * u + inst.f).norm());
    }
    CHECK(worst <= 0.3 * (1 + 1e-12));
}

TEST_CASE("zero gap gives identical minimizers") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const QuadraticInstance inst = with_gap(make_instance(rng, 0.2), 0.0);
        CHECK(inst.M == 0.0);
        const BoundCheck b = check_bounds(inst);
        CHECK(b.dist <= 1e-10);
        CHECK(std::abs(b.gap) <= 1e-10);
        CHECK(b.dist_ok);
        CHECK(b.gap_ok);
    }
    std::mt19937_64 r0(5);
    const QuadraticInstance z = make_instance(r0, 0.0);
    CHECK((z.u_star() - z.u_hat()).norm() <= 1e-10);
}

TEST_CASE("both bounds hold on random instances") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> logm(-3.0, 0.0);
    for (int trial = 0; trial < 100; ++trial) {
        const QuadraticInstance inst = make_instance(rng, std::pow(10.0, logm(rng)));
        const BoundCheck b = check_bounds(inst);
        CHECK(b.dist_ok);
        CHECK(b.gap_ok);
        CHECK(b.gap >= -1e-12);  // u* is the true minimizer
        CHECK(b.dist_bound == doctest::Approx(2.0 * std::sqrt(b.K_J * b.M / b.mu)));
    }
}

TEST_CASE("distance bound scales with the square root of M") {
    std::mt19937_64 rng(13);
    const QuadraticInstance inst = make_instance(rng, 0.1);
    const BoundCheck a = check_bounds(inst);
    const BoundCheck b = check_bounds(with_gap(inst, 0.4));
    CHECK(b.M == doctest::Approx(4 * a.M));
    // The bound formula itself at fixed K_J and mu.
    CHECK(2.0 * std::sqrt(a.K_J * b.M / a.mu) == doctest::Approx(2.0 * a.dist_bound));
    // K_J can only grow as the surrogate outputs move further away.
    CHECK(b.K_J >= a.K_J);
    CHECK(b.dist_bound >= 2.0 * a.dist_bound);
}

TEST_CASE("tightness study stays within the bound") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        const QuadraticInstance inst = make_instance(rng, 0.05);
        const auto [ratio, b] = tightness_study(inst, rng, 20);
        CHECK(ratio >= 0.0);
        CHECK(ratio <= 1.0);
        CHECK(b.dist_ok);
    }
}

TEST_CASE("distance grows with M along fixed gap fields") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        std::mt19937_64 rng(seed);
        const auto rows = m_sweep(rng, {0.0, 0.01, 0.03, 0.1, 0.3, 1.0}, 8);
        CHECK(rows.front().max_dist <= 1e-10);
        for (std::size_t i = 1; i < rows.size(); ++i) {
            CHECK(rows[i].max_dist >= rows[i - 1].max_dist - 1e-12);
            CHECK(rows[i].max_dist <= rows[i].dist_bound);
        }
    }
}

TEST_CASE("csv output") {
    std::mt19937_64 rng(1);
    const auto b = check_bounds(make_instance(rng, 0.1));
    std::ostringstream os;
    write_bound_csv(os, {b}, {{"seed", "1"}});
    const std::string s = os.str();
    CHECK(s.rfind("# seed=1", 0) == 0);
    CHECK(s.find("M,mu,K_J,dist,dist_bound,dist_margin,gap,gap_bound,gap_margin") != std::string::npos);
    CHECK_THROWS_AS(make_instance(rng, -1.0), std::invalid_argument);
}
