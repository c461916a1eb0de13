#pragma once

// Synthetic linear-quadratic problems with a surrogate whose roll-out gap is
// known exactly, used to check the warm-start distance and value bounds:
//   |u* - u^| <= 2 sqrt(K_J M / mu),   J(u^|Phi) - J(u*|Phi) <= 2 K_J M.

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace sdo {

/// min 0.5 u'Hu + g'u subject to lo <= u <= hi, solved exactly by enumerating
/// every (lower, upper, free) assignment. Intended for dims <= ~8.
Eigen::VectorXd box_qp_exact(const Eigen::MatrixXd& H, const Eigen::VectorXd& g, const Eigen::VectorXd& lo,
                             const Eigen::VectorXd& hi);

/// Roll-outs are affine in u: Y(u) = G u + c (true), Y^(u) = Y(u) + E u + f
/// (surrogate). Cost J(u|Y) = 0.5 |Y - y_ref|^2_Q + 0.5 rho |u|^2.
struct QuadraticInstance {
    int dims = 0;    // control dimension (= horizon, scalar input)
    int n_x = 0;     // state dimension
    Eigen::MatrixXd A, B;
    Eigen::MatrixXd G;
    Eigen::VectorXd c;
    Eigen::MatrixXd E;
    Eigen::VectorXd f;
    Eigen::MatrixXd Q;  // symmetric positive semidefinite, output weight
    Eigen::VectorXd y_ref;
    double rho = 0.0;
    Eigen::VectorXd lo, hi;

    double M = 0.0;    // max over the box of |E u + f|_2
    double mu = 0.0;   // smallest eigenvalue of the true Hessian
    double K_J = 0.0;  // Lipschitz bound of the output cost over the reachable box

    Eigen::MatrixXd hessian_true() const;
    Eigen::MatrixXd hessian_surrogate() const;
    double J_true(const Eigen::VectorXd& u) const;
    double J_surrogate(const Eigen::VectorXd& u) const;
    Eigen::VectorXd u_star() const;
    Eigen::VectorXd u_hat() const;
    /// max over box vertices of |E u + f|_2 (exact: convex in u).
    double gap_sup() const;
};

struct InstanceOptions {
    int min_dims = 1;
    int max_dims = 6;
    int max_states = 3;
    double rho_min = 1e-2;
    double rho_max = 1.0;
};

/// Random stable dynamics, cost and a gap field scaled so that its supremum
/// over the box equals M_target exactly. Degenerate draws are resampled.
QuadraticInstance make_instance(std::mt19937_64& rng, double M_target, const InstanceOptions& opt = {});

/// Rescales the gap field of an instance to a new supremum (E and f scaled jointly).
QuadraticInstance with_gap(const QuadraticInstance& inst, double M);

/// Recomputes K_J by interval arithmetic on the box enclosing Y(U) and Y^(U).
double lipschitz_bound(const QuadraticInstance& inst);

struct BoundCheck {
    double M = 0.0, mu = 0.0, K_J = 0.0;
    double dist = 0.0, dist_bound = 0.0;
    double gap = 0.0, gap_bound = 0.0;
    bool dist_ok = false, gap_ok = false;

    double dist_margin() const { return dist_bound - dist; }
    double gap_margin() const { return gap_bound - gap; }
    double dist_ratio() const { return dist_bound > 0 ? dist / dist_bound : 0.0; }
};

BoundCheck check_bounds(const QuadraticInstance& inst);

/// For a fixed instance, the largest dist/dist_bound over `trials` constant gap
/// directions of norm M (adversarial search by sampling).
std::pair<double, BoundCheck> tightness_study(const QuadraticInstance& inst, std::mt19937_64& rng, int trials);

struct MSweepRow {
    double M = 0.0;
    double max_dist = 0.0;
    double dist_bound = 0.0;
};

/// Distances for gap fields M * (E, f) / M0 along each of `directions` random
/// fields; max_dist is the maximum over directions.
std::vector<MSweepRow> m_sweep(std::mt19937_64& rng, const std::vector<double>& Ms, int directions,
                               const InstanceOptions& opt = {});

void write_bound_csv(std::ostream& os, const std::vector<BoundCheck>& rows,
                     const std::vector<std::pair<std::string, std::string>>& prov);

}  // namespace sdo
