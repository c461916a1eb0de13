#pragma once

// One-dimensional n_z-node PWR core model: iodine/xenon kinetics per node,
// cumulative control-rod position, and an algebraic power/boron balance.
//
// Differential states:  I_j, X_j (j = 1..n_z), h_cr
// Algebraic variables:  P_j (j = 1..n_z), C_b, T_in
//
//   dI/dt    = gamma_I P - lambda_I I
//   dX/dt    = gamma_X P + lambda_I I - (lambda_X + sigma_X P) .* X
//   dh_cr/dt = u
//   0        = rho .* P + D M_exch P
//   0        = sum(P) - w
//   0        = T_in - T_ref(w)

#include <Eigen/Dense>

#include <atomic>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdo {

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Raised when the algebraic solve (or anything downstream of it) fails.
class IntegrationError : public std::runtime_error {
  public:
    IntegrationError(const std::string& what, int step = -1, double residual = 0.0)
        : std::runtime_error(what), step_(step), residual_(residual) {}

    int step() const noexcept { return step_; }
    double residual() const noexcept { return residual_; }

  private:
    int step_;
    double residual_;
};

struct ModelParams {
    int n_z = 6;

    double gamma_I = 0.0639;
    double gamma_X = 0.00237;
    double lambda_I = 2.878e-5;  // 1/s
    double lambda_X = 2.107e-5;  // 1/s
    double sigma_X = 2.5e-4;     // 1/(s * unit nodal power)

    double D = 0.05;
    double alpha_T = -20e-5;     // per degC
    double alpha_D = -1e-3;      // per unit nodal power
    double alpha_X = -1.6e-4;    // per unit concentration
    double alpha_b = -10e-5;     // per ppm
    double W_rod = 0.02;
    double rod_shape_width = 0.3;  // nodes

    double T0 = 286.0;
    double kappa_T = 20.0;
    double P_nom = 1.0;

    double h_min = 0.0;
    double h_max = 228.0;
    double h_ref = 146.0;        // calibration rod position (steps)
    double u_min = -0.02;        // steps/s
    double u_max = 0.02;
    double C_b_min = 0.0;
    double C_b_max = 2500.0;
    double C_b_ref = 1000.0;     // boron at the calibrated nominal point (ppm)

    int n_sub = 5;               // RK4 sub-steps per control interval
    int newton_max_iter = 50;
    double newton_tol = 1e-10;

    /// Throws ConfigError listing every violated invariant.
    void validate() const;
};

/// Full model variable vector x = (x_d, x_a).
struct SimState {
    std::vector<double> I;
    std::vector<double> X;
    double h_cr = 0.0;
    std::vector<double> P;
    double C_b = 0.0;
    double T_in = 0.0;

    int n_z() const { return static_cast<int>(P.size()); }

    /// Layout: I_1..I_nz, X_1..X_nz, h_cr, P_1..P_nz, C_b, T_in.
    std::vector<double> to_vector() const;
    static SimState from_vector(std::span<const double> v, int n_z);

    bool operator==(const SimState&) const = default;
};

inline int state_dim(int n_z) { return 3 * n_z + 3; }

/// Index helpers into the flattened state vector.
struct StateLayout {
    int n_z;
    int I(int j) const { return j; }
    int X(int j) const { return n_z + j; }
    int h() const { return 2 * n_z; }
    int P(int j) const { return 2 * n_z + 1 + j; }
    int C_b() const { return 3 * n_z + 1; }
    int T_in() const { return 3 * n_z + 2; }
    int dim() const { return 3 * n_z + 3; }
};

struct Trajectory {
    double dt = 600.0;
    std::vector<SimState> states;  // N+1 entries
    std::vector<double> u;         // N entries
    std::vector<double> w;         // N entries
};

/// Thread-safe accumulator of simulator sub-step calls.
class CallCounter {
  public:
    void add(std::uint64_t n) noexcept { count_.fetch_add(n, std::memory_order_relaxed); }
    std::uint64_t value() const noexcept { return count_.load(std::memory_order_relaxed); }
    void reset() noexcept { count_.store(0, std::memory_order_relaxed); }

  private:
    std::atomic<std::uint64_t> count_{0};
};

/// Process-wide simulator call counter (sub-steps).
CallCounter& global_sim_calls();

/// Dense exchange matrix diag(-1,-2,...,-2,-1) + I^+ + I^-.
Eigen::MatrixXd build_exchange_matrix(int n_z);

/// Nominal operating point computed by `PwrModel::calibrate`.
struct Calibration {
    std::vector<double> P0;
    std::vector<double> X0;
    std::vector<double> I0;
    double C_b0 = 0.0;
    double T_in0 = 0.0;
    std::vector<double> rod_bias;  // per-node offset cancelling the rods at h_ref
};

class PwrModel {
  public:
    /// Validates params and constructs the nominal operating point.
    static PwrModel calibrate(const ModelParams& params);

    const ModelParams& params() const { return params_; }
    const Calibration& calibration() const { return cal_; }
    const Eigen::MatrixXd& exchange() const { return exch_; }
    int n_z() const { return params_.n_z; }

    double T_ref(double w) const { return params_.T0 + params_.kappa_T * (w / params_.P_nom); }

    /// Fraction of node j (0 = top) covered by the rods at position h_cr.
    double rod_cover(double h_cr, int j) const;
    double rod_cover_dh(double h_cr, int j) const;
    /// Absolute rod term -W_rod * s_j(h_cr).
    double rod_reactivity(double h_cr, int j) const { return -params_.W_rod * rod_cover(h_cr, j); }

    double reactivity(std::span<const double> P, double T_in, double X_j, double h_cr, double C_b,
                      int j) const;

    /// Residual of the (n_z+1)-dimensional algebraic system in (P, C_b).
    Eigen::VectorXd algebraic_residual(const SimState& s, double w) const;

    /// Newton solve for (P, C_b); T_in set in closed form. `s` provides I, X, h_cr
    /// and the initial guess for P and C_b.
    SimState solve_algebraic(SimState s, double w) const;

    SimState step(const SimState& s, double u, double w, double dt,
                  CallCounter* local = nullptr) const;

    SimState steady_state(double w0) const;

    Trajectory simulate(const SimState& x0, std::span<const double> u, std::span<const double> w,
                        double dt, CallCounter* local = nullptr) const;

    /// Equilibrium iodine and xenon for a nodal power.
    double iodine_eq(double P) const { return params_.gamma_I * P / params_.lambda_I; }
    double xenon_eq(double P) const;

  private:
    explicit PwrModel(ModelParams p);
    double insertion_depth(double h_cr) const;

    ModelParams params_;
    Calibration cal_;
    Eigen::MatrixXd exch_;
};

}  // namespace sdo
