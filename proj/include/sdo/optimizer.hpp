#pragma once

// Budgeted first-order optimization over box-constrained control sequences.

#include "sdo/ocp.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdo {

class OptimizationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct OptBudget {
    int max_iterations = 20;
    double surrogate_fraction = 0.05;
    std::vector<int> record_at{0, 5, 10, 15, 20};

    void validate() const;
};

/// Value of the (penalized) objective at a point, with its decomposition.
struct Evaluation {
    double value = 0.0;      // minimized quantity (J_pen for the full problem)
    double J = 0.0;          // unpenalized cost
    double violation = 0.0;  // sum of constraint positive parts
};

using Objective = std::function<Evaluation(std::span<const double>)>;
/// Gradient of Evaluation::value at u; `at` is the already-computed evaluation.
using GradientOracle = std::function<std::vector<double>(std::span<const double>, const Evaluation& at)>;

struct StepRule {
    double eta0 = 1e-2;       // first trial step in normalized control units
    double shrink = 0.5;
    int max_trials = 4;       // objective evaluations per line search
    double grow = 2.0;        // seed multiplier after an accepted step
    double eta_max = 1.0;
    double armijo = 1e-4;
};

struct TraceRow {
    int iteration = 0;
    double J = 0.0;
    double J_pen = 0.0;
    double violation = 0.0;
    double best_J = 0.0;
    double best_J_pen = 0.0;
    double best_violation = 0.0;
    double step = 0.0;
    double grad_norm = 0.0;
    int line_search_evals = 0;
    std::uint64_t sim_calls = 0;
    double wall_seconds = 0.0;
};

struct OptTrace {
    std::vector<TraceRow> rows;  // rows[n] describes the state after n gradient steps

    /// Best-so-far row at iteration n (clamped to the last available row).
    const TraceRow& at(int n) const;
};

struct OptResult {
    std::vector<double> u_best;
    Evaluation best;
    OptTrace trace;
};

struct DescentOptions {
    StepRule step;
    /// Optional monotone cost counter sampled into the trace (e.g. simulator calls).
    std::function<std::uint64_t()> cost_counter;
    /// Stop early once cumulative cost exceeds this (0 = no limit); used for
    /// wall-clock or evaluation-count budgets on the surrogate problem.
    std::function<bool()> out_of_budget;
};

struct FdOptions {
    double rel_step = 1e-4;
    double u_scale = 1.0;
    bool central = false;
    int parallelism = 1;
};

/// Forward (or central) difference gradient of a scalar objective. The
/// overload taking `f_u` skips the base evaluation.
std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f,
                                std::span<const double> u, const FdOptions& opts);
std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f,
                                std::span<const double> u, double f_u, const FdOptions& opts);

/// Projected gradient descent with backtracking in normalized coordinates.
/// Runs exactly budget.max_iterations gradient steps unless `out_of_budget`
/// fires, and returns the best iterate seen.
OptResult projected_descent(const Objective& objective, const GradientOracle& gradient,
                            std::span<const double> u0, const ControlBox& box, int max_iterations,
                            const DescentOptions& opts = {});

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Stateful Adam with bias correction.
class Adam {
  public:
    Adam(std::size_t n, AdamHyper hyper) : hyper_(hyper), m_(n, 0.0), v_(n, 0.0) {}

    void step(std::span<double> theta, std::span<const double> grad);
    long steps_taken() const { return t_; }
    const AdamHyper& hyper() const { return hyper_; }
    void set_lr(double lr) { hyper_.lr = lr; }

  private:
    AdamHyper hyper_;
    std::vector<double> m_;
    std::vector<double> v_;
    long t_ = 0;
};

/// Runs `steps` Adam updates using grad(theta, step_index).
std::vector<double> adam(const std::function<std::vector<double>(std::span<const double>, int)>& grad,
                         std::span<const double> theta0, const AdamHyper& hyper, int steps);

}  // namespace sdo
