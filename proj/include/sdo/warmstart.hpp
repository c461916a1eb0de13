#pragma once

// Initial-guess strategies for the full-scale problem and the refinement
// loop every strategy is passed through.

#include "sdo/mlp.hpp"
#include "sdo/ocp.hpp"
#include "sdo/optimizer.hpp"
#include "sdo/surrogate.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace sdo {

enum class Perturbation { LoadChange, CostChange };
std::string to_string(Perturbation p);
Perturbation perturbation_from_string(const std::string& s);

struct Scenario {
    int id = 0;
    Perturbation kind = Perturbation::LoadChange;
    std::vector<SimState> context;  // x_{-H} .. x_0
    LoadProfile w;
    OcpSpec spec;
    // Problem solved one step earlier, and its solution.
    LoadProfile w_prev;
    OcpSpec spec_prev;
    ControlSequence u_prev;

    const SimState& x0() const { return context.back(); }
    void validate() const;
};

nlohmann::json to_json(const OcpSpec& s);
OcpSpec ocp_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SimState& s);
SimState sim_state_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Scenario& s);
Scenario scenario_from_json(const nlohmann::json& j);

ControlSequence cold_start(const OcpSpec& spec);
/// (a, b, c) -> (b, c, pad) with pad the box point nearest to 0.
ControlSequence shift_init(const ControlSequence& prev, const ControlBox& box);

struct RefineOptions {
    StepRule step;
    double fd_rel_step = 1e-4;
    int parallelism = 1;
};

/// Penalized full-scale objective and its forward-difference gradient.
struct FullProblem {
    const PwrModel* model = nullptr;
    SimState x0;
    LoadProfile w;
    OcpSpec spec;
    CallCounter* counter = nullptr;

    Evaluation evaluate(std::span<const double> u) const;
    std::vector<double> gradient(std::span<const double> u, const Evaluation& at, const RefineOptions& opt) const;
};

/// Projected descent on the full-scale penalized objective for `iterations` steps.
/// trace.sim_calls counts simulator sub-steps spent inside this call.
OptResult refine_full(const PwrModel& model, const Scenario& sc, std::span<const double> u0, int iterations,
                      const RefineOptions& opt = {});
OptResult refine_full(const PwrModel& model, const SimState& x0, const LoadProfile& w, const OcpSpec& spec,
                      std::span<const double> u0, int iterations, const RefineOptions& opt = {});

/// Surrogate counterpart of the penalized objective: J~ = sum l(x^) + nu * sum h+(x^).
struct SurrogateProblem {
    const SurrogateNet* net = nullptr;
    std::vector<Eigen::VectorXd> context;
    LoadProfile w;
    OcpSpec spec;  // spec.nu is replaced by the surrogate penalty

    static SurrogateProblem from(const SurrogateNet& net, const Scenario& sc, double nu);
    Evaluation evaluate(std::span<const double> u) const;
    /// Value plus analytic gradient with respect to u.
    std::vector<double> gradient(std::span<const double> u, Evaluation* value = nullptr) const;
};

enum class BudgetMode { CostModel, WallClock };
std::string to_string(BudgetMode m);
BudgetMode budget_mode_from_string(const std::string& s);

struct SdoOptions {
    double fraction = 0.05;
    double nu = 10.0;
    int full_iterations = 20;  // the full-scale budget the fraction refers to
    BudgetMode mode = BudgetMode::CostModel;
    // Cost model: one full-scale iteration costs N+2 simulations; a surrogate
    // roll-out costs 1/speedup simulations, a surrogate gradient 3 roll-outs.
    double speedup = 100.0;
    // Wall-clock mode: seconds per full-scale iteration (measured by the caller).
    double full_iteration_seconds = 0.0;
    StepRule step;
    bool start_from_shift = false;
};

struct SdoResult {
    ControlSequence u;
    int iterations = 0;
    double budget_units = 0.0;
    double used_units = 0.0;
    Evaluation start;
    Evaluation best;
    bool fell_back = false;
    std::string warning;
};

SdoResult sdo_warmstart(const SurrogateNet& net, const Scenario& sc, const SdoOptions& opt);

struct BcConfig {
    std::vector<int> hidden{64, 64};
    Activation activation = Activation::Tanh;
    double lr = 1e-3;
    int epochs = 3000;
    double val_fraction = 0.2;
    int w_stride = 6;
    std::uint64_t seed = 1;

    void validate() const;
};

struct BcSample {
    Scenario scenario;
    ControlSequence u_star;
};

class BcNet {
  public:
    BcNet() = default;

    ControlSequence predict(const Scenario& sc) const;
    Eigen::VectorXd features(const Scenario& sc) const;
    int horizon() const { return N_; }
    const Mlp& mlp() const { return mlp_; }

    double train_loss = 0.0;
    double val_loss = 0.0;
    std::uint64_t dataset_sim_calls = 0;

    nlohmann::json to_json() const;
    static BcNet from_json(const nlohmann::json& j);
    void save(const std::string& path) const;
    static BcNet load(const std::string& path);

    friend BcNet bc_train(const std::vector<BcSample>& data, const BcConfig& cfg, std::uint64_t dataset_sim_calls);

  private:
    Eigen::VectorXd raw_features(const Scenario& sc) const;

    int N_ = 0;
    int H_ = 0;
    int n_z_ = 0;
    int w_stride_ = 6;
    ControlBox box_;
    Normalizer in_norm_;
    Mlp mlp_;
};

BcNet bc_train(const std::vector<BcSample>& data, const BcConfig& cfg, std::uint64_t dataset_sim_calls);

}  // namespace sdo
