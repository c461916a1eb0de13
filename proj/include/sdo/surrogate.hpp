#pragma once

// Learned one-step predictor x_{k+1} = x_k + s .* f(context, u_k, w_k) with a
// context window of H past states, trained on L-step recursive roll-outs.

#include "sdo/mlp.hpp"
#include "sdo/pwr_model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace sdo {

class SurrogateError : public std::runtime_error {
  public:
    SurrogateError(const std::string& what, int step = -1) : std::runtime_error(what), step_(step) {}
    int step() const noexcept { return step_; }

  private:
    int step_;
};

enum class RegKind { WeightDecay, PhysicsResidual };
std::string to_string(RegKind k);
RegKind reg_kind_from_string(const std::string& s);

struct SurrogateConfig {
    int H = 1;
    int L = 24;
    std::vector<int> hidden{64, 64};
    Activation activation = Activation::Tanh;
    double lambda = 0.0;
    RegKind reg_kind = RegKind::WeightDecay;
    double lr = 1e-3;
    int batch_size = 64;
    int batches_per_epoch = 50;  // 0 = full pass over all training windows
    int max_epochs = 500;
    int patience = 20;
    int val_windows = 512;       // 0 = all validation windows
    double val_fraction = 0.2;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Per-feature affine normalization.
struct Normalizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;

    Eigen::VectorXd normalize(const Eigen::VectorXd& x) const { return (x - mean).cwiseQuotient(std); }
    Eigen::VectorXd denormalize(const Eigen::VectorXd& z) const { return z.cwiseProduct(std) + mean; }
    /// Mean/std over columns; standard deviations below `floor` (relative to
    /// 1 + |mean|) are replaced by that floor.
    static Normalizer fit(const Eigen::MatrixXd& samples, double floor = 1e-8);
};

/// One trajectory in matrix form: states are columns (dim x (N+1)).
struct TrajectoryData {
    Eigen::MatrixXd x;
    std::vector<double> u;
    std::vector<double> w;

    static TrajectoryData from(const Trajectory& t);
    int steps() const { return static_cast<int>(u.size()); }
};

/// Reverse-mode record of a batched roll-out.
struct RolloutTape {
    int H = 0;
    int L = 0;
    int batch = 0;
    std::vector<Eigen::MatrixXd> states;  // H+1+L entries, each dim x batch
    Eigen::MatrixXd u;                    // L x batch
    Eigen::MatrixXd w;                    // L x batch
    std::vector<Mlp::Cache> caches;       // L entries
};

struct RolloutGrad {
    std::vector<double> params;  // empty unless requested
    Eigen::MatrixXd u;           // L x batch
    Eigen::MatrixXd w;           // L x batch
};

struct PhysicsConsts {
    int n_z = 6;
    double dt = 600.0;
    double gamma_I = 0.0, gamma_X = 0.0, lambda_I = 0.0, lambda_X = 0.0, sigma_X = 0.0;

    static PhysicsConsts from(const ModelParams& p, double dt);
};

class SurrogateNet {
  public:
    SurrogateNet() = default;
    /// Fresh network with the given normalization statistics.
    SurrogateNet(const SurrogateConfig& cfg, int state_dim, Normalizer x_norm, Normalizer uw_norm,
                 Eigen::VectorXd delta_scale, std::uint64_t seed);

    const SurrogateConfig& config() const { return cfg_; }
    int H() const { return cfg_.H; }
    int state_dim() const { return nx_; }
    int input_dim() const { return (cfg_.H + 1) * nx_ + 2; }
    const Normalizer& x_norm() const { return x_norm_; }
    const Normalizer& uw_norm() const { return uw_norm_; }
    const Eigen::VectorXd& delta_scale() const { return delta_scale_; }
    Mlp& mlp() { return mlp_; }
    const Mlp& mlp() const { return mlp_; }

    /// context: H+1 states, oldest first.
    Eigen::VectorXd predict_one(std::span<const Eigen::VectorXd> context, double u, double w) const;
    /// Predictions x_{k+1..k+L}.
    std::vector<Eigen::VectorXd> rollout(std::span<const Eigen::VectorXd> context, std::span<const double> u,
                                         std::span<const double> w) const;

    /// Batched roll-out recording everything needed for the reverse sweep.
    /// context[i] is dim x batch; u, w are L x batch.
    RolloutTape forward(const std::vector<Eigen::MatrixXd>& context, const Eigen::MatrixXd& u,
                        const Eigen::MatrixXd& w) const;
    /// d_states[l] is the cost gradient with respect to prediction l (dim x batch).
    RolloutGrad backward(const RolloutTape& tape, const std::vector<Eigen::MatrixXd>& d_states,
                         bool want_params) const;

    /// Gradient of a cost of the predicted states with respect to every u_k.
    std::vector<double> input_gradient(std::span<const Eigen::VectorXd> context, std::span<const double> u,
                                       std::span<const double> w,
                                       const std::vector<Eigen::VectorXd>& d_states) const;

    void save(const std::string& path) const;
    static SurrogateNet load(const std::string& path);
    nlohmann::json to_json() const;
    static SurrogateNet from_json(const nlohmann::json& j);

  private:
    SurrogateConfig cfg_;
    int nx_ = 0;
    Normalizer x_norm_;
    Normalizer uw_norm_;  // features (u, w)
    Eigen::VectorXd delta_scale_;
    Mlp mlp_;
};

/// Mean squared residual of the discretized iodine/xenon/rod equations along
/// a batch of predicted windows. states: W+1 entries (dim x batch), u: W x batch.
/// Residuals are scaled by dt / x_scale. If `d_states` is non-null the
/// gradient (times `weight`) is accumulated into it.
double physics_residual(const std::vector<Eigen::MatrixXd>& states, const Eigen::MatrixXd& u,
                        const PhysicsConsts& phys, const Eigen::VectorXd& x_scale,
                        std::vector<Eigen::MatrixXd>* d_states = nullptr, double weight = 1.0);

struct TrainEpoch {
    int epoch = 0;
    double train_loss = 0.0;
    double val_mse_1 = 0.0;
    double val_mse_L = 0.0;
    double wall_seconds = 0.0;
};

struct TrainRecord {
    std::vector<TrainEpoch> epochs;  // epoch 0 = before any update
    int best_epoch = 0;
    std::size_t train_trajectories = 0;
    std::size_t val_trajectories = 0;
};

/// A batch of L-step windows: (trajectory, start index k) with k >= H.
struct Window {
    int traj = 0;
    int k = 0;
};

/// Everything needed to evaluate the training loss outside of `train`.
struct LossProblem {
    const std::vector<TrajectoryData>* data = nullptr;
    PhysicsConsts phys;
};

/// Training loss (normalized MSE over the L predictions plus lambda * R) and
/// its parameter gradient for one batch.
double training_loss(const SurrogateNet& net, const LossProblem& prob, std::span<const Window> batch,
                     std::vector<double>* grad);

/// Normalized mean squared error of L-step (or 1-step) predictions.
double validation_mse(const SurrogateNet& net, const std::vector<TrajectoryData>& data,
                      std::span<const Window> windows, int L);

std::vector<Window> enumerate_windows(const std::vector<TrajectoryData>& data, int H, int L);

struct TrainResult {
    SurrogateNet net;
    TrainRecord record;
};

/// Called after each epoch with the current net (e.g. for checkpoint evaluation).
using EpochHook = std::function<void(const TrainEpoch&, const SurrogateNet& current)>;

TrainResult train_surrogate(const std::vector<TrajectoryData>& dataset, const SurrogateConfig& cfg,
                            const PhysicsConsts& phys, const EpochHook& hook = {});

}  // namespace sdo
