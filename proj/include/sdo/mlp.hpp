#pragma once

// Dense feed-forward network with batched forward/backward passes.
// Samples are columns.

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sdo {

enum class Activation { Tanh, Softplus };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

class Mlp {
  public:
    struct Cache {
        Eigen::MatrixXd input;
        std::vector<Eigen::MatrixXd> pre;   // pre-activations of hidden layers
        std::vector<Eigen::MatrixXd> post;  // activations of hidden layers
    };

    Mlp() = default;
    /// Layer widths: sizes[0] = input, sizes.back() = output. Weights are drawn
    /// uniform(+-sqrt(6/(fan_in+fan_out))); the output layer is scaled by `out_scale`.
    Mlp(std::vector<int> sizes, Activation act, std::uint64_t seed, double out_scale = 1.0);

    int input_dim() const { return sizes_.front(); }
    int output_dim() const { return sizes_.back(); }
    const std::vector<int>& sizes() const { return sizes_; }
    Activation activation() const { return act_; }
    std::size_t num_params() const;

    Eigen::MatrixXd forward(const Eigen::MatrixXd& in) const;
    Eigen::MatrixXd forward(const Eigen::MatrixXd& in, Cache& cache) const;

    /// Accumulates parameter gradients into `grad` (flattened, may be empty to
    /// skip) and returns the gradient with respect to the input.
    Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& d_out, std::span<double> grad) const;

    /// Flattened layout: per layer, W (column-major) then b.
    std::vector<double> get_params() const;
    void set_params(std::span<const double> theta);
    /// Sum of squared weights (biases excluded) and its gradient accumulated into `grad`.
    double weight_sq_norm(std::span<double> grad, double scale) const;

    std::vector<Eigen::MatrixXd>& weights() { return W_; }
    std::vector<Eigen::VectorXd>& biases() { return b_; }

    nlohmann::json to_json() const;
    static Mlp from_json(const nlohmann::json& j);

  private:
    std::vector<int> sizes_;
    Activation act_ = Activation::Tanh;
    std::vector<Eigen::MatrixXd> W_;
    std::vector<Eigen::VectorXd> b_;
};

}  // namespace sdo
