#include "sdo/mlp.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace sdo {

std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "softplus"; }

Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "softplus") return Activation::Softplus;
    throw std::invalid_argument("unknown activation '" + s + "' (expected tanh or softplus)");
}

namespace {

void apply_act(Activation act, const Eigen::MatrixXd& z, Eigen::MatrixXd& h) {
    if (act == Activation::Tanh) {
        h = z.array().tanh().matrix();
    } else {
        // log(1 + e^z) without overflow
        h = z.unaryExpr([](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); });
    }
}

Eigen::MatrixXd act_derivative(Activation act, const Eigen::MatrixXd& z, const Eigen::MatrixXd& h) {
    if (act == Activation::Tanh) return (1.0 - h.array().square()).matrix();
    return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

}  // namespace

Mlp::Mlp(std::vector<int> sizes, Activation act, std::uint64_t seed, double out_scale)
    : sizes_(std::move(sizes)), act_(act) {
    if (sizes_.size() < 2) throw std::invalid_argument("Mlp needs at least input and output widths");
    for (int s : sizes_) {
        if (s < 1) throw std::invalid_argument("Mlp layer widths must be positive");
    }
    std::mt19937_64 rng(seed);
    const std::size_t n_layers = sizes_.size() - 1;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const int fan_in = sizes_[l], fan_out = sizes_[l + 1];
        const double a = std::sqrt(6.0 / (fan_in + fan_out)) * (l + 1 == n_layers ? out_scale : 1.0);
        std::uniform_real_distribution<double> dist(-a, a);
        Eigen::MatrixXd W(fan_out, fan_in);
        for (Eigen::Index c = 0; c < W.cols(); ++c) {
            for (Eigen::Index r = 0; r < W.rows(); ++r) W(r, c) = dist(rng);
        }
        W_.push_back(std::move(W));
        b_.push_back(Eigen::VectorXd::Zero(fan_out));
    }
}

std::size_t Mlp::num_params() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) n += W_[l].size() + b_[l].size();
    return n;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& in) const {
    Eigen::MatrixXd h = in;
    Eigen::MatrixXd z;
    for (std::size_t l = 0; l < W_.size(); ++l) {
        z = W_[l] * h;
        z.colwise() += b_[l];
        if (l + 1 == W_.size()) return z;
        apply_act(act_, z, h);
    }
    return h;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& in, Cache& cache) const {
    if (in.rows() != input_dim()) throw std::invalid_argument("Mlp input width mismatch");
    cache.input = in;
    cache.pre.resize(W_.size() - 1);
    cache.post.resize(W_.size() - 1);
    const Eigen::MatrixXd* h = &cache.input;
    for (std::size_t l = 0; l + 1 < W_.size(); ++l) {
        cache.pre[l] = W_[l] * *h;
        cache.pre[l].colwise() += b_[l];
        apply_act(act_, cache.pre[l], cache.post[l]);
        h = &cache.post[l];
    }
    Eigen::MatrixXd out = W_.back() * *h;
    out.colwise() += b_.back();
    return out;
}

Eigen::MatrixXd Mlp::backward(const Cache& cache, const Eigen::MatrixXd& d_out, std::span<double> grad) const {
    const bool want_params = !grad.empty();
    if (want_params && grad.size() != num_params()) throw std::invalid_argument("Mlp gradient buffer size mismatch");
    std::vector<std::size_t> offset(W_.size());
    std::size_t off = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) {
        offset[l] = off;
        off += W_[l].size() + b_[l].size();
    }
    Eigen::MatrixXd delta = d_out;
    for (std::size_t li = W_.size(); li-- > 0;) {
        const Eigen::MatrixXd& h_in = li == 0 ? cache.input : cache.post[li - 1];
        if (want_params) {
            Eigen::Map<Eigen::MatrixXd> gW(grad.data() + offset[li], W_[li].rows(), W_[li].cols());
            Eigen::Map<Eigen::VectorXd> gb(grad.data() + offset[li] + W_[li].size(), b_[li].size());
            gW.noalias() += delta * h_in.transpose();
            gb += delta.rowwise().sum();
        }
        Eigen::MatrixXd d_in = W_[li].transpose() * delta;
        if (li == 0) return d_in;
        delta = d_in.cwiseProduct(act_derivative(act_, cache.pre[li - 1], cache.post[li - 1]));
    }
    return delta;
}

std::vector<double> Mlp::get_params() const {
    std::vector<double> theta;
    theta.reserve(num_params());
    for (std::size_t l = 0; l < W_.size(); ++l) {
        theta.insert(theta.end(), W_[l].data(), W_[l].data() + W_[l].size());
        theta.insert(theta.end(), b_[l].data(), b_[l].data() + b_[l].size());
    }
    return theta;
}

void Mlp::set_params(std::span<const double> theta) {
    if (theta.size() != num_params()) throw std::invalid_argument("Mlp parameter vector size mismatch");
    std::size_t off = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) {
        std::copy_n(theta.data() + off, W_[l].size(), W_[l].data());
        off += W_[l].size();
        std::copy_n(theta.data() + off, b_[l].size(), b_[l].data());
        off += b_[l].size();
    }
}

double Mlp::weight_sq_norm(std::span<double> grad, double scale) const {
    double s = 0.0;
    std::size_t off = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) {
        s += W_[l].squaredNorm();
        if (!grad.empty()) {
            for (Eigen::Index i = 0; i < W_[l].size(); ++i) grad[off + i] += 2.0 * scale * W_[l].data()[i];
        }
        off += W_[l].size() + b_[l].size();
    }
    return s;
}

nlohmann::json Mlp::to_json() const {
    nlohmann::json j;
    j["sizes"] = sizes_;
    j["activation"] = to_string(act_);
    j["params"] = get_params();
    return j;
}

Mlp Mlp::from_json(const nlohmann::json& j) {
    Mlp m(j.at("sizes").get<std::vector<int>>(), activation_from_string(j.at("activation").get<std::string>()), 0);
    m.set_params(j.at("params").get<std::vector<double>>());
    return m;
}

}  // namespace sdo
