#pragma once

// Helpers shared by the unit tests and the acceptance run.

#include "sdo/datagen.hpp"
#include "sdo/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace sdo::testing {

/// Short closed-loop trajectories of the calibrated model.
inline std::vector<TrajectoryData> pwr_windows(const PwrModel& m, int count, int N, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const ControlBox box{m.params().u_min, m.params().u_max};
    std::vector<TrajectoryData> out;
    for (int i = 0; i < count; ++i) {
        const LoadProfile w = sample_load_profile(rng, N, 600.0);
        const ControlSequence walk = sample_rod_walk(rng, N, box, {1, 0.5, 0.1});
        const SimState x0 = m.steady_state(w.front());
        out.push_back(TrajectoryData::from(simulate_excited(m, x0, walk, w, 600.0, box, 0.1, nullptr)));
    }
    return out;
}

/// Net with normalization fitted on `data` and the given hidden widths.
inline SurrogateNet fitted_net(const std::vector<TrajectoryData>& data, SurrogateConfig cfg, std::uint64_t seed) {
    const int nx = static_cast<int>(data.front().x.rows());
    std::size_t ns = 0, nu = 0;
    for (const auto& t : data) {
        ns += t.x.cols();
        nu += t.u.size();
    }
    Eigen::MatrixXd xs(nx, ns), uw(2, nu), dx(nx, nu);
    std::size_t cs = 0, cu = 0;
    for (const auto& t : data) {
        xs.middleCols(cs, t.x.cols()) = t.x;
        cs += t.x.cols();
        for (int k = 0; k < t.steps(); ++k, ++cu) {
            uw(0, cu) = t.u[k];
            uw(1, cu) = t.w[k];
            dx.col(cu) = t.x.col(k + 1) - t.x.col(k);
        }
    }
    const auto xn = Normalizer::fit(xs, 1e-6);
    Eigen::VectorXd ds = dx.cwiseAbs().rowwise().maxCoeff();
    for (Eigen::Index i = 0; i < ds.size(); ++i) ds(i) = std::max(ds(i), 1e-6 * xn.std(i));
    SurrogateNet net(cfg, nx, xn, Normalizer::fit(uw, 1e-6), ds, seed);
    // Larger output weights than the default init so every path is exercised.
    auto& W = net.mlp().weights().back();
    std::mt19937_64 rng(seed + 1);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = d(rng);
    return net;
}

/// Elementwise relative error with a floor of `floor_frac * |ref|_inf` in the denominator.
inline double max_rel_error(const std::vector<double>& got, const std::vector<double>& ref,
                            double floor_frac = 1e-4) {
    double scale = 0.0;
    for (double r : ref) scale = std::max(scale, std::abs(r));
    const double floor = std::max(floor_frac * scale, 1e-300);
    double worst = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        worst = std::max(worst, std::abs(got[i] - ref[i]) / std::max(std::abs(ref[i]), floor));
    }
    return worst;
}

struct GradCheck {
    double param_rel = 0.0;
    double input_rel = 0.0;
    std::size_t param_probes = 0;
    std::size_t input_probes = 0;
};

/// Parameter gradient of the training loss and input gradient of a linear
/// cost of a roll-out, both against central differences.
inline GradCheck check_surrogate_gradients(const SurrogateNet& net0, const std::vector<TrajectoryData>& data,
                                           std::uint64_t seed, double h = 1e-6, double h_input = 1e-6) {
    GradCheck out;
    SurrogateNet net = net0;
    const auto& cfg = net.config();
    LossProblem prob{&data, {}};
    auto windows = enumerate_windows(data, cfg.H, cfg.L);
    std::mt19937_64 rng(seed);
    std::shuffle(windows.begin(), windows.end(), rng);
    windows.resize(std::min<std::size_t>(windows.size(), 16));

    std::vector<double> grad;
    training_loss(net, prob, windows, &grad);
    const std::vector<double> theta = net.mlp().get_params();
    std::vector<double> fd(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        auto t = theta;
        const double step = h * std::max(1.0, std::abs(theta[i]));
        t[i] = theta[i] + step;
        net.mlp().set_params(t);
        const double fp = training_loss(net, prob, windows, nullptr);
        t[i] = theta[i] - step;
        net.mlp().set_params(t);
        const double fm = training_loss(net, prob, windows, nullptr);
        fd[i] = (fp - fm) / (2 * step);
    }
    net.mlp().set_params(theta);
    out.param_rel = max_rel_error(grad, fd);
    out.param_probes = theta.size();

    // Input gradient on a longer roll-out from the first trajectory.
    const auto& tr = data.front();
    const int L = std::min(12, tr.steps() - cfg.H);
    std::vector<Eigen::VectorXd> ctx;
    for (int i = 0; i <= cfg.H; ++i) ctx.emplace_back(tr.x.col(i));
    std::vector<double> u(tr.u.begin() + cfg.H, tr.u.begin() + cfg.H + L);
    std::vector<double> w(tr.w.begin() + cfg.H, tr.w.begin() + cfg.H + L);
    std::normal_distribution<double> nd;
    std::vector<Eigen::VectorXd> c(L, Eigen::VectorXd(net.state_dim()));
    for (auto& v : c)
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = nd(rng) / net.x_norm().std(i);
    auto cost = [&](const std::vector<double>& uu) {
        const auto xs = net.rollout(ctx, uu, w);
        double s = 0.0;
        for (int l = 0; l < L; ++l) s += c[l].dot(xs[l]);
        return s;
    };
    const auto gu = net.input_gradient(ctx, u, w, c);
    std::vector<double> fdu(L);
    for (int k = 0; k < L; ++k) {
        const double step = h_input;
        auto p = u, q = u;
        p[k] += step;
        q[k] -= step;
        fdu[k] = (cost(p) - cost(q)) / (2 * step);
    }
    out.input_rel = max_rel_error(gu, fdu);
    out.input_probes = static_cast<std::size_t>(L);
    return out;
}

}  // namespace sdo::testing
