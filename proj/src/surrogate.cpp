#include "sdo/surrogate.hpp"

#include "sdo/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace sdo {

std::string to_string(RegKind k) { return k == RegKind::WeightDecay ? "weight_decay" : "physics_residual"; }

RegKind reg_kind_from_string(const std::string& s) {
    if (s == "weight_decay") return RegKind::WeightDecay;
    if (s == "physics_residual") return RegKind::PhysicsResidual;
    throw ConfigError("unknown reg_kind '" + s + "' (expected weight_decay or physics_residual)");
}

void SurrogateConfig::validate() const {
    std::vector<std::string> bad;
    if (H < 0) bad.emplace_back("H must be >= 0");
    if (L < 1) bad.emplace_back("L must be >= 1");
    if (hidden.empty()) bad.emplace_back("at least one hidden layer required");
    for (int h : hidden) {
        if (h < 1) bad.emplace_back("hidden widths must be positive");
    }
    if (!(lambda >= 0)) bad.emplace_back("lambda must be >= 0");
    if (!(lr > 0)) bad.emplace_back("lr must be positive");
    if (batch_size < 1) bad.emplace_back("batch_size must be >= 1");
    if (batches_per_epoch < 0) bad.emplace_back("batches_per_epoch must be >= 0");
    if (max_epochs < 0) bad.emplace_back("max_epochs must be >= 0");
    if (patience < 1) bad.emplace_back("patience must be >= 1");
    if (val_windows < 0) bad.emplace_back("val_windows must be >= 0");
    if (!(val_fraction > 0 && val_fraction < 1)) bad.emplace_back("val_fraction must lie in (0, 1)");
    if (!bad.empty()) {
        std::ostringstream os;
        os << "invalid surrogate config:";
        for (const auto& b : bad) os << " [" << b << "]";
        throw ConfigError(os.str());
    }
}

Normalizer Normalizer::fit(const Eigen::MatrixXd& samples, double floor) {
    Normalizer n;
    const double cnt = static_cast<double>(samples.cols());
    n.mean = samples.rowwise().sum() / cnt;
    const Eigen::MatrixXd centered = samples.colwise() - n.mean;
    n.std = (centered.array().square().rowwise().sum() / cnt).sqrt().matrix();
    for (Eigen::Index i = 0; i < n.std.size(); ++i) {
        const double f = floor * (1.0 + std::abs(n.mean(i)));
        if (!(n.std(i) > f)) n.std(i) = f;
    }
    return n;
}

TrajectoryData TrajectoryData::from(const Trajectory& t) {
    TrajectoryData d;
    const int n = static_cast<int>(t.states.size());
    if (n == 0) throw std::invalid_argument("empty trajectory");
    const int dim = state_dim(t.states.front().n_z());
    d.x.resize(dim, n);
    for (int k = 0; k < n; ++k) {
        const auto v = t.states[k].to_vector();
        d.x.col(k) = Eigen::Map<const Eigen::VectorXd>(v.data(), dim);
    }
    d.u = t.u;
    d.w = t.w;
    return d;
}

PhysicsConsts PhysicsConsts::from(const ModelParams& p, double dt) {
    PhysicsConsts c;
    c.n_z = p.n_z;
    c.dt = dt;
    c.gamma_I = p.gamma_I;
    c.gamma_X = p.gamma_X;
    c.lambda_I = p.lambda_I;
    c.lambda_X = p.lambda_X;
    c.sigma_X = p.sigma_X;
    return c;
}

SurrogateNet::SurrogateNet(const SurrogateConfig& cfg, int state_dim, Normalizer x_norm, Normalizer uw_norm,
                           Eigen::VectorXd delta_scale, std::uint64_t seed)
    : cfg_(cfg), nx_(state_dim), x_norm_(std::move(x_norm)), uw_norm_(std::move(uw_norm)),
      delta_scale_(std::move(delta_scale)) {
    cfg_.validate();
    std::vector<int> sizes{input_dim()};
    sizes.insert(sizes.end(), cfg_.hidden.begin(), cfg_.hidden.end());
    sizes.push_back(nx_);
    mlp_ = Mlp(sizes, cfg_.activation, seed, 0.1);
}

RolloutTape SurrogateNet::forward(const std::vector<Eigen::MatrixXd>& context, const Eigen::MatrixXd& u,
                                  const Eigen::MatrixXd& w) const {
    const int H = cfg_.H;
    if (static_cast<int>(context.size()) != H + 1) throw std::invalid_argument("context must hold H+1 states");
    if (u.rows() != w.rows() || u.cols() != w.cols()) throw std::invalid_argument("u/w shape mismatch");
    RolloutTape tape;
    tape.H = H;
    tape.L = static_cast<int>(u.rows());
    tape.batch = static_cast<int>(u.cols());
    tape.states = context;
    tape.u = u;
    tape.w = w;
    tape.caches.resize(tape.L);
    const int B = tape.batch;
    Eigen::MatrixXd in(input_dim(), B);
    for (int l = 0; l < tape.L; ++l) {
        for (int i = 0; i <= H; ++i) {
            in.middleRows(i * nx_, nx_) =
                (tape.states[l + i].colwise() - x_norm_.mean).array().colwise() / x_norm_.std.array();
        }
        in.row((H + 1) * nx_) = (u.row(l).array() - uw_norm_.mean(0)) / uw_norm_.std(0);
        in.row((H + 1) * nx_ + 1) = (w.row(l).array() - uw_norm_.mean(1)) / uw_norm_.std(1);
        const Eigen::MatrixXd out = mlp_.forward(in, tape.caches[l]);
        Eigen::MatrixXd next = tape.states[l + H] + (out.array().colwise() * delta_scale_.array()).matrix();
        if (!next.allFinite()) throw SurrogateError("non-finite surrogate prediction at step " + std::to_string(l), l);
        tape.states.push_back(std::move(next));
    }
    return tape;
}

RolloutGrad SurrogateNet::backward(const RolloutTape& tape, const std::vector<Eigen::MatrixXd>& d_states,
                                   bool want_params) const {
    const int H = tape.H, L = tape.L, B = tape.batch;
    if (static_cast<int>(d_states.size()) != L) throw std::invalid_argument("need one state gradient per step");
    std::vector<Eigen::MatrixXd> G(H + 1 + L, Eigen::MatrixXd::Zero(nx_, B));
    for (int l = 0; l < L; ++l) G[H + 1 + l] = d_states[l];
    RolloutGrad rg;
    if (want_params) rg.params.assign(mlp_.num_params(), 0.0);
    rg.u = Eigen::MatrixXd::Zero(L, B);
    rg.w = Eigen::MatrixXd::Zero(L, B);
    for (int l = L - 1; l >= 0; --l) {
        const Eigen::MatrixXd& g = G[H + 1 + l];
        if (!g.allFinite()) throw SurrogateError("non-finite gradient at step " + std::to_string(l), l);
        G[H + l] += g;
        const Eigen::MatrixXd d_out = (g.array().colwise() * delta_scale_.array()).matrix();
        const Eigen::MatrixXd d_in =
            mlp_.backward(tape.caches[l], d_out, want_params ? std::span<double>(rg.params) : std::span<double>{});
        for (int i = 0; i <= H; ++i) {
            G[l + i] += (d_in.middleRows(i * nx_, nx_).array().colwise() / x_norm_.std.array()).matrix();
        }
        rg.u.row(l) = d_in.row((H + 1) * nx_) / uw_norm_.std(0);
        rg.w.row(l) = d_in.row((H + 1) * nx_ + 1) / uw_norm_.std(1);
    }
    return rg;
}

namespace {

std::vector<Eigen::MatrixXd> single_context(std::span<const Eigen::VectorXd> context) {
    std::vector<Eigen::MatrixXd> ctx;
    ctx.reserve(context.size());
    for (const auto& c : context) ctx.emplace_back(c);
    return ctx;
}

Eigen::MatrixXd column(std::span<const double> v) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
    for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
    return m;
}

}  // namespace

Eigen::VectorXd SurrogateNet::predict_one(std::span<const Eigen::VectorXd> context, double u, double w) const {
    const double uu[1] = {u}, ww[1] = {w};
    return rollout(context, uu, ww).front();
}

std::vector<Eigen::VectorXd> SurrogateNet::rollout(std::span<const Eigen::VectorXd> context,
                                                   std::span<const double> u, std::span<const double> w) const {
    if (u.size() != w.size()) throw std::invalid_argument("u and w lengths differ");
    for (const auto& c : context) {
        if (c.size() != nx_ || !c.allFinite()) throw SurrogateError("invalid context state");
    }
    const auto tape = forward(single_context(context), column(u), column(w));
    std::vector<Eigen::VectorXd> out;
    out.reserve(u.size());
    for (std::size_t l = 0; l < u.size(); ++l) out.emplace_back(tape.states[tape.H + 1 + l].col(0));
    return out;
}

std::vector<double> SurrogateNet::input_gradient(std::span<const Eigen::VectorXd> context, std::span<const double> u,
                                                 std::span<const double> w,
                                                 const std::vector<Eigen::VectorXd>& d_states) const {
    const auto tape = forward(single_context(context), column(u), column(w));
    std::vector<Eigen::MatrixXd> d(d_states.begin(), d_states.end());
    const auto rg = backward(tape, d, false);
    return {rg.u.data(), rg.u.data() + rg.u.size()};
}

nlohmann::json SurrogateNet::to_json() const {
    auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    nlohmann::json j;
    j["format"] = "sdo-surrogate";
    j["version"] = 1;
    j["config"] = {{"H", cfg_.H},
                   {"L", cfg_.L},
                   {"hidden", cfg_.hidden},
                   {"activation", to_string(cfg_.activation)},
                   {"lambda", cfg_.lambda},
                   {"reg_kind", to_string(cfg_.reg_kind)},
                   {"lr", cfg_.lr},
                   {"batch_size", cfg_.batch_size},
                   {"batches_per_epoch", cfg_.batches_per_epoch},
                   {"max_epochs", cfg_.max_epochs},
                   {"patience", cfg_.patience},
                   {"val_windows", cfg_.val_windows},
                   {"val_fraction", cfg_.val_fraction},
                   {"seed", cfg_.seed}};
    j["state_dim"] = nx_;
    j["x_mean"] = vec(x_norm_.mean);
    j["x_std"] = vec(x_norm_.std);
    j["uw_mean"] = vec(uw_norm_.mean);
    j["uw_std"] = vec(uw_norm_.std);
    j["delta_scale"] = vec(delta_scale_);
    j["mlp"] = mlp_.to_json();
    return j;
}

SurrogateNet SurrogateNet::from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "sdo-surrogate" || j.value("version", 0) != 1) {
        throw std::runtime_error("not a version-1 surrogate file");
    }
    auto vec = [](const nlohmann::json& a) {
        const auto v = a.get<std::vector<double>>();
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    const auto& c = j.at("config");
    SurrogateConfig cfg;
    cfg.H = c.at("H");
    cfg.L = c.at("L");
    cfg.hidden = c.at("hidden").get<std::vector<int>>();
    cfg.activation = activation_from_string(c.at("activation"));
    cfg.lambda = c.at("lambda");
    cfg.reg_kind = reg_kind_from_string(c.at("reg_kind"));
    cfg.lr = c.at("lr");
    cfg.batch_size = c.at("batch_size");
    cfg.batches_per_epoch = c.at("batches_per_epoch");
    cfg.max_epochs = c.at("max_epochs");
    cfg.patience = c.at("patience");
    cfg.val_windows = c.at("val_windows");
    cfg.val_fraction = c.at("val_fraction");
    cfg.seed = c.at("seed");
    SurrogateNet net;
    net.cfg_ = cfg;
    net.nx_ = j.at("state_dim");
    net.x_norm_ = {vec(j.at("x_mean")), vec(j.at("x_std"))};
    net.uw_norm_ = {vec(j.at("uw_mean")), vec(j.at("uw_std"))};
    net.delta_scale_ = vec(j.at("delta_scale"));
    net.mlp_ = Mlp::from_json(j.at("mlp"));
    if (net.mlp_.input_dim() != net.input_dim() || net.mlp_.output_dim() != net.nx_) {
        throw std::runtime_error("surrogate file: layer shapes do not match the configuration");
    }
    return net;
}

void SurrogateNet::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << to_json().dump() << '\n';
}

SurrogateNet SurrogateNet::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);
    return from_json(nlohmann::json::parse(f));
}

double physics_residual(const std::vector<Eigen::MatrixXd>& states, const Eigen::MatrixXd& u,
                        const PhysicsConsts& c, const Eigen::VectorXd& s, std::vector<Eigen::MatrixXd>* d_states,
                        double weight) {
    const int W = static_cast<int>(states.size()) - 1;
    if (W < 1) return 0.0;
    const int nz = c.n_z;
    const int B = static_cast<int>(states.front().cols());
    const double count = static_cast<double>(W) * (2 * nz + 1) * B;
    const double dt = c.dt;
    const int ih = 2 * nz;
    auto iP = [&](int j) { return 2 * nz + 1 + j; };
    double total = 0.0;
    for (int l = 0; l < W; ++l) {
        const auto& a = states[l];
        const auto& b = states[l + 1];
        for (int col = 0; col < B; ++col) {
            for (int j = 0; j < nz; ++j) {
                const double P = a(iP(j), col);
                const double Ia = a(j, col), Ib = b(j, col);
                const double Xa = a(nz + j, col), Xb = b(nz + j, col);
                const double kX = c.lambda_X + c.sigma_X * P;
                const double rI = ((Ib - Ia) / dt - c.gamma_I * P + 0.5 * c.lambda_I * (Ia + Ib)) * dt / s(j);
                const double rX = ((Xb - Xa) / dt - c.gamma_X * P - 0.5 * c.lambda_I * (Ia + Ib) +
                                   0.5 * kX * (Xa + Xb)) *
                                  dt / s(nz + j);
                total += rI * rI + rX * rX;
                if (d_states) {
                    const double gI = weight * 2.0 * rI / count * dt / s(j);
                    const double gX = weight * 2.0 * rX / count * dt / s(nz + j);
                    auto& da = (*d_states)[l];
                    auto& db = (*d_states)[l + 1];
                    db(j, col) += gI * (1.0 / dt + 0.5 * c.lambda_I) - gX * 0.5 * c.lambda_I;
                    da(j, col) += gI * (-1.0 / dt + 0.5 * c.lambda_I) - gX * 0.5 * c.lambda_I;
                    db(nz + j, col) += gX * (1.0 / dt + 0.5 * kX);
                    da(nz + j, col) += gX * (-1.0 / dt + 0.5 * kX);
                    da(iP(j), col) += -gI * c.gamma_I + gX * (-c.gamma_X + 0.5 * c.sigma_X * (Xa + Xb));
                }
            }
            const double rh = ((b(ih, col) - a(ih, col)) / dt - u(l, col)) * dt / s(ih);
            total += rh * rh;
            if (d_states) {
                const double gh = weight * 2.0 * rh / count / s(ih);
                (*d_states)[l + 1](ih, col) += gh;
                (*d_states)[l](ih, col) -= gh;
            }
        }
    }
    return total / count;
}

namespace {

struct BatchInputs {
    std::vector<Eigen::MatrixXd> context;
    Eigen::MatrixXd u, w;
    std::vector<Eigen::MatrixXd> targets;
};

BatchInputs gather(const std::vector<TrajectoryData>& data, std::span<const Window> batch, int H, int L) {
    const int B = static_cast<int>(batch.size());
    const int nx = static_cast<int>(data.front().x.rows());
    BatchInputs bi;
    bi.context.assign(H + 1, Eigen::MatrixXd(nx, B));
    bi.targets.assign(L, Eigen::MatrixXd(nx, B));
    bi.u.resize(L, B);
    bi.w.resize(L, B);
    for (int b = 0; b < B; ++b) {
        const auto& t = data[batch[b].traj];
        const int k = batch[b].k;
        for (int i = 0; i <= H; ++i) bi.context[i].col(b) = t.x.col(k - H + i);
        for (int l = 0; l < L; ++l) {
            bi.targets[l].col(b) = t.x.col(k + l + 1);
            bi.u(l, b) = t.u[k + l];
            bi.w(l, b) = t.w[k + l];
        }
    }
    return bi;
}

}  // namespace

std::vector<Window> enumerate_windows(const std::vector<TrajectoryData>& data, int H, int L) {
    std::vector<Window> out;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const int n = data[i].steps();
        for (int k = H; k + L <= n; ++k) out.push_back({static_cast<int>(i), k});
    }
    return out;
}

double training_loss(const SurrogateNet& net, const LossProblem& prob, std::span<const Window> batch,
                     std::vector<double>* grad) {
    const auto& cfg = net.config();
    const int H = cfg.H, L = cfg.L;
    const auto bi = gather(*prob.data, batch, H, L);
    const auto tape = net.forward(bi.context, bi.u, bi.w);
    const int nx = net.state_dim();
    const int B = static_cast<int>(batch.size());
    const Eigen::ArrayXd inv_s = net.x_norm().std.array().inverse();
    const double count = static_cast<double>(L) * nx * B;
    double loss = 0.0;
    std::vector<Eigen::MatrixXd> d(L);
    for (int l = 0; l < L; ++l) {
        const Eigen::ArrayXXd e = (tape.states[H + 1 + l] - bi.targets[l]).array().colwise() * inv_s;
        loss += e.square().sum();
        d[l] = ((2.0 / count) * (e.colwise() * inv_s)).matrix();
    }
    loss /= count;
    if (cfg.lambda > 0 && cfg.reg_kind == RegKind::PhysicsResidual) {
        std::vector<Eigen::MatrixXd> window(tape.states.begin() + H, tape.states.end());
        std::vector<Eigen::MatrixXd> dw(window.size(), Eigen::MatrixXd::Zero(nx, B));
        loss += cfg.lambda * physics_residual(window, bi.u, prob.phys, net.x_norm().std, grad ? &dw : nullptr,
                                              cfg.lambda);
        for (int l = 0; l < L; ++l) d[l] += dw[l + 1];
    }
    if (grad) {
        auto rg = net.backward(tape, d, true);
        *grad = std::move(rg.params);
    }
    if (cfg.lambda > 0 && cfg.reg_kind == RegKind::WeightDecay) {
        loss += cfg.lambda *
                net.mlp().weight_sq_norm(grad ? std::span<double>(*grad) : std::span<double>{}, cfg.lambda);
    }
    return loss;
}

double validation_mse(const SurrogateNet& net, const std::vector<TrajectoryData>& data,
                      std::span<const Window> windows, int L) {
    if (windows.empty()) return 0.0;
    const int H = net.H();
    const Eigen::ArrayXd inv_s = net.x_norm().std.array().inverse();
    double sum = 0.0;
    constexpr std::size_t chunk = 256;
    for (std::size_t off = 0; off < windows.size(); off += chunk) {
        const auto part = windows.subspan(off, std::min(chunk, windows.size() - off));
        const auto bi = gather(data, part, H, L);
        const auto tape = net.forward(bi.context, bi.u, bi.w);
        for (int l = 0; l < L; ++l) {
            sum += ((tape.states[H + 1 + l] - bi.targets[l]).array().colwise() * inv_s).square().sum();
        }
    }
    return sum / (static_cast<double>(windows.size()) * L * net.state_dim());
}

TrainResult train_surrogate(const std::vector<TrajectoryData>& dataset, const SurrogateConfig& cfg,
                            const PhysicsConsts& phys, const EpochHook& hook) {
    cfg.validate();
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    if (dataset.size() < 2) throw std::invalid_argument("surrogate training needs at least 2 trajectories");
    for (const auto& t : dataset) {
        if (t.steps() < cfg.H + cfg.L) {
            throw std::invalid_argument("trajectory shorter than H+L+1 states");
        }
    }
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_val = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(cfg.val_fraction * static_cast<double>(dataset.size()))), 1,
        dataset.size() - 1);
    std::vector<TrajectoryData> val, train;
    for (std::size_t i = 0; i < order.size(); ++i) (i < n_val ? val : train).push_back(dataset[order[i]]);

    const int nx = static_cast<int>(train.front().x.rows());
    std::size_t n_states = 0, n_steps = 0;
    for (const auto& t : train) {
        n_states += t.x.cols();
        n_steps += t.u.size();
    }
    Eigen::MatrixXd xs(nx, n_states), uw(2, n_steps), dx(nx, n_steps);
    {
        std::size_t cs = 0, cu = 0;
        for (const auto& t : train) {
            xs.middleCols(cs, t.x.cols()) = t.x;
            cs += t.x.cols();
            for (int k = 0; k < t.steps(); ++k, ++cu) {
                uw(0, cu) = t.u[k];
                uw(1, cu) = t.w[k];
                dx.col(cu) = t.x.col(k + 1) - t.x.col(k);
            }
        }
    }
    const auto x_norm = Normalizer::fit(xs, 1e-6);
    const auto uw_norm = Normalizer::fit(uw, 1e-6);
    Eigen::VectorXd delta_scale = (dx.array().square().rowwise().sum() / static_cast<double>(n_steps)).sqrt();
    for (Eigen::Index i = 0; i < delta_scale.size(); ++i) {
        delta_scale(i) = std::max(delta_scale(i), 1e-6 * x_norm.std(i));
    }

    TrainResult res;
    res.net = SurrogateNet(cfg, nx, x_norm, uw_norm, delta_scale, rng());
    res.record.train_trajectories = train.size();
    res.record.val_trajectories = val.size();

    auto train_windows = enumerate_windows(train, cfg.H, cfg.L);
    auto val_all = enumerate_windows(val, cfg.H, cfg.L);
    auto val_one = enumerate_windows(val, cfg.H, 1);
    auto subsample = [&](std::vector<Window> all) {
        if (cfg.val_windows == 0 || all.size() <= static_cast<std::size_t>(cfg.val_windows)) return all;
        std::vector<Window> sub;
        const double stride = static_cast<double>(all.size()) / cfg.val_windows;
        for (int i = 0; i < cfg.val_windows; ++i) sub.push_back(all[static_cast<std::size_t>(i * stride)]);
        return sub;
    };
    const auto val_L = subsample(std::move(val_all));
    const auto val_1 = subsample(std::move(val_one));

    LossProblem prob{&train, phys};
    auto& net = res.net;
    std::vector<double> theta = net.mlp().get_params();
    std::vector<double> best_theta = theta;
    Adam adam(theta.size(), AdamHyper{cfg.lr, 0.9, 0.999, 1e-8});

    auto record_epoch = [&](int epoch, double train_loss) {
        TrainEpoch e;
        e.epoch = epoch;
        e.train_loss = train_loss;
        e.val_mse_1 = validation_mse(net, val, val_1, 1);
        e.val_mse_L = validation_mse(net, val, val_L, cfg.L);
        e.wall_seconds = std::chrono::duration<double>(clock::now() - t0).count();
        if (!std::isfinite(e.val_mse_L) || !std::isfinite(e.train_loss)) {
            throw SurrogateError("training diverged at epoch " + std::to_string(epoch));
        }
        res.record.epochs.push_back(e);
        if (hook) hook(e, net);
        return e;
    };

    double initial_loss = 0.0;
    {
        const std::size_t n0 = std::min<std::size_t>(train_windows.size(), 256);
        initial_loss = training_loss(net, prob, std::span(train_windows).first(n0), nullptr);
    }
    double best_val = record_epoch(0, initial_loss).val_mse_L;
    int since_best = 0;
    std::vector<double> grad;
    const std::size_t B = static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::size_t n_batches;
        if (cfg.batches_per_epoch == 0) {
            std::shuffle(train_windows.begin(), train_windows.end(), rng);
            n_batches = (train_windows.size() + B - 1) / B;
        } else {
            n_batches = static_cast<std::size_t>(cfg.batches_per_epoch);
            const std::size_t need = std::min(train_windows.size(), n_batches * B);
            for (std::size_t i = 0; i < need; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, train_windows.size() - 1);
                std::swap(train_windows[i], train_windows[pick(rng)]);
            }
            n_batches = (need + B - 1) / B;
        }
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < n_batches; ++b) {
            const std::size_t off = b * B;
            const std::size_t len = std::min(B, train_windows.size() - off);
            const double loss = training_loss(net, prob, std::span(train_windows).subspan(off, len), &grad);
            if (!std::isfinite(loss)) throw SurrogateError("non-finite training loss at epoch " + std::to_string(epoch));
            loss_sum += loss;
            adam.step(theta, grad);
            net.mlp().set_params(theta);
        }
        const auto e = record_epoch(epoch, loss_sum / static_cast<double>(n_batches));
        if (e.val_mse_L < best_val) {
            best_val = e.val_mse_L;
            best_theta = theta;
            res.record.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    net.mlp().set_params(best_theta);
    return res;
}

}  // namespace sdo
