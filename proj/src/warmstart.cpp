#include "sdo/warmstart.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace sdo {

std::string to_string(Perturbation p) { return p == Perturbation::LoadChange ? "load_change" : "cost_change"; }

Perturbation perturbation_from_string(const std::string& s) {
    if (s == "load_change") return Perturbation::LoadChange;
    if (s == "cost_change") return Perturbation::CostChange;
    throw ConfigError("unknown perturbation '" + s + "' (expected load_change or cost_change)");
}

std::string to_string(BudgetMode m) { return m == BudgetMode::CostModel ? "cost_model" : "wall_clock"; }

BudgetMode budget_mode_from_string(const std::string& s) {
    if (s == "cost_model") return BudgetMode::CostModel;
    if (s == "wall_clock") return BudgetMode::WallClock;
    throw ConfigError("unknown budget mode '" + s + "' (expected cost_model or wall_clock)");
}

void Scenario::validate() const {
    if (context.empty()) throw std::invalid_argument("scenario " + std::to_string(id) + ": empty context");
    spec.validate();
    spec_prev.validate();
    if (static_cast<int>(w.size()) != spec.N || static_cast<int>(w_prev.size()) != spec_prev.N ||
        static_cast<int>(u_prev.size()) != spec_prev.N) {
        throw std::invalid_argument("scenario " + std::to_string(id) + ": sequence lengths do not match N");
    }
}

nlohmann::json to_json(const OcpSpec& s) {
    return {{"N", s.N},           {"dt", s.dt},         {"cost_kind", to_string(s.cost_kind)},
            {"AO_ref", s.AO_ref}, {"AO_min", s.AO_min}, {"AO_max", s.AO_max},
            {"nu", s.nu},         {"boron_scale", s.boron_scale},
            {"u_min", s.box.lo},  {"u_max", s.box.hi}};
}

OcpSpec ocp_spec_from_json(const nlohmann::json& j) {
    OcpSpec s;
    s.N = j.at("N");
    s.dt = j.at("dt");
    s.cost_kind = cost_kind_from_string(j.at("cost_kind"));
    s.AO_ref = j.at("AO_ref");
    s.AO_min = j.at("AO_min");
    s.AO_max = j.at("AO_max");
    s.nu = j.at("nu");
    s.boron_scale = j.at("boron_scale");
    s.box = {j.at("u_min"), j.at("u_max")};
    return s;
}

nlohmann::json to_json(const SimState& s) { return {{"n_z", s.n_z()}, {"x", s.to_vector()}}; }

SimState sim_state_from_json(const nlohmann::json& j) {
    return SimState::from_vector(j.at("x").get<std::vector<double>>(), j.at("n_z").get<int>());
}

nlohmann::json to_json(const Scenario& s) {
    nlohmann::json ctx = nlohmann::json::array();
    for (const auto& c : s.context) ctx.push_back(to_json(c));
    return {{"id", s.id},          {"kind", to_string(s.kind)},    {"context", ctx},
            {"w", s.w},            {"spec", to_json(s.spec)},      {"w_prev", s.w_prev},
            {"spec_prev", to_json(s.spec_prev)}, {"u_prev", s.u_prev}};
}

Scenario scenario_from_json(const nlohmann::json& j) {
    Scenario s;
    s.id = j.at("id");
    s.kind = perturbation_from_string(j.at("kind"));
    for (const auto& c : j.at("context")) s.context.push_back(sim_state_from_json(c));
    s.w = j.at("w").get<LoadProfile>();
    s.spec = ocp_spec_from_json(j.at("spec"));
    s.w_prev = j.at("w_prev").get<LoadProfile>();
    s.spec_prev = ocp_spec_from_json(j.at("spec_prev"));
    s.u_prev = j.at("u_prev").get<ControlSequence>();
    s.validate();
    return s;
}

ControlSequence cold_start(const OcpSpec& spec) { return ControlSequence(static_cast<std::size_t>(spec.N), 0.0); }

ControlSequence shift_init(const ControlSequence& prev, const ControlBox& box) {
    ControlSequence out;
    out.reserve(prev.size());
    for (std::size_t k = 1; k < prev.size(); ++k) out.push_back(box.clip(prev[k]));
    if (!prev.empty()) out.push_back(box.nearest_to_zero());
    return out;
}

Evaluation FullProblem::evaluate(std::span<const double> u) const {
    const auto ev = evaluate_full(*model, u, x0, w, spec, counter);
    return {ev.J_pen, ev.J, ev.violation_sum};
}

std::vector<double> FullProblem::gradient(std::span<const double> u, const Evaluation& at,
                                          const RefineOptions& opt) const {
    FdOptions fo;
    fo.rel_step = opt.fd_rel_step;
    fo.u_scale = 0.5 * (spec.box.hi - spec.box.lo);
    fo.parallelism = opt.parallelism;
    return fd_gradient([this](std::span<const double> v) { return evaluate(v).value; }, u, at.value, fo);
}

OptResult refine_full(const PwrModel& model, const SimState& x0, const LoadProfile& w, const OcpSpec& spec,
                      std::span<const double> u0, int iterations, const RefineOptions& opt) {
    CallCounter counter;
    FullProblem prob{&model, x0, w, spec, &counter};
    for (double v : u0) {
        if (!spec.box.contains(v)) throw std::invalid_argument("refine_full: initial guess outside the box");
    }
    DescentOptions dopt;
    dopt.step = opt.step;
    dopt.cost_counter = [&counter] { return counter.value(); };
    return projected_descent([&](std::span<const double> u) { return prob.evaluate(u); },
                             [&](std::span<const double> u, const Evaluation& at) {
                                 return prob.gradient(u, at, opt);
                             },
                             u0, spec.box, iterations, dopt);
}

OptResult refine_full(const PwrModel& model, const Scenario& sc, std::span<const double> u0, int iterations,
                      const RefineOptions& opt) {
    return refine_full(model, sc.x0(), sc.w, sc.spec, u0, iterations, opt);
}

SurrogateProblem SurrogateProblem::from(const SurrogateNet& net, const Scenario& sc, double nu) {
    const int H = net.H();
    if (static_cast<int>(sc.context.size()) < H + 1) {
        throw std::invalid_argument("scenario context shorter than the surrogate window H+1");
    }
    SurrogateProblem p;
    p.net = &net;
    for (std::size_t i = sc.context.size() - static_cast<std::size_t>(H) - 1; i < sc.context.size(); ++i) {
        const auto v = sc.context[i].to_vector();
        p.context.emplace_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    p.w = sc.w;
    p.spec = sc.spec;
    p.spec.nu = nu;
    return p;
}

namespace {

// Cost of predicted states and, optionally, its gradient with respect to them.
Evaluation surrogate_cost(const std::vector<Eigen::VectorXd>& xs, const Eigen::VectorXd& x0, const OcpSpec& spec,
                          int n_z, std::vector<Eigen::VectorXd>* grad) {
    const StateLayout lay{n_z};
    Evaluation ev;
    if (grad) grad->assign(xs.size(), Eigen::VectorXd::Zero(x0.size()));
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const auto& x = xs[k];
        const std::span<const double> P(x.data() + lay.P(0), static_cast<std::size_t>(n_z));
        const double ao = axial_offset(P);
        double d_ao = 0.0;
        if (spec.cost_kind == CostKind::AxialOffsetTarget) {
            const double d = ao - spec.AO_ref;
            ev.J += d * d;
            d_ao += 2.0 * d;
        } else {
            const double prev = k == 0 ? x0(lay.C_b()) : xs[k - 1](lay.C_b());
            const double d = (x(lay.C_b()) - prev) / spec.boron_scale;
            ev.J += d * d;
            if (grad) {
                (*grad)[k](lay.C_b()) += 2.0 * d / spec.boron_scale;
                if (k > 0) (*grad)[k - 1](lay.C_b()) -= 2.0 * d / spec.boron_scale;
            }
        }
        const double v = ao_violation(ao, spec);
        ev.violation += v;
        if (ao > spec.AO_max) d_ao += spec.nu;
        if (ao < spec.AO_min) d_ao -= spec.nu;
        if (grad && d_ao != 0.0) {
            const auto g = axial_offset_grad(P);
            for (int j = 0; j < n_z; ++j) (*grad)[k](lay.P(j)) += d_ao * g[j];
        }
    }
    ev.value = ev.J + spec.nu * ev.violation;
    return ev;
}

int n_z_from_dim(int dim) { return (dim - 3) / 3; }

}  // namespace

Evaluation SurrogateProblem::evaluate(std::span<const double> u) const {
    const auto xs = net->rollout(context, u, w);
    return surrogate_cost(xs, context.back(), spec, n_z_from_dim(net->state_dim()), nullptr);
}

std::vector<double> SurrogateProblem::gradient(std::span<const double> u, Evaluation* value) const {
    const auto xs = net->rollout(context, u, w);
    std::vector<Eigen::VectorXd> d;
    const auto ev = surrogate_cost(xs, context.back(), spec, n_z_from_dim(net->state_dim()), &d);
    if (value) *value = ev;
    return net->input_gradient(context, u, w, d);
}

SdoResult sdo_warmstart(const SurrogateNet& net, const Scenario& sc, const SdoOptions& opt) {
    using clock = std::chrono::steady_clock;
    SdoResult res;
    const ControlSequence u_init = opt.start_from_shift ? shift_init(sc.u_prev, sc.spec.box) : cold_start(sc.spec);
    res.u = u_init;
    if (!(opt.fraction > 0.0)) return res;

    const double N = sc.spec.N;
    const double rollout_units = 1.0 / opt.speedup;
    res.budget_units = opt.fraction * opt.full_iterations * (N + 2.0);
    const double budget_seconds = opt.fraction * opt.full_iterations * opt.full_iteration_seconds;
    const auto t0 = clock::now();
    try {
        const auto prob = SurrogateProblem::from(net, sc, opt.nu);
        DescentOptions dopt;
        dopt.step = opt.step;
        dopt.out_of_budget = [&] {
            if (opt.mode == BudgetMode::WallClock) {
                return std::chrono::duration<double>(clock::now() - t0).count() >= budget_seconds;
            }
            // leave room for one gradient and one trial
            return res.used_units + 4.0 * rollout_units > res.budget_units;
        };
        const auto objective = [&](std::span<const double> u) {
            res.used_units += rollout_units;
            return prob.evaluate(u);
        };
        const auto gradient = [&](std::span<const double> u, const Evaluation&) {
            res.used_units += 3.0 * rollout_units;
            return prob.gradient(u);
        };
        const auto out = projected_descent(objective, gradient, u_init, sc.spec.box, 1'000'000, dopt);
        res.iterations = static_cast<int>(out.trace.rows.size()) - 1;
        res.start = {out.trace.rows.front().J_pen, out.trace.rows.front().J, out.trace.rows.front().violation};
        res.best = out.best;
        res.u = out.u_best;
        for (auto& v : res.u) v = sc.spec.box.clip(v);
    } catch (const std::exception& e) {
        res.u = cold_start(sc.spec);
        res.fell_back = true;
        res.warning = std::string("surrogate optimization failed, using cold start: ") + e.what();
    }
    return res;
}

void BcConfig::validate() const {
    std::vector<std::string> bad;
    if (hidden.empty()) bad.emplace_back("at least one hidden layer required");
    if (!(lr > 0)) bad.emplace_back("lr must be positive");
    if (epochs < 0) bad.emplace_back("epochs must be >= 0");
    if (!(val_fraction > 0 && val_fraction < 1)) bad.emplace_back("val_fraction must lie in (0, 1)");
    if (w_stride < 1) bad.emplace_back("w_stride must be >= 1");
    if (!bad.empty()) {
        std::ostringstream os;
        os << "invalid bc config:";
        for (const auto& b : bad) os << " [" << b << "]";
        throw ConfigError(os.str());
    }
}

Eigen::VectorXd BcNet::raw_features(const Scenario& sc) const {
    if (static_cast<int>(sc.context.size()) < H_ + 1 || sc.spec.N != N_) {
        throw std::invalid_argument("scenario does not match the behavior-cloning input layout");
    }
    const int dim = state_dim(n_z_);
    const int n_w = (N_ + w_stride_ - 1) / w_stride_;
    Eigen::VectorXd f((H_ + 1) * dim + 2 + n_w);
    int off = 0;
    for (std::size_t i = sc.context.size() - static_cast<std::size_t>(H_) - 1; i < sc.context.size(); ++i) {
        const auto v = sc.context[i].to_vector();
        for (double x : v) f(off++) = x;
    }
    f(off++) = sc.spec.cost_kind == CostKind::AxialOffsetTarget ? 1.0 : 0.0;
    f(off++) = sc.spec.cost_kind == CostKind::BoronSmoothness ? 1.0 : 0.0;
    for (int k = 0; k < N_; k += w_stride_) f(off++) = sc.w[static_cast<std::size_t>(k)];
    return f;
}

Eigen::VectorXd BcNet::features(const Scenario& sc) const { return in_norm_.normalize(raw_features(sc)); }

ControlSequence BcNet::predict(const Scenario& sc) const {
    const Eigen::MatrixXd z = mlp_.forward(Eigen::MatrixXd(features(sc)));
    const double center = 0.5 * (box_.hi + box_.lo), half = 0.5 * (box_.hi - box_.lo);
    ControlSequence u(static_cast<std::size_t>(N_));
    for (int k = 0; k < N_; ++k) u[k] = box_.clip(center + half * z(k, 0));
    return u;
}

BcNet bc_train(const std::vector<BcSample>& data, const BcConfig& cfg, std::uint64_t dataset_sim_calls) {
    cfg.validate();
    if (data.size() < 2) throw std::invalid_argument("behavior cloning needs at least 2 solved scenarios");
    BcNet net;
    const auto& first = data.front().scenario;
    net.N_ = first.spec.N;
    net.H_ = static_cast<int>(first.context.size()) - 1;
    net.n_z_ = first.x0().n_z();
    net.w_stride_ = cfg.w_stride;
    net.box_ = first.spec.box;
    net.dataset_sim_calls = dataset_sim_calls;

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_val = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(cfg.val_fraction * static_cast<double>(data.size()))), 1,
        data.size() - 1);

    const int n_in = static_cast<int>(net.raw_features(first).size());
    const double center = 0.5 * (net.box_.hi + net.box_.lo), half = 0.5 * (net.box_.hi - net.box_.lo);
    auto build = [&](std::size_t begin, std::size_t end, Eigen::MatrixXd& X, Eigen::MatrixXd& Y) {
        X.resize(n_in, static_cast<Eigen::Index>(end - begin));
        Y.resize(net.N_, static_cast<Eigen::Index>(end - begin));
        for (std::size_t i = begin; i < end; ++i) {
            const auto& s = data[order[i]];
            if (static_cast<int>(s.u_star.size()) != net.N_) throw std::invalid_argument("u* length mismatch");
            X.col(static_cast<Eigen::Index>(i - begin)) = net.raw_features(s.scenario);
            for (int k = 0; k < net.N_; ++k) Y(k, static_cast<Eigen::Index>(i - begin)) = (s.u_star[k] - center) / half;
        }
    };
    Eigen::MatrixXd Xv, Yv, Xt, Yt;
    build(0, n_val, Xv, Yv);
    build(n_val, data.size(), Xt, Yt);
    net.in_norm_ = Normalizer::fit(Xt, 1e-6);
    auto norm_cols = [&](Eigen::MatrixXd& X) {
        X = ((X.colwise() - net.in_norm_.mean).array().colwise() / net.in_norm_.std.array()).matrix();
    };
    norm_cols(Xt);
    norm_cols(Xv);

    std::vector<int> sizes{n_in};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(net.N_);
    net.mlp_ = Mlp(sizes, cfg.activation, rng(), 0.1);

    std::vector<double> theta = net.mlp_.get_params();
    std::vector<double> grad(theta.size());
    Adam adam(theta.size(), AdamHyper{cfg.lr, 0.9, 0.999, 1e-8});
    auto mse = [&](const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
        return (net.mlp_.forward(X) - Y).squaredNorm() / static_cast<double>(Y.size());
    };
    Mlp::Cache cache;
    for (int e = 0; e < cfg.epochs; ++e) {
        const Eigen::MatrixXd out = net.mlp_.forward(Xt, cache);
        const Eigen::MatrixXd d = (2.0 / static_cast<double>(Yt.size())) * (out - Yt);
        std::fill(grad.begin(), grad.end(), 0.0);
        net.mlp_.backward(cache, d, grad);
        adam.step(theta, grad);
        net.mlp_.set_params(theta);
    }
    net.train_loss = mse(Xt, Yt);
    net.val_loss = mse(Xv, Yv);
    if (!std::isfinite(net.train_loss)) throw OptimizationError("behavior cloning training diverged");
    return net;
}

nlohmann::json BcNet::to_json() const {
    auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    return {{"format", "sdo-bc"},
            {"version", 1},
            {"N", N_},
            {"H", H_},
            {"n_z", n_z_},
            {"w_stride", w_stride_},
            {"u_min", box_.lo},
            {"u_max", box_.hi},
            {"in_mean", vec(in_norm_.mean)},
            {"in_std", vec(in_norm_.std)},
            {"train_loss", train_loss},
            {"val_loss", val_loss},
            {"dataset_sim_calls", dataset_sim_calls},
            {"mlp", mlp_.to_json()}};
}

BcNet BcNet::from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "sdo-bc" || j.value("version", 0) != 1) {
        throw std::runtime_error("not a version-1 behavior-cloning file");
    }
    auto vec = [](const nlohmann::json& a) {
        const auto v = a.get<std::vector<double>>();
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    BcNet n;
    n.N_ = j.at("N");
    n.H_ = j.at("H");
    n.n_z_ = j.at("n_z");
    n.w_stride_ = j.at("w_stride");
    n.box_ = {j.at("u_min"), j.at("u_max")};
    n.in_norm_ = {vec(j.at("in_mean")), vec(j.at("in_std"))};
    n.train_loss = j.at("train_loss");
    n.val_loss = j.at("val_loss");
    n.dataset_sim_calls = j.at("dataset_sim_calls");
    n.mlp_ = Mlp::from_json(j.at("mlp"));
    return n;
}

void BcNet::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << to_json().dump() << '\n';
}

BcNet BcNet::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);
    return from_json(nlohmann::json::parse(f));
}

}  // namespace sdo
