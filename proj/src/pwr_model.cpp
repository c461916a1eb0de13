#include "sdo/pwr_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sdo {

namespace {

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double logistic(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Rod parking margin above/below the core, in units of the smoothing width.
constexpr double kParkWidths = 8.0;

}  // namespace

void ModelParams::validate() const {
    std::vector<std::string> bad;
    auto check = [&](bool ok, const char* what) {
        if (!ok) bad.emplace_back(what);
    };
    check(n_z >= 2 && n_z % 2 == 0, "n_z must be even and >= 2");
    check(gamma_I > 0 && gamma_X > 0, "fission yields must be positive");
    check(lambda_I > 0 && lambda_X > 0, "decay constants must be positive");
    check(sigma_X > 0, "sigma_X must be positive");
    check(D > 0, "D must be positive");
    check(rod_shape_width > 0, "rod_shape_width must be positive");
    check(P_nom > 0, "P_nom must be positive");
    check(h_min < h_max, "h_min < h_max required");
    check(h_ref >= h_min && h_ref <= h_max, "h_ref must lie in [h_min, h_max]");
    check(u_min < 0 && 0 < u_max, "u_min < 0 < u_max required");
    check(C_b_min < C_b_max, "C_b_min < C_b_max required");
    check(n_sub >= 1, "n_sub must be >= 1");
    check(newton_max_iter >= 1, "newton_max_iter must be >= 1");
    check(newton_tol > 0, "newton_tol must be positive");
    if (!bad.empty()) {
        std::ostringstream os;
        os << "invalid model parameters:";
        for (const auto& b : bad) os << " [" << b << "]";
        throw ConfigError(os.str());
    }
}

std::vector<double> SimState::to_vector() const {
    std::vector<double> v;
    v.reserve(state_dim(n_z()));
    v.insert(v.end(), I.begin(), I.end());
    v.insert(v.end(), X.begin(), X.end());
    v.push_back(h_cr);
    v.insert(v.end(), P.begin(), P.end());
    v.push_back(C_b);
    v.push_back(T_in);
    return v;
}

SimState SimState::from_vector(std::span<const double> v, int n_z) {
    if (static_cast<int>(v.size()) != state_dim(n_z)) {
        throw std::invalid_argument("state vector has wrong length");
    }
    const StateLayout lay{n_z};
    SimState s;
    s.I.assign(v.begin(), v.begin() + n_z);
    s.X.assign(v.begin() + n_z, v.begin() + 2 * n_z);
    s.h_cr = v[lay.h()];
    s.P.assign(v.begin() + lay.P(0), v.begin() + lay.P(0) + n_z);
    s.C_b = v[lay.C_b()];
    s.T_in = v[lay.T_in()];
    return s;
}

CallCounter& global_sim_calls() {
    static CallCounter counter;
    return counter;
}

Eigen::MatrixXd build_exchange_matrix(int n_z) {
    if (n_z < 2 || n_z % 2 != 0) {
        throw ConfigError("exchange matrix needs an even node count >= 2, got " + std::to_string(n_z));
    }
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n_z, n_z);
    for (int j = 0; j < n_z; ++j) {
        m(j, j) = (j == 0 || j == n_z - 1) ? -1.0 : -2.0;
        if (j + 1 < n_z) {
            m(j, j + 1) = 1.0;
            m(j + 1, j) = 1.0;
        }
    }
    return m;
}

PwrModel::PwrModel(ModelParams p) : params_(std::move(p)), exch_(build_exchange_matrix(params_.n_z)) {}

PwrModel PwrModel::calibrate(const ModelParams& params) {
    params.validate();
    PwrModel m(params);
    const int n = params.n_z;
    auto& cal = m.cal_;
    // rho = 0 everywhere forces M_exch P0 = 0, i.e. a flat nominal profile.
    cal.P0.assign(n, params.P_nom / n);
    cal.I0.resize(n);
    cal.X0.resize(n);
    for (int j = 0; j < n; ++j) {
        cal.I0[j] = m.iodine_eq(cal.P0[j]);
        cal.X0[j] = m.xenon_eq(cal.P0[j]);
    }
    cal.C_b0 = params.C_b_ref;
    cal.T_in0 = m.T_ref(params.P_nom);
    cal.rod_bias.resize(n);
    for (int j = 0; j < n; ++j) {
        cal.rod_bias[j] = -m.rod_reactivity(params.h_ref, j);
    }
    return m;
}

double PwrModel::xenon_eq(double P) const {
    const auto& p = params_;
    return (p.gamma_X + p.gamma_I) * P / (p.lambda_X + p.sigma_X * P);
}

double PwrModel::insertion_depth(double h_cr) const {
    const auto& p = params_;
    const double margin = kParkWidths * p.rod_shape_width;
    return -margin + (p.n_z + 2.0 * margin) * (p.h_max - h_cr) / (p.h_max - p.h_min);
}

double PwrModel::rod_cover(double h_cr, int j) const {
    const double w = params_.rod_shape_width;
    const double d = insertion_depth(h_cr);
    return w * (softplus((d - j) / w) - softplus((d - j - 1) / w));
}

double PwrModel::rod_cover_dh(double h_cr, int j) const {
    const auto& p = params_;
    const double w = p.rod_shape_width;
    const double d = insertion_depth(h_cr);
    const double margin = kParkWidths * w;
    const double dd_dh = -(p.n_z + 2.0 * margin) / (p.h_max - p.h_min);
    return (logistic((d - j) / w) - logistic((d - j - 1) / w)) * dd_dh;
}

double PwrModel::reactivity(std::span<const double> P, double T_in, double X_j, double h_cr,
                            double C_b, int j) const {
    const auto& p = params_;
    return p.alpha_T * (T_in - cal_.T_in0) + p.alpha_D * (P[j] - cal_.P0[j]) +
           p.alpha_X * (X_j - cal_.X0[j]) + p.alpha_b * (C_b - cal_.C_b0) + rod_reactivity(h_cr, j) +
           cal_.rod_bias[j];
}

Eigen::VectorXd PwrModel::algebraic_residual(const SimState& s, double w) const {
    const int n = n_z();
    Eigen::Map<const Eigen::VectorXd> P(s.P.data(), n);
    Eigen::VectorXd r(n + 1);
    const Eigen::VectorXd coupling = params_.D * (exch_ * P);
    for (int j = 0; j < n; ++j) {
        r(j) = reactivity(s.P, s.T_in, s.X[j], s.h_cr, s.C_b, j) * s.P[j] + coupling(j);
    }
    r(n) = P.sum() - w;
    return r;
}

SimState PwrModel::solve_algebraic(SimState s, double w) const {
    const auto& p = params_;
    const int n = n_z();
    if (!(w > 0.0) || w > p.P_nom * (1.0 + 1e-12)) {
        throw IntegrationError("load outside (0, P_nom]: " + std::to_string(w));
    }
    s.T_in = T_ref(w);

    Eigen::MatrixXd jac(n + 1, n + 1);
    Eigen::VectorXd r = algebraic_residual(s, w);
    double rnorm = r.lpNorm<Eigen::Infinity>();
    for (int it = 0; it < p.newton_max_iter && rnorm > 1e-14; ++it) {
        jac.setZero();
        jac.topLeftCorner(n, n) = p.D * exch_;
        for (int j = 0; j < n; ++j) {
            const double rho = reactivity(s.P, s.T_in, s.X[j], s.h_cr, s.C_b, j);
            jac(j, j) += rho + s.P[j] * p.alpha_D;
            jac(j, n) = p.alpha_b * s.P[j];
            jac(n, j) = 1.0;
        }
        const Eigen::VectorXd delta = jac.partialPivLu().solve(-r);
        if (!delta.allFinite()) {
            throw IntegrationError("singular algebraic Jacobian", -1, rnorm);
        }

        double alpha = 1.0;
        auto positive = [&](double a) {
            for (int j = 0; j < n; ++j) {
                if (s.P[j] + a * delta(j) <= 0.0) return false;
            }
            return true;
        };
        int halvings = 0;
        while (!positive(alpha)) {
            alpha *= 0.5;
            if (++halvings > 40) {
                throw IntegrationError("negative nodal power in algebraic solve", -1, rnorm);
            }
        }
        for (int j = 0; j < n; ++j) s.P[j] += alpha * delta(j);
        s.C_b += alpha * delta(n);

        const double prev = rnorm;
        r = algebraic_residual(s, w);
        rnorm = r.lpNorm<Eigen::Infinity>();
        // Converged to round-off: further iterations cannot improve.
        if (rnorm <= p.newton_tol && rnorm >= 0.5 * prev) break;
    }
    if (!(rnorm <= p.newton_tol)) {
        throw IntegrationError("algebraic Newton solve did not converge", -1, rnorm);
    }
    return s;
}

SimState PwrModel::step(const SimState& s, double u, double w, double dt, CallCounter* local) const {
    const auto& p = params_;
    const int n = n_z();
    const double h = dt / p.n_sub;

    std::vector<double> I = s.I;
    std::vector<double> X = s.X;
    std::vector<double> kI[4], kX[4];
    for (int stage = 0; stage < 4; ++stage) {
        kI[stage].resize(n);
        kX[stage].resize(n);
    }
    std::vector<double> It(n), Xt(n);
    auto rhs = [&](const std::vector<double>& Iv, const std::vector<double>& Xv, std::vector<double>& dI,
                   std::vector<double>& dX) {
        for (int j = 0; j < n; ++j) {
            dI[j] = p.gamma_I * s.P[j] - p.lambda_I * Iv[j];
            dX[j] = p.gamma_X * s.P[j] + p.lambda_I * Iv[j] - (p.lambda_X + p.sigma_X * s.P[j]) * Xv[j];
        }
    };
    for (int sub = 0; sub < p.n_sub; ++sub) {
        rhs(I, X, kI[0], kX[0]);
        for (int j = 0; j < n; ++j) {
            It[j] = I[j] + 0.5 * h * kI[0][j];
            Xt[j] = X[j] + 0.5 * h * kX[0][j];
        }
        rhs(It, Xt, kI[1], kX[1]);
        for (int j = 0; j < n; ++j) {
            It[j] = I[j] + 0.5 * h * kI[1][j];
            Xt[j] = X[j] + 0.5 * h * kX[1][j];
        }
        rhs(It, Xt, kI[2], kX[2]);
        for (int j = 0; j < n; ++j) {
            It[j] = I[j] + h * kI[2][j];
            Xt[j] = X[j] + h * kX[2][j];
        }
        rhs(It, Xt, kI[3], kX[3]);
        for (int j = 0; j < n; ++j) {
            I[j] += h / 6.0 * (kI[0][j] + 2.0 * kI[1][j] + 2.0 * kI[2][j] + kI[3][j]);
            X[j] += h / 6.0 * (kX[0][j] + 2.0 * kX[1][j] + 2.0 * kX[2][j] + kX[3][j]);
        }
    }

    SimState next = s;
    next.I = std::move(I);
    next.X = std::move(X);
    next.h_cr = std::clamp(s.h_cr + u * dt, p.h_min, p.h_max);

    global_sim_calls().add(p.n_sub);
    if (local) local->add(p.n_sub);
    return solve_algebraic(std::move(next), w);
}

SimState PwrModel::steady_state(double w0) const {
    const auto& p = params_;
    if (!(w0 > 0.0) || w0 > p.P_nom * (1.0 + 1e-12)) {
        throw IntegrationError("steady state load outside (0, P_nom]: " + std::to_string(w0));
    }
    const int n = n_z();
    SimState s;
    s.P.assign(n, w0 / n);
    s.I.resize(n);
    s.X.resize(n);
    s.h_cr = p.h_ref;
    s.C_b = cal_.C_b0;
    s.T_in = T_ref(w0);

    constexpr int kMaxOuter = 200;
    for (int it = 0; it < kMaxOuter; ++it) {
        for (int j = 0; j < n; ++j) {
            s.I[j] = iodine_eq(s.P[j]);
            s.X[j] = xenon_eq(s.P[j]);
        }
        const SimState next = solve_algebraic(s, w0);
        double change = std::abs(next.C_b - s.C_b) / std::max(1.0, std::abs(s.C_b));
        for (int j = 0; j < n; ++j) change = std::max(change, std::abs(next.P[j] - s.P[j]));
        s = next;
        if (change <= 1e-14) return s;
    }
    throw IntegrationError("steady state fixed point did not converge");
}

Trajectory PwrModel::simulate(const SimState& x0, std::span<const double> u, std::span<const double> w,
                              double dt, CallCounter* local) const {
    if (u.size() != w.size()) {
        throw std::invalid_argument("control and load sequences differ in length");
    }
    Trajectory traj;
    traj.dt = dt;
    traj.u.assign(u.begin(), u.end());
    traj.w.assign(w.begin(), w.end());
    traj.states.reserve(u.size() + 1);
    traj.states.push_back(x0);
    for (std::size_t k = 0; k < u.size(); ++k) {
        try {
            traj.states.push_back(step(traj.states.back(), u[k], w[k], dt, local));
        } catch (const IntegrationError& e) {
            throw IntegrationError(std::string(e.what()) + " at step " + std::to_string(k),
                                   static_cast<int>(k), e.residual());
        }
    }
    return traj;
}

}  // namespace sdo
