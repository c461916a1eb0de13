#include "sdo/bound_check.hpp"

#include "sdo/io.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace sdo {

Eigen::VectorXd box_qp_exact(const Eigen::MatrixXd& H, const Eigen::VectorXd& g, const Eigen::VectorXd& lo,
                             const Eigen::VectorXd& hi) {
    const int d = static_cast<int>(g.size());
    if (H.rows() != d || H.cols() != d || lo.size() != d || hi.size() != d) {
        throw std::invalid_argument("box_qp_exact: dimension mismatch");
    }
    if (d > 12) throw std::invalid_argument("box_qp_exact: too many variables for enumeration");
    long total = 1;
    for (int i = 0; i < d; ++i) total *= 3;

    Eigen::VectorXd best;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<int> state(d);
    for (long code = 0; code < total; ++code) {
        long c = code;
        std::vector<int> free;
        Eigen::VectorXd u(d);
        for (int i = 0; i < d; ++i) {
            state[i] = static_cast<int>(c % 3);
            c /= 3;
            if (state[i] == 0) u(i) = lo(i);
            else if (state[i] == 1) u(i) = hi(i);
            else free.push_back(i);
        }
        if (!free.empty()) {
            const int nf = static_cast<int>(free.size());
            Eigen::MatrixXd Hff(nf, nf);
            Eigen::VectorXd rhs(nf);
            for (int a = 0; a < nf; ++a) {
                rhs(a) = -g(free[a]);
                for (int j = 0; j < d; ++j) {
                    if (state[j] != 2) rhs(a) -= H(free[a], j) * u(j);
                }
                for (int b = 0; b < nf; ++b) Hff(a, b) = H(free[a], free[b]);
            }
            const Eigen::VectorXd uf = Hff.ldlt().solve(rhs);
            bool feasible = true;
            for (int a = 0; a < nf && feasible; ++a) {
                const int i = free[a];
                const double tol = 1e-12 * std::max(1.0, hi(i) - lo(i));
                if (!(uf(a) >= lo(i) - tol && uf(a) <= hi(i) + tol)) feasible = false;
                u(i) = std::clamp(uf(a), lo(i), hi(i));
            }
            if (!feasible) continue;
        }
        const double val = 0.5 * u.dot(H * u) + g.dot(u);
        if (val < best_val) {
            best_val = val;
            best = u;
        }
    }
    return best;
}

Eigen::MatrixXd QuadraticInstance::hessian_true() const {
    return G.transpose() * Q * G + rho * Eigen::MatrixXd::Identity(dims, dims);
}

Eigen::MatrixXd QuadraticInstance::hessian_surrogate() const {
    const Eigen::MatrixXd Gs = G + E;
    return Gs.transpose() * Q * Gs + rho * Eigen::MatrixXd::Identity(dims, dims);
}

double QuadraticInstance::J_true(const Eigen::VectorXd& u) const {
    const Eigen::VectorXd r = G * u + c - y_ref;
    return 0.5 * r.dot(Q * r) + 0.5 * rho * u.squaredNorm();
}

double QuadraticInstance::J_surrogate(const Eigen::VectorXd& u) const {
    const Eigen::VectorXd r = (G + E) * u + c + f - y_ref;
    return 0.5 * r.dot(Q * r) + 0.5 * rho * u.squaredNorm();
}

Eigen::VectorXd QuadraticInstance::u_star() const {
    return box_qp_exact(hessian_true(), G.transpose() * Q * (c - y_ref), lo, hi);
}

Eigen::VectorXd QuadraticInstance::u_hat() const {
    const Eigen::MatrixXd Gs = G + E;
    return box_qp_exact(hessian_surrogate(), Gs.transpose() * Q * (c + f - y_ref), lo, hi);
}

double QuadraticInstance::gap_sup() const {
    double best = 0.0;
    const long vertices = 1L << dims;
    Eigen::VectorXd u(dims);
    for (long v = 0; v < vertices; ++v) {
        for (int i = 0; i < dims; ++i) u(i) = (v >> i) & 1 ? hi(i) : lo(i);
        best = std::max(best, (E * u + f).norm());
    }
    return best;
}

double lipschitz_bound(const QuadraticInstance& inst) {
    const Eigen::VectorXd mid = 0.5 * (inst.lo + inst.hi);
    const Eigen::VectorXd half = 0.5 * (inst.hi - inst.lo);
    const Eigen::MatrixXd Gs = inst.G + inst.E;
    const Eigen::VectorXd y_mid = inst.G * mid + inst.c;
    const Eigen::VectorXd y_rad = inst.G.cwiseAbs() * half;
    const Eigen::VectorXd s_mid = Gs * mid + inst.c + inst.f;
    const Eigen::VectorXd s_rad = Gs.cwiseAbs() * half;
    const Eigen::VectorXd z_lo = (y_mid - y_rad).cwiseMin(s_mid - s_rad) - inst.y_ref;
    const Eigen::VectorXd z_hi = (y_mid + y_rad).cwiseMax(s_mid + s_rad) - inst.y_ref;
    // gradient of the output cost is Q z; bound each component over the z box
    double sq = 0.0;
    for (Eigen::Index i = 0; i < inst.Q.rows(); ++i) {
        double g_lo = 0.0, g_hi = 0.0;
        for (Eigen::Index j = 0; j < inst.Q.cols(); ++j) {
            const double a = inst.Q(i, j) * z_lo(j), b = inst.Q(i, j) * z_hi(j);
            g_lo += std::min(a, b);
            g_hi += std::max(a, b);
        }
        const double m = std::max(std::abs(g_lo), std::abs(g_hi));
        sq += m * m;
    }
    return std::sqrt(sq);
}

namespace {

Eigen::MatrixXd randn(std::mt19937_64& rng, int r, int c) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd m(r, c);
    for (int j = 0; j < c; ++j) {
        for (int i = 0; i < r; ++i) m(i, j) = n(rng);
    }
    return m;
}

void set_gap(QuadraticInstance& inst, const Eigen::MatrixXd& E0, const Eigen::VectorXd& f0, double M) {
    inst.E = E0;
    inst.f = f0;
    const double s = inst.gap_sup();
    if (M == 0.0 || s == 0.0) {
        inst.E.setZero();
        inst.f.setZero();
        inst.M = 0.0;
    } else {
        inst.E *= M / s;
        inst.f *= M / s;
        inst.M = M;
    }
    inst.K_J = lipschitz_bound(inst);
}

}  // namespace

QuadraticInstance make_instance(std::mt19937_64& rng, double M_target, const InstanceOptions& opt) {
    if (!(M_target >= 0.0)) throw std::invalid_argument("M_target must be >= 0");
    if (opt.min_dims < 1 || opt.max_dims < opt.min_dims || opt.max_states < 1) {
        throw std::invalid_argument("bad instance dimensions");
    }
    std::uniform_int_distribution<int> dim_d(opt.min_dims, opt.max_dims), dim_x(1, opt.max_states);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int attempt = 0; attempt < 100; ++attempt) {
        QuadraticInstance inst;
        inst.dims = dim_d(rng);
        inst.n_x = dim_x(rng);
        const int d = inst.dims, n = inst.n_x, ny = d * n;

        Eigen::MatrixXd A = randn(rng, n, n);
        const double radius = Eigen::EigenSolver<Eigen::MatrixXd>(A, false).eigenvalues().cwiseAbs().maxCoeff();
        if (!(radius > 1e-8)) continue;
        A *= (0.3 + 0.6 * unif(rng)) / radius;
        inst.A = A;
        inst.B = randn(rng, n, 1);
        const Eigen::VectorXd x0 = randn(rng, n, 1);

        inst.G = Eigen::MatrixXd::Zero(ny, d);
        inst.c = Eigen::VectorXd(ny);
        Eigen::VectorXd x = x0;
        for (int k = 0; k < d; ++k) {
            x = A * x;
            inst.c.segment(k * n, n) = x;
            Eigen::MatrixXd P = inst.B;  // A^(k-j) B
            for (int j = k; j >= 0; --j) {
                inst.G.block(k * n, j, n, 1) = P;
                P = A * P;
            }
        }
        const Eigen::MatrixXd L = randn(rng, ny, ny);
        inst.Q = L * L.transpose() / ny;
        for (int i = 0; i < ny; ++i) inst.Q(i, i) += 0.1 * unif(rng);
        inst.y_ref = randn(rng, ny, 1);
        inst.rho = opt.rho_min + (opt.rho_max - opt.rho_min) * unif(rng);
        inst.lo = Eigen::VectorXd(d);
        inst.hi = Eigen::VectorXd(d);
        for (int i = 0; i < d; ++i) {
            inst.lo(i) = -(0.5 + 1.5 * unif(rng));
            inst.hi(i) = 0.5 + 1.5 * unif(rng);
        }
        inst.mu = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(inst.hessian_true(), Eigen::EigenvaluesOnly)
                      .eigenvalues()
                      .minCoeff();
        if (!(inst.mu > 0.0)) continue;
        set_gap(inst, 0.3 * randn(rng, ny, d), randn(rng, ny, 1), M_target);
        return inst;
    }
    throw std::runtime_error("make_instance: no non-degenerate draw in 100 attempts");
}

QuadraticInstance with_gap(const QuadraticInstance& inst, double M) {
    QuadraticInstance out = inst;
    set_gap(out, inst.E, inst.f, M);
    return out;
}

BoundCheck check_bounds(const QuadraticInstance& inst) {
    BoundCheck b;
    b.M = inst.M;
    b.mu = inst.mu;
    b.K_J = inst.K_J;
    const Eigen::VectorXd us = inst.u_star(), uh = inst.u_hat();
    b.dist = (us - uh).norm();
    b.dist_bound = 2.0 * std::sqrt(inst.K_J * inst.M / inst.mu);
    b.gap = inst.J_true(uh) - inst.J_true(us);
    b.gap_bound = 2.0 * inst.K_J * inst.M;
    b.dist_ok = b.dist <= b.dist_bound;
    b.gap_ok = b.gap <= b.gap_bound;
    return b;
}

std::pair<double, BoundCheck> tightness_study(const QuadraticInstance& inst, std::mt19937_64& rng, int trials) {
    const int ny = static_cast<int>(inst.c.size());
    const Eigen::MatrixXd E0 = Eigen::MatrixXd::Zero(ny, inst.dims);
    // Unconstrained displacement is -H^{-1} G' Q f: its top right singular
    // vector is the most damaging constant offset.
    const Eigen::MatrixXd S = inst.hessian_true().ldlt().solve(inst.G.transpose() * inst.Q);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(S, Eigen::ComputeThinV);
    std::vector<Eigen::VectorXd> dirs{svd.matrixV().col(0), -svd.matrixV().col(0)};
    for (int t = 0; t < trials; ++t) dirs.push_back(randn(rng, ny, 1));

    double best_ratio = -1.0;
    BoundCheck best;
    for (const auto& v : dirs) {
        QuadraticInstance probe = inst;
        set_gap(probe, E0, v, inst.M);
        const auto b = check_bounds(probe);
        if (b.dist_ratio() > best_ratio) {
            best_ratio = b.dist_ratio();
            best = b;
        }
    }
    return {best_ratio, best};
}

std::vector<MSweepRow> m_sweep(std::mt19937_64& rng, const std::vector<double>& Ms, int directions,
                               const InstanceOptions& opt) {
    const auto base = make_instance(rng, 1.0, opt);
    const int ny = static_cast<int>(base.c.size());
    std::vector<std::pair<Eigen::MatrixXd, Eigen::VectorXd>> fields;
    for (int j = 0; j < directions; ++j) fields.emplace_back(0.3 * randn(rng, ny, base.dims), randn(rng, ny, 1));
    const Eigen::VectorXd us = base.u_star();
    std::vector<MSweepRow> rows;
    for (double M : Ms) {
        MSweepRow row;
        row.M = M;
        for (const auto& [E0, f0] : fields) {
            QuadraticInstance inst = base;
            set_gap(inst, E0, f0, M);
            row.max_dist = std::max(row.max_dist, (inst.u_hat() - us).norm());
            row.dist_bound = std::max(row.dist_bound, 2.0 * std::sqrt(inst.K_J * M / inst.mu));
        }
        rows.push_back(row);
    }
    return rows;
}

void write_bound_csv(std::ostream& os, const std::vector<BoundCheck>& rows,
                     const std::vector<std::pair<std::string, std::string>>& prov) {
    write_provenance(os, prov);
    os << "M,mu,K_J,dist,dist_bound,dist_margin,gap,gap_bound,gap_margin\n";
    for (const auto& b : rows) {
        os << fmt_double(b.M) << ',' << fmt_double(b.mu) << ',' << fmt_double(b.K_J) << ',' << fmt_double(b.dist)
           << ',' << fmt_double(b.dist_bound) << ',' << fmt_double(b.dist_margin()) << ',' << fmt_double(b.gap) << ','
           << fmt_double(b.gap_bound) << ',' << fmt_double(b.gap_margin()) << '\n';
    }
}

}  // namespace sdo
