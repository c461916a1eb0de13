#include "sdo/optimizer.hpp"

#include "sdo/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace sdo {

void OptBudget::validate() const {
    std::vector<std::string> bad;
    if (max_iterations < 0) bad.emplace_back("max_iterations must be >= 0");
    if (!(surrogate_fraction >= 0.0 && surrogate_fraction < 1.0)) {
        bad.emplace_back("surrogate_fraction must lie in [0, 1)");
    }
    for (int r : record_at) {
        if (r < 0 || r > max_iterations) {
            bad.emplace_back("record_at index " + std::to_string(r) + " outside [0, max_iterations]");
        }
    }
    if (!bad.empty()) {
        std::ostringstream os;
        os << "invalid budget:";
        for (const auto& b : bad) os << " [" << b << "]";
        throw ConfigError(os.str());
    }
}

const TraceRow& OptTrace::at(int n) const {
    if (rows.empty()) throw std::out_of_range("empty optimization trace");
    const auto idx = static_cast<std::size_t>(std::clamp(n, 0, static_cast<int>(rows.size()) - 1));
    return rows[idx];
}

namespace {

double safe_eval(const std::function<double(std::span<const double>)>& f, std::span<const double> u) {
    try {
        const double v = f(u);
        return std::isfinite(v) ? v : std::numeric_limits<double>::quiet_NaN();
    } catch (const std::exception&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

}  // namespace

std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f,
                                std::span<const double> u, const FdOptions& opts) {
    const double f_u = f(u);
    if (!std::isfinite(f_u)) throw OptimizationError("objective not finite at the base point");
    return fd_gradient(f, u, f_u, opts);
}

std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f,
                                std::span<const double> u, double f_u, const FdOptions& opts) {
    const std::size_t n = u.size();
    std::vector<double> g(n, 0.0);
    parallel_for(n, opts.parallelism, [&](std::size_t k) {
        std::vector<double> probe(u.begin(), u.end());
        const double h = opts.rel_step * std::max(std::abs(u[k]), opts.u_scale);
        probe[k] = u[k] + h;
        const double fp = safe_eval(f, probe);
        if (opts.central) {
            probe[k] = u[k] - h;
            const double fm = safe_eval(f, probe);
            if (std::isfinite(fp) && std::isfinite(fm)) {
                g[k] = (fp - fm) / (2.0 * h);
                return;
            }
            if (std::isfinite(fp)) {
                g[k] = (fp - f_u) / h;
                return;
            }
            if (std::isfinite(fm)) {
                g[k] = (f_u - fm) / h;
                return;
            }
        } else {
            if (std::isfinite(fp)) {
                g[k] = (fp - f_u) / h;
                return;
            }
            probe[k] = u[k] - h;
            const double fm = safe_eval(f, probe);
            if (std::isfinite(fm)) {
                g[k] = (f_u - fm) / h;
                return;
            }
        }
        throw OptimizationError("finite difference failed in both directions at coordinate " +
                                std::to_string(k));
    });
    return g;
}

OptResult projected_descent(const Objective& objective, const GradientOracle& gradient,
                            std::span<const double> u0, const ControlBox& box, int max_iterations,
                            const DescentOptions& opts) {
    using clock = std::chrono::steady_clock;
    const auto t_start = clock::now();
    const std::size_t n = u0.size();
    const double center = 0.5 * (box.hi + box.lo);
    const double scale = 0.5 * (box.hi - box.lo);
    const auto& rule = opts.step;

    auto to_u = [&](const std::vector<double>& z) {
        std::vector<double> u(n);
        for (std::size_t k = 0; k < n; ++k) u[k] = box.clip(center + scale * z[k]);
        return u;
    };

    std::vector<double> z(n);
    for (std::size_t k = 0; k < n; ++k) z[k] = std::clamp((u0[k] - center) / scale, -1.0, 1.0);

    std::vector<double> u = to_u(z);
    Evaluation cur = objective(u);
    if (!std::isfinite(cur.value)) throw OptimizationError("objective not finite at the initial point");

    OptResult res;
    res.u_best = u;
    res.best = cur;

    auto push_row = [&](int it, double step, double gnorm, int ls_evals) {
        TraceRow row;
        row.iteration = it;
        row.J = cur.J;
        row.J_pen = cur.value;
        row.violation = cur.violation;
        row.best_J = res.best.J;
        row.best_J_pen = res.best.value;
        row.best_violation = res.best.violation;
        row.step = step;
        row.grad_norm = gnorm;
        row.line_search_evals = ls_evals;
        row.sim_calls = opts.cost_counter ? opts.cost_counter() : 0;
        row.wall_seconds = std::chrono::duration<double>(clock::now() - t_start).count();
        res.trace.rows.push_back(row);
    };
    push_row(0, 0.0, 0.0, 0);

    double eta_seed = rule.eta0;
    std::vector<double> z_try(n);
    for (int it = 1; it <= max_iterations; ++it) {
        if (opts.out_of_budget && opts.out_of_budget()) break;
        std::vector<double> g = gradient(u, cur);
        double gnorm = 0.0;
        double gmax = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            g[k] *= scale;
            if (!std::isfinite(g[k])) throw OptimizationError("non-finite gradient at iteration " + std::to_string(it));
            gnorm += g[k] * g[k];
            gmax = std::max(gmax, std::abs(g[k]));
        }
        gnorm = std::sqrt(gnorm);
        // Trial steps are displacements in normalized units: the largest
        // coordinate of z - eta * g / |g|_inf moves by eta.
        const double inv_gmax = gmax > 0.0 ? 1.0 / gmax : 0.0;

        double eta = eta_seed;
        bool accepted = false;
        int trials = 0;
        Evaluation trial_eval;
        for (int t = 0; t < rule.max_trials; ++t) {
            double decrease = 0.0;
            bool moved = false;
            for (std::size_t k = 0; k < n; ++k) {
                z_try[k] = std::clamp(z[k] - eta * inv_gmax * g[k], -1.0, 1.0);
                decrease += g[k] * (z_try[k] - z[k]);
                moved = moved || z_try[k] != z[k];
            }
            if (!moved) break;
            ++trials;
            bool ok = true;
            try {
                trial_eval = objective(to_u(z_try));
                ok = std::isfinite(trial_eval.value);
            } catch (const std::exception&) {
                ok = false;
            }
            if (ok && trial_eval.value < cur.value &&
                trial_eval.value <= cur.value + rule.armijo * decrease) {
                accepted = true;
                break;
            }
            eta *= rule.shrink;
        }
        double step_taken = 0.0;
        if (accepted) {
            z = z_try;
            u = to_u(z);
            cur = trial_eval;
            step_taken = eta;
            eta_seed = std::min(rule.eta_max, eta * rule.grow);
            if (cur.value < res.best.value) {
                res.best = cur;
                res.u_best = u;
            }
        } else {
            eta_seed = eta;
        }
        push_row(it, step_taken, gnorm, trials);
    }
    return res;
}

void Adam::step(std::span<double> theta, std::span<const double> grad) {
    if (theta.size() != m_.size() || grad.size() != m_.size()) {
        throw std::invalid_argument("Adam: parameter size mismatch");
    }
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!std::isfinite(grad[i])) {
            throw OptimizationError("Adam: non-finite gradient at index " + std::to_string(i) + " (step " +
                                    std::to_string(t_ + 1) + ")");
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < grad.size(); ++i) {
        m_[i] = hyper_.beta1 * m_[i] + (1.0 - hyper_.beta1) * grad[i];
        v_[i] = hyper_.beta2 * v_[i] + (1.0 - hyper_.beta2) * grad[i] * grad[i];
        const double m_hat = m_[i] / bc1;
        const double v_hat = v_[i] / bc2;
        theta[i] -= hyper_.lr * m_hat / (std::sqrt(v_hat) + hyper_.eps);
    }
}

std::vector<double> adam(const std::function<std::vector<double>(std::span<const double>, int)>& grad,
                         std::span<const double> theta0, const AdamHyper& hyper, int steps) {
    std::vector<double> theta(theta0.begin(), theta0.end());
    for (double t : theta) {
        if (!std::isfinite(t)) throw OptimizationError("Adam: non-finite initial parameters");
    }
    Adam opt(theta.size(), hyper);
    for (int s = 0; s < steps; ++s) {
        const auto g = grad(theta, s);
        opt.step(theta, g);
    }
    return theta;
}

}  // namespace sdo
