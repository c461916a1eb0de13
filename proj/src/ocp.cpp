#include "sdo/ocp.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace sdo {

std::string to_string(CostKind k) {
    return k == CostKind::AxialOffsetTarget ? "ao_target" : "boron_smoothness";
}

CostKind cost_kind_from_string(const std::string& s) {
    if (s == "ao_target") return CostKind::AxialOffsetTarget;
    if (s == "boron_smoothness") return CostKind::BoronSmoothness;
    throw ConfigError("unknown cost kind '" + s + "' (expected ao_target or boron_smoothness)");
}

void OcpSpec::validate() const {
    std::vector<std::string> bad;
    if (N < 1) bad.emplace_back("N must be >= 1");
    if (!(dt > 0)) bad.emplace_back("dt must be positive");
    if (!(AO_min < AO_max)) bad.emplace_back("AO_min < AO_max required");
    if (!(nu >= 0)) bad.emplace_back("nu must be >= 0");
    if (!(boron_scale > 0)) bad.emplace_back("boron_scale must be positive");
    if (!(box.lo < box.hi)) bad.emplace_back("control box must be non-empty");
    if (!bad.empty()) {
        std::ostringstream os;
        os << "invalid OCP spec:";
        for (const auto& b : bad) os << " [" << b << "]";
        throw ConfigError(os.str());
    }
}

OcpSpec OcpSpec::defaults_for(const ModelParams& p) {
    OcpSpec spec;
    spec.box = {p.u_min, p.u_max};
    return spec;
}

double axial_offset(std::span<const double> P) {
    const std::size_t half = P.size() / 2;
    double top = 0.0, bottom = 0.0;
    for (std::size_t j = 0; j < half; ++j) top += P[j];
    for (std::size_t j = half; j < P.size(); ++j) bottom += P[j];
    const double total = top + bottom;
    if (!(total > 0.0)) {
        throw std::domain_error("axial offset undefined for non-positive total power");
    }
    return (top - bottom) / total;
}

std::vector<double> axial_offset_grad(std::span<const double> P) {
    const std::size_t half = P.size() / 2;
    double top = 0.0, bottom = 0.0;
    for (std::size_t j = 0; j < half; ++j) top += P[j];
    for (std::size_t j = half; j < P.size(); ++j) bottom += P[j];
    const double total = top + bottom;
    const double ao = (top - bottom) / total;
    std::vector<double> g(P.size());
    for (std::size_t j = 0; j < P.size(); ++j) {
        const double sign = j < half ? 1.0 : -1.0;
        g[j] = (sign - ao) / total;
    }
    return g;
}

double stage_cost(const SimState& next, const SimState& prev, double /*u_k*/, const OcpSpec& spec) {
    switch (spec.cost_kind) {
        case CostKind::AxialOffsetTarget: {
            const double d = axial_offset(next.P) - spec.AO_ref;
            return d * d;
        }
        case CostKind::BoronSmoothness: {
            const double d = (next.C_b - prev.C_b) / spec.boron_scale;
            return d * d;
        }
    }
    return 0.0;
}

double ao_violation(double ao, const OcpSpec& spec) {
    return std::max(0.0, ao - spec.AO_max) + std::max(0.0, spec.AO_min - ao);
}

FullEvaluation evaluate_full(const PwrModel& model, std::span<const double> u, const SimState& x0,
                             std::span<const double> w, const OcpSpec& spec, CallCounter* local) {
    if (static_cast<int>(u.size()) != spec.N || static_cast<int>(w.size()) != spec.N) {
        throw std::invalid_argument("control/load length does not match horizon N");
    }
    FullEvaluation ev;
    ev.trajectory = model.simulate(x0, u, w, spec.dt, local);
    ev.violations.resize(spec.N);
    const auto& xs = ev.trajectory.states;
    for (int k = 0; k < spec.N; ++k) {
        ev.J += stage_cost(xs[k + 1], xs[k], u[k], spec);
        ev.violations[k] = ao_violation(axial_offset(xs[k + 1].P), spec);
        ev.violation_sum += ev.violations[k];
    }
    ev.J_pen = ev.J + spec.nu * ev.violation_sum;
    return ev;
}

}  // namespace sdo
