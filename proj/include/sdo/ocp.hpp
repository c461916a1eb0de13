#pragma once

// Single-shooting optimal control problem on the PWR model: only the rod-speed
// sequence is a decision variable; states come from forward simulation.

#include "sdo/pwr_model.hpp"

#include <span>
#include <string>
#include <vector>

namespace sdo {

enum class CostKind { AxialOffsetTarget, BoronSmoothness };

std::string to_string(CostKind k);
CostKind cost_kind_from_string(const std::string& s);

struct ControlBox {
    double lo = -1.0;
    double hi = 1.0;

    double clip(double u) const { return u < lo ? lo : (u > hi ? hi : u); }
    bool contains(double u) const { return u >= lo && u <= hi; }
    /// Nearest feasible value to zero.
    double nearest_to_zero() const { return clip(0.0); }
};

struct OcpSpec {
    int N = 48;
    double dt = 600.0;
    CostKind cost_kind = CostKind::AxialOffsetTarget;
    double AO_ref = 0.0;
    double AO_min = -0.05;
    double AO_max = 0.05;
    double nu = 100.0;
    double boron_scale = 20.0;  // ppm; l_b is evaluated on C_b / boron_scale
    ControlBox box;

    void validate() const;
    static OcpSpec defaults_for(const ModelParams& p);
};

using ControlSequence = std::vector<double>;
using LoadProfile = std::vector<double>;

/// (top half - bottom half) / total; node 0 is the top of the core.
double axial_offset(std::span<const double> P);

/// Gradient of axial_offset with respect to P.
std::vector<double> axial_offset_grad(std::span<const double> P);

double stage_cost(const SimState& next, const SimState& prev, double u_k, const OcpSpec& spec);

/// Positive part of the AO band constraint at one state.
double ao_violation(double ao, const OcpSpec& spec);

struct FullEvaluation {
    double J = 0.0;
    double J_pen = 0.0;
    double violation_sum = 0.0;
    std::vector<double> violations;  // per step k = 0..N-1 (state t_{k+1})
    Trajectory trajectory;
};

FullEvaluation evaluate_full(const PwrModel& model, std::span<const double> u, const SimState& x0,
                             std::span<const double> w, const OcpSpec& spec,
                             CallCounter* local = nullptr);

}  // namespace sdo
