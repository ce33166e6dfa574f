#pragma once

#include <optional>
#include <utility>

#include "gridrelief/case_io.hpp"
#include "gridrelief/network.hpp"

namespace gridrelief {

struct PowerFlowOptions {
    double tolerance = 1e-10;  // p.u. power mismatch, infinity norm
    int max_iterations = 25;
    bool flat_start = true;
};

struct PowerFlowResult {
    SystemState state;
    bool converged = false;
    int iterations = 0;
    double max_mismatch = 0.0;  // infinity norm of the final P/Q mismatch
    std::string note;           // singular Jacobian etc.
};

/// A power-flow solution anchoring all linearizations.
struct ReferencePoint {
    SystemState state;
    ReferenceKind kind = ReferenceKind::Pre;
    bool converged = false;
    double max_residual = 0.0;
    int iterations = 0;
    bool fallback = false;  // post-contingency flow diverged; pre state reused
};

/// p + jq = v * conj(i), componentwise.
std::pair<double, double> power_from_iv(const Complex& v, const Complex& i);

/// Newton-Raphson in polar coordinates over the energized component.
/// Machine buses hold scheduled P and the voltage setpoint, the slack bus
/// holds angle zero and absorbs the imbalance, everything else is constant
/// power. De-energized buses come back with v = 0 and zero currents.
PowerFlowResult solve_power_flow(const Network& network, const PowerFlowOptions& options = {},
                                 const SystemState* initial = nullptr);

/// Power flow tagged as the pre- or post-contingency reference state. For
/// kind = post the network must already carry the contingency; surviving
/// machines and demands stay at their scheduled values.
ReferencePoint compute_reference(const Network& network, ReferenceKind kind,
                                 const PowerFlowOptions& options = {});

/// Per-bus complex mismatch (i_g - i_l) - Y_B v; the universal
/// flow-consistency check.
std::vector<Complex> injection_residual(const Network& network, const SystemState& state);

double max_abs(const std::vector<Complex>& values);

}  // namespace gridrelief
