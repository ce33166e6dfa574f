#pragma once

#include "gridrelief/case_io.hpp"
#include "gridrelief/conic_program.hpp"
#include "gridrelief/geometry.hpp"
#include "gridrelief/network.hpp"
#include "gridrelief/powerflow.hpp"

namespace gridrelief {

/// Facet counts: m_i (branch current polygons), m_v (voltage polygons, per
/// half arc), n_i (robust current polygons).
struct FormulationSides {
    int current = 32;
    int voltage = 32;
    int robust = 32;
};

/// Declares the rectangular voltage/current variables of `network` on the
/// program: v, i_b per bus, i_g/i_l where a machine/demand exists, i_f per
/// branch end. De-energized buses get their variables fixed to zero later.
void declare_variables(const Network& network, ConicProgram& program);

/// Kirchhoff rows: bus aggregation i_B = i_G - i_L, bus currents
/// i_B = Y_B v, branch currents i_F = Y_F v (real/imaginary split), slack
/// v_im = 0, plus zero-fixes for de-energized buses.
void assemble_flow_constraints(const Network& network, ConicProgram& program);

/// Emergency-control objective around the reference point. Deviation mode
/// prices load shed p0 - T_p(v, i_l) (kept nonnegative) and absolute
/// generator redispatch through epigraph variables; literal mode prices the
/// Taylor power rows directly.
void assemble_objective(const Network& network, const ReferencePoint& reference,
                        ObjectiveMode mode, ConicProgram& program);

/// One of the four formulations over the flow equations: conic or polygonal
/// magnitude bounds, Taylor or robust power bounds. Linear kinds contain no
/// second-order cones.
ConicProgram build_formulation(const Network& network, const ReferencePoint& reference,
                               FormulationKind kind, const FormulationSides& sides,
                               ObjectiveMode mode = ObjectiveMode::Deviation);

/// Reads the optimal point back into a SystemState. Requires Optimal status.
SystemState extract_solution(const ConicProgram& program, const SolverResult& result,
                             const Network& network);

/// Solves the program, then selects a canonical point of the optimal set:
/// heavily rationed solutions leave many equally priced shed patterns, so a
/// second pass re-minimizes an id-weighted shed total inside the optimal
/// cost level set. The reported objective is the cost of the returned point.
SolverResult solve_with_canonical_selection(const ConicProgram& program, const Network& network,
                                            const ReferencePoint& reference,
                                            FormulationKind kind, const FormulationSides& sides,
                                            ObjectiveMode mode, const SolverOptions& options);

/// Variable naming used by the formulation ("v_re[id]", "i_f_re[k:f]", ...).
std::string var_name(const std::string& stem, int id);
std::string branch_var_name(const std::string& stem, int branch_index, bool from_side);

}  // namespace gridrelief
