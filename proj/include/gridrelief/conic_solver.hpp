#pragma once

#include "gridrelief/conic_program.hpp"

namespace gridrelief {

/// Primal-dual interior point solve of the program (homogeneous self-dual
/// embedding with Nesterov-Todd scaling and Mehrotra correction). Pure LPs
/// and mixed LP/SOC programs share the same path. Deterministic for fixed
/// inputs and options; infeasibility is reported as a status, never thrown.
SolverResult solve_program(const ConicProgram& program, const SolverOptions& options = {});

}  // namespace gridrelief
