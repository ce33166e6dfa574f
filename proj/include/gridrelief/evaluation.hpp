#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gridrelief/case_io.hpp"
#include "gridrelief/formulation.hpp"
#include "gridrelief/network.hpp"
#include "gridrelief/powerflow.hpp"

namespace gridrelief {

/// One exceeded constraint of the exact (non-convex) problem.
struct Violation {
    std::string kind;     // branch-current, voltage-upper, voltage-lower,
                          // p-upper, p-lower, q-upper, q-lower, flow-residual
    std::string element;  // "bus:3", "machine:13", "demand:9", "branch:6:from"
    double magnitude = 0.0;
    double limit = 0.0;
};

using ViolationReport = std::vector<Violation>;

/// Evaluates every constraint of the exact problem at the given state:
/// flow residuals, branch current magnitudes, voltage magnitude bounds and
/// the exact powers p + jq = v conj(i) against their boxes. Lists every
/// violation beyond `tolerance` (p.u.).
ViolationReport check_exact_feasibility(const Network& network, const SystemState& state,
                                        double tolerance = 1e-6);

struct BusMetrics {
    int bus = 0;
    double demand_p0 = 0.0, demand_q0 = 0.0;
    double load_p = 0.0, load_q = 0.0;        // exact powers at the solution
    double taylor_p = 0.0, taylor_q = 0.0;    // first-order estimates
    double shed_p = 0.0, shed_q = 0.0;        // shed_q signed
    double shed_p_percent = 0.0, shed_q_percent = 0.0;
    double voltage_mag = 0.0;
};

struct MachineMetrics {
    int bus = 0;
    double p0 = 0.0, q0 = 0.0;  // exact reference output
    double p = 0.0, q = 0.0;    // exact output at the solution
    double taylor_p = 0.0, taylor_q = 0.0;
    double pmax = 0.0;
    double percent_of_pmax = 0.0;
    double redispatch_p = 0.0, redispatch_q = 0.0;
};

struct ControlMetrics {
    double total_shed_p_percent = 0.0;
    double total_shed_q_percent = 0.0;      // signed reduction
    double total_shed_q_percent_abs = 0.0;  // absolute-deviation companion
    double total_redispatch_p_percent = 0.0;
    double total_redispatch_q_percent = 0.0;
    double objective = 0.0;
    double wall_time_ms = 0.0;
    std::vector<BusMetrics> buses;
    std::vector<MachineMetrics> machines;
};

/// Shed and redispatch relative to the reference point, normalized by total
/// demand / total capacity. objective and wall_time_ms are filled by the
/// caller from the solve.
ControlMetrics compute_metrics(const Network& network, const ReferencePoint& reference,
                               const SystemState& state);

/// Everything one solved scenario produced.
struct EvaluationReport {
    std::string case_path;
    std::string case_name;
    FormulationKind kind = FormulationKind::LinearTaylor;
    ReferenceKind reference_kind = ReferenceKind::Post;
    ObjectiveMode objective_mode = ObjectiveMode::Deviation;
    double load_scale = 1.0;
    std::optional<int> contingency_bus;
    std::vector<int> contingency_branches;
    FormulationSides sides;

    bool reference_converged = false;
    bool reference_fallback = false;
    double reference_residual = 0.0;
    int reference_iterations = 0;

    SolveStatus status = SolveStatus::NumericFailure;
    double objective = 0.0;
    int solver_iterations = 0;
    double solve_wall_ms = 0.0;

    ControlMetrics metrics;
    ViolationReport violations;
    bool exact_feasible = false;

    Network network;  // the solved (post-contingency, island-zeroed) grid
    SystemState state;
};

/// A failure in one stage of the scenario pipeline; what() carries the tag.
struct StageError : std::runtime_error {
    StageError(const std::string& stage_name, const std::string& message)
        : std::runtime_error("stage:" + stage_name + ": " + message), stage(stage_name) {}
    std::string stage;
};

/// parse -> scale -> contingency -> reference -> build -> solve -> extract
/// -> exact check -> metrics. Writes reports when the config names an
/// output directory. Solver failures are reported in the result, not thrown.
EvaluationReport run_scenario(const RunConfig& config);

struct ComparisonRow {
    FormulationKind kind = FormulationKind::LinearTaylor;
    SolveStatus status = SolveStatus::NumericFailure;
    double objective = 0.0;
    double total_shed_p_percent = 0.0;
    double total_shed_q_percent = 0.0;
    double total_redispatch_p_percent = 0.0;
    double total_redispatch_q_percent = 0.0;
    int violation_count = 0;
    bool exact_feasible = false;
    double wall_time_ms = 0.0;
    // objective(linear-X) >= objective(convex-X) - eps when both solved
    std::optional<bool> objective_ordering_ok;
};

struct ComparisonTable {
    std::vector<ComparisonRow> rows;
    std::vector<EvaluationReport> reports;
};

/// Runs the member scenarios (in parallel) and aligns their metrics. The
/// configs must describe the same scenario and differ only in formulation.
ComparisonTable compare_formulations(const std::vector<RunConfig>& configs);

std::string comparison_csv(const ComparisonTable& table);
std::string comparison_json(const ComparisonTable& table);

/// Writes <stem>_report.json (canonical, sorted keys), <stem>_buses.csv,
/// <stem>_machines.csv and <stem>_state.json.
void write_state_report(const EvaluationReport& report, const std::string& path_stem);

std::string report_json(const EvaluationReport& report);
std::string state_json(const Network& network, const SystemState& state);
SystemState state_from_json(const std::string& text, const Network& network);

}  // namespace gridrelief
