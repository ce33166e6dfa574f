#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gridrelief/conic_program.hpp"
#include "gridrelief/network.hpp"

namespace gridrelief {

/// Input text could not be parsed; line is 1-based.
struct ParseError : std::runtime_error {
    ParseError(int line_no, const std::string& message)
        : std::runtime_error("line " + std::to_string(line_no) + ": " + message),
          line(line_no) {}
    int line;
};

/// Raw numeric tables of a MATPOWER case, before model conversion.
struct CaseDocument {
    std::string name;
    std::string version;
    double base_mva = 100.0;
    std::vector<std::vector<double>> bus;
    std::vector<std::vector<double>> gen;
    std::vector<std::vector<double>> branch;
    std::vector<std::vector<double>> gencost;
};

enum class FormulationKind { ConvexTaylor, ConvexRobust, LinearTaylor, LinearRobust };
enum class ReferenceKind { Pre, Post };
enum class ObjectiveMode { Deviation, Literal };

std::string to_string(FormulationKind kind);
FormulationKind formulation_kind_from_string(const std::string& s);
std::string to_string(ReferenceKind kind);

bool is_robust(FormulationKind kind);
bool is_linear(FormulationKind kind);

/// Emergency-control cost coefficients. Shedding is far more expensive than
/// redispatch, and active actions more than reactive ones.
struct CostConfig {
    double shed_p = 1000.0;
    double shed_q = 100.0;
    double redispatch_p = 10.0;
    double redispatch_q = 1.0;
};

struct RunConfig {
    std::string case_path;
    double load_scale = 1.0;
    std::optional<int> contingency_bus;
    std::vector<int> contingency_branches;  // positions in the branch table
    ReferenceKind reference_kind = ReferenceKind::Post;
    FormulationKind formulation = FormulationKind::LinearTaylor;
    int sides_current = 32;  // m_i
    int sides_voltage = 32;  // m_v
    int sides_robust = 32;   // n_i
    ObjectiveMode objective = ObjectiveMode::Deviation;
    CostConfig costs;
    SolverOptions solver;
    double violation_tolerance = 1e-6;
    std::string output_dir;
    std::string label;  // report file stem; defaults to the formulation name

    void validate() const;
};

CaseDocument parse_matpower_document(const std::string& text);

/// MATPOWER version-2 text -> validated per-unit Network.
/// Multiple generators on one bus are aggregated; generator cost tables are
/// ignored (control-action costs come from RunConfig).
Network parse_matpower_case(const std::string& text, const CostConfig& costs = CostConfig{});

/// Network -> MATPOWER version-2 text. parse(serialize(parse(t))) round-trips
/// all model fields exactly.
std::string serialize_matpower_case(const Network& network, const std::string& name = "case");

/// key = value run configuration. `kind` may list several formulations
/// (comma separated or "all"), yielding one RunConfig per kind.
std::vector<RunConfig> load_run_config(const std::string& text);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace gridrelief
