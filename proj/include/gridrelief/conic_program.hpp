#pragma once

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace gridrelief {

using VarId = int;

/// sum coeff * var + constant over program variables.
struct AffineExpr {
    std::vector<std::pair<VarId, double>> terms;
    double constant = 0.0;

    AffineExpr() = default;
    explicit AffineExpr(double c) : constant(c) {}
    AffineExpr& add(VarId v, double coeff) {
        terms.emplace_back(v, coeff);
        return *this;
    }
};

struct SolverOptions {
    double tolerance = 1e-8;   // feasibility and relative-gap target
    int max_iterations = 100;
    int refinement_steps = 2;  // iterative refinement rounds per KKT solve
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, NumericFailure };

std::string to_string(SolveStatus status);

struct SolverResult {
    SolveStatus status = SolveStatus::NumericFailure;
    std::vector<double> values;  // indexed by VarId, empty unless Optimal
    double objective = 0.0;
    int iterations = 0;
    double wall_time_ms = 0.0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double duality_gap = 0.0;
};

/// Solver-neutral conic program: named real variables, linear equalities,
/// linear inequalities and second-order cones, linear objective.
class ConicProgram {
  public:
    /// Names must be unique; returns the variable handle.
    VarId add_variable(const std::string& name);
    VarId variable(const std::string& name) const;
    bool has_variable(const std::string& name) const { return by_name_.count(name) > 0; }
    int num_variables() const { return static_cast<int>(names_.size()); }
    const std::string& name_of(VarId v) const { return names_.at(v); }

    /// expr == 0
    void add_equality(AffineExpr expr);
    /// expr <= 0
    void add_inequality(AffineExpr expr);
    /// ||(norm_terms)||_2 <= bound
    void add_second_order_cone(std::vector<AffineExpr> norm_terms, AffineExpr bound);

    void add_objective_term(VarId v, double coeff);
    void add_objective_constant(double c);
    void clear_objective() { objective_ = AffineExpr{}; }

    struct Cone {
        std::vector<AffineExpr> norm_terms;
        AffineExpr bound;
    };

    const std::vector<AffineExpr>& equalities() const { return equalities_; }
    const std::vector<AffineExpr>& inequalities() const { return inequalities_; }
    const std::vector<Cone>& cones() const { return cones_; }
    const AffineExpr& objective() const { return objective_; }

    int num_equalities() const { return static_cast<int>(equalities_.size()); }
    int num_inequalities() const { return static_cast<int>(inequalities_.size()); }
    int num_cones() const { return static_cast<int>(cones_.size()); }

    double evaluate(const AffineExpr& expr, const std::vector<double>& values) const;

  private:
    void check_expr(const AffineExpr& expr) const;

    std::vector<std::string> names_;
    std::unordered_map<std::string, VarId> by_name_;
    std::vector<AffineExpr> equalities_;
    std::vector<AffineExpr> inequalities_;
    std::vector<Cone> cones_;
    AffineExpr objective_;
};

}  // namespace gridrelief
