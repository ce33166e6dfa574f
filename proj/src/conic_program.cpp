#include "gridrelief/conic_program.hpp"

#include <cmath>

namespace gridrelief {

std::string to_string(SolveStatus status) {
    switch (status) {
        case SolveStatus::Optimal: return "optimal";
        case SolveStatus::Infeasible: return "infeasible";
        case SolveStatus::Unbounded: return "unbounded";
        case SolveStatus::NumericFailure: return "numeric-failure";
    }
    return "?";
}

VarId ConicProgram::add_variable(const std::string& name) {
    if (by_name_.count(name))
        throw std::invalid_argument("duplicate variable '" + name + "'");
    VarId id = static_cast<VarId>(names_.size());
    names_.push_back(name);
    by_name_[name] = id;
    return id;
}

VarId ConicProgram::variable(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end())
        throw std::invalid_argument("unknown variable '" + name + "'");
    return it->second;
}

void ConicProgram::check_expr(const AffineExpr& expr) const {
    for (const auto& [v, c] : expr.terms) {
        if (v < 0 || v >= num_variables())
            throw std::invalid_argument("expression references undeclared variable");
        if (!std::isfinite(c)) throw std::invalid_argument("non-finite coefficient");
    }
    if (!std::isfinite(expr.constant)) throw std::invalid_argument("non-finite constant");
}

void ConicProgram::add_objective_term(VarId v, double coeff) {
    if (v < 0 || v >= num_variables())
        throw std::invalid_argument("objective references undeclared variable");
    if (!std::isfinite(coeff)) throw std::invalid_argument("non-finite objective coefficient");
    objective_.add(v, coeff);
}

void ConicProgram::add_objective_constant(double c) {
    if (!std::isfinite(c)) throw std::invalid_argument("non-finite objective constant");
    objective_.constant += c;
}

void ConicProgram::add_equality(AffineExpr expr) {
    check_expr(expr);
    equalities_.push_back(std::move(expr));
}

void ConicProgram::add_inequality(AffineExpr expr) {
    check_expr(expr);
    if (expr.terms.empty())
        throw std::invalid_argument("inequality with no variable terms");
    inequalities_.push_back(std::move(expr));
}

void ConicProgram::add_second_order_cone(std::vector<AffineExpr> norm_terms, AffineExpr bound) {
    if (norm_terms.empty()) throw std::invalid_argument("cone with empty norm");
    for (const auto& t : norm_terms) check_expr(t);
    check_expr(bound);
    if (bound.terms.empty() && bound.constant < 0.0)
        throw std::invalid_argument("cone with negative constant bound");
    cones_.push_back(Cone{std::move(norm_terms), std::move(bound)});
}

double ConicProgram::evaluate(const AffineExpr& expr, const std::vector<double>& values) const {
    double s = expr.constant;
    for (const auto& [v, c] : expr.terms) s += c * values.at(v);
    return s;
}

}  // namespace gridrelief
