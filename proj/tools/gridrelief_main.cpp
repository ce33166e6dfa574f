#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"

#include "gridrelief/case_io.hpp"
#include "gridrelief/evaluation.hpp"

using namespace gridrelief;

namespace {

struct CommonFlags {
    std::string case_path;
    std::string config_path;
    std::string kind;
    std::string reference;
    int sides = 0;
    std::string out_dir;
};

std::vector<RunConfig> assemble_configs(const CommonFlags& flags, bool expand_all_kinds) {
    std::vector<RunConfig> configs;
    if (!flags.config_path.empty()) {
        configs = load_run_config(read_text_file(flags.config_path));
    } else {
        configs.push_back(RunConfig{});
    }
    if (expand_all_kinds && configs.size() == 1) {
        RunConfig base = configs[0];
        configs.clear();
        for (FormulationKind k :
             {FormulationKind::ConvexTaylor, FormulationKind::ConvexRobust,
              FormulationKind::LinearTaylor, FormulationKind::LinearRobust}) {
            RunConfig c = base;
            c.formulation = k;
            c.label = to_string(k);
            configs.push_back(c);
        }
    }
    if (!flags.kind.empty()) configs.resize(1);
    for (RunConfig& c : configs) {
        if (!flags.case_path.empty()) c.case_path = flags.case_path;
        if (!flags.kind.empty()) {
            c.formulation = formulation_kind_from_string(flags.kind);
            c.label = flags.kind;
        }
        if (!flags.reference.empty())
            c.reference_kind = flags.reference == "pre" ? ReferenceKind::Pre : ReferenceKind::Post;
        if (flags.sides > 0)
            c.sides_current = c.sides_voltage = c.sides_robust = flags.sides;
        if (!flags.out_dir.empty()) c.output_dir = flags.out_dir;
        if (const char* tol = std::getenv("GRIDRELIEF_SOLVER_TOL"))
            c.solver.tolerance = std::stod(tol);
        if (c.label.empty()) c.label = to_string(c.formulation);
        c.validate();
    }
    return configs;
}

void print_summary(const EvaluationReport& r) {
    std::cout << "kind: " << to_string(r.kind) << "  reference: " << to_string(r.reference_kind)
              << (r.reference_fallback ? " (fallback to pre-contingency state)" : "") << "\n";
    std::cout << "solver: " << to_string(r.status) << "  objective: " << r.objective
              << "  iterations: " << r.solver_iterations << "  wall: " << r.solve_wall_ms
              << " ms\n";
    if (r.status == SolveStatus::Optimal) {
        std::cout << "shed: " << r.metrics.total_shed_p_percent << "% P, "
                  << r.metrics.total_shed_q_percent << "% Q   redispatch: "
                  << r.metrics.total_redispatch_p_percent << "% P, "
                  << r.metrics.total_redispatch_q_percent << "% Q\n";
        std::cout << "exact violations: " << r.violations.size() << "\n";
    }
}

int exit_code_for(const EvaluationReport& r) {
    if (r.status != SolveStatus::Optimal) return 2;
    if (is_robust(r.kind) && !r.exact_feasible) return 3;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gridrelief - fast emergency control actions for transmission grids"};
    app.require_subcommand(1);

    CommonFlags flags;

    auto* run = app.add_subcommand("run", "solve one emergency-control scenario");
    run->add_option("--case", flags.case_path, "MATPOWER case file");
    run->add_option("--config", flags.config_path, "key = value run configuration");
    run->add_option("--kind", flags.kind,
                    "convex-taylor | convex-robust | linear-taylor | linear-robust");
    run->add_option("--reference", flags.reference, "pre | post")
        ->check(CLI::IsMember({"pre", "post"}));
    run->add_option("--sides", flags.sides, "facet count for every polygon family");
    run->add_option("--out", flags.out_dir, "report output directory");

    auto* compare = app.add_subcommand("compare", "run and align several formulations");
    compare->add_option("--case", flags.case_path, "MATPOWER case file");
    compare->add_option("--config", flags.config_path, "key = value run configuration");
    compare->add_option("--reference", flags.reference, "pre | post")
        ->check(CLI::IsMember({"pre", "post"}));
    compare->add_option("--sides", flags.sides, "facet count for every polygon family");
    compare->add_option("--out", flags.out_dir, "report output directory");

    std::string state_path;
    double check_tol = 1e-6;
    auto* check = app.add_subcommand("check", "audit a state file against the exact constraints");
    check->add_option("--case", flags.case_path, "MATPOWER case file")->required();
    check->add_option("--state", state_path, "state JSON produced by run")->required();
    check->add_option("--tol", check_tol, "violation tolerance (p.u.)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            auto configs = assemble_configs(flags, false);
            int worst = 0;
            for (const RunConfig& c : configs) {
                EvaluationReport r = run_scenario(c);
                print_summary(r);
                if (!c.output_dir.empty())
                    std::cout << "reports: " << c.output_dir << "/" << c.label << "_*.{json,csv}\n";
                worst = std::max(worst, exit_code_for(r));
                if (configs.size() > 1) std::cout << "\n";
            }
            return worst;
        }
        if (compare->parsed()) {
            auto configs = assemble_configs(flags, true);
            ComparisonTable table = compare_formulations(configs);
            std::cout << comparison_csv(table);
            if (!flags.out_dir.empty() || !configs[0].output_dir.empty()) {
                const std::string dir =
                    !flags.out_dir.empty() ? flags.out_dir : configs[0].output_dir;
                write_text_file(dir + "/comparison.csv", comparison_csv(table));
                write_text_file(dir + "/comparison.json", comparison_json(table));
            }
            for (const auto& r : table.reports)
                if (r.status != SolveStatus::Optimal) return 2;
            return 0;
        }
        if (check->parsed()) {
            const Network network = parse_matpower_case(read_text_file(flags.case_path));
            const SystemState state =
                state_from_json(read_text_file(state_path), network);
            const ViolationReport violations = check_exact_feasibility(network, state, check_tol);
            if (violations.empty()) {
                std::cout << "feasible: no violations beyond " << check_tol << " p.u.\n";
                return 0;
            }
            for (const Violation& v : violations)
                std::cout << v.kind << " " << v.element << " magnitude " << v.magnitude
                          << " limit " << v.limit << "\n";
            return 3;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
