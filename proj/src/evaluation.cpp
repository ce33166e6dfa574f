#include "gridrelief/evaluation.hpp"

#include <cmath>
#include <filesystem>
#include <future>

#include "gridrelief/conic_solver.hpp"
#include "gridrelief/geometry.hpp"

#include "json.hpp"

namespace gridrelief {

using nlohmann::json;

ViolationReport check_exact_feasibility(const Network& network, const SystemState& state,
                                        double tolerance) {
    ViolationReport report;
    const auto mask = energized_mask(network);

    auto flag = [&](const std::string& kind, const std::string& element, double magnitude,
                    double limit) {
        report.push_back(Violation{kind, element, magnitude, limit});
    };

    const auto residual = injection_residual(network, state);
    for (int b = 0; b < network.num_buses(); ++b) {
        const int id = network.buses()[b].id;
        if (std::abs(residual[b]) > tolerance)
            flag("flow-residual", "bus:" + std::to_string(id), std::abs(residual[b]), 0.0);
    }

    const SparseComplexMatrix yf = build_branch_admittance(network);
    Eigen::VectorXcd v(network.num_buses());
    for (int b = 0; b < network.num_buses(); ++b) v[b] = state.v[b];
    const Eigen::VectorXcd flows = yf * v;
    for (int k = 0; k < network.num_branches(); ++k) {
        const Branch& br = network.branches()[k];
        if (!br.in_service) continue;
        const std::string tag = "branch:" + std::to_string(k);
        if (std::abs(state.i_f_from[k] - flows[2 * k]) > tolerance)
            flag("flow-residual", tag + ":from", std::abs(state.i_f_from[k] - flows[2 * k]), 0.0);
        if (std::abs(state.i_f_to[k] - flows[2 * k + 1]) > tolerance)
            flag("flow-residual", tag + ":to", std::abs(state.i_f_to[k] - flows[2 * k + 1]), 0.0);
        if (std::isfinite(br.imax)) {
            if (std::abs(state.i_f_from[k]) > br.imax + tolerance)
                flag("branch-current", tag + ":from", std::abs(state.i_f_from[k]), br.imax);
            if (std::abs(state.i_f_to[k]) > br.imax + tolerance)
                flag("branch-current", tag + ":to", std::abs(state.i_f_to[k]), br.imax);
        }
    }

    for (int b = 0; b < network.num_buses(); ++b) {
        if (!mask[b]) continue;
        const Bus& bus = network.buses()[b];
        const double vm = std::abs(state.v[b]);
        const std::string tag = "bus:" + std::to_string(bus.id);
        if (vm > bus.vmax + tolerance) flag("voltage-upper", tag, vm, bus.vmax);
        if (vm < bus.vmin - tolerance) flag("voltage-lower", tag, vm, bus.vmin);

        if (const Machine* g = network.machine_at(b)) {
            const auto [p, q] = power_from_iv(state.v[b], state.i_g[b]);
            const std::string el = "machine:" + std::to_string(bus.id);
            // emergency dispatch may back units down to zero; see formulation
            const double pmin = std::min(0.0, g->pmin);
            if (p > g->pmax + tolerance) flag("p-upper", el, p, g->pmax);
            if (p < pmin - tolerance) flag("p-lower", el, p, pmin);
            if (q > g->qmax + tolerance) flag("q-upper", el, q, g->qmax);
            if (q < g->qmin - tolerance) flag("q-lower", el, q, g->qmin);
        }
        if (const Demand* d = network.demand_at(b)) {
            const auto [p, q] = power_from_iv(state.v[b], state.i_l[b]);
            const std::string el = "demand:" + std::to_string(bus.id);
            // reactive band spans the nominal apparent power, matching the
            // demand bounds the formulations enforce
            const double s0 = std::hypot(d->p0, d->q0);
            if (p > std::max(0.0, d->p0) + tolerance) flag("p-upper", el, p, std::max(0.0, d->p0));
            if (p < -tolerance) flag("p-lower", el, p, 0.0);
            if (q > s0 + tolerance) flag("q-upper", el, q, s0);
            if (q < -s0 - tolerance) flag("q-lower", el, q, -s0);
        }
    }
    return report;
}

ControlMetrics compute_metrics(const Network& network, const ReferencePoint& reference,
                               const SystemState& state) {
    ControlMetrics m;
    const auto mask = energized_mask(network);

    double demand_p_total = 0.0, demand_q_total = 0.0, demand_q_total_abs = 0.0;
    double shed_p_total = 0.0, shed_q_total = 0.0, shed_q_total_abs = 0.0;
    double cap_p_total = 0.0, cap_q_total = 0.0;
    double red_p_total = 0.0, red_q_total = 0.0;

    for (int b = 0; b < network.num_buses(); ++b) {
        const int id = network.buses()[b].id;
        if (const Demand* d = network.demand_at(b)) {
            BusMetrics bm;
            bm.bus = id;
            bm.demand_p0 = d->p0;
            bm.demand_q0 = d->q0;
            const auto [p, q] = power_from_iv(state.v[b], state.i_l[b]);
            bm.load_p = p;
            bm.load_q = q;
            if (mask[b]) {
                const auto tp = taylor_power_row(reference.state.v[b], reference.state.i_l[b],
                                                 WhichPower::Active);
                const auto tq = taylor_power_row(reference.state.v[b], reference.state.i_l[b],
                                                 WhichPower::Reactive);
                const std::map<std::string, double> at{{"v_re", state.v[b].real()},
                                                       {"v_im", state.v[b].imag()},
                                                       {"i_re", state.i_l[b].real()},
                                                       {"i_im", state.i_l[b].imag()}};
                bm.taylor_p = tp.evaluate(at);
                bm.taylor_q = tq.evaluate(at);
            }
            bm.shed_p = std::max(0.0, d->p0 - p);
            bm.shed_q = d->q0 - q;
            bm.shed_p_percent = d->p0 > 0.0 ? 100.0 * bm.shed_p / d->p0 : 0.0;
            bm.shed_q_percent = std::abs(d->q0) > 0.0 ? 100.0 * bm.shed_q / d->q0 : 0.0;
            bm.voltage_mag = std::abs(state.v[b]);
            m.buses.push_back(bm);
            demand_p_total += d->p0;
            demand_q_total += d->q0;
            demand_q_total_abs += std::abs(d->q0);
            shed_p_total += bm.shed_p;
            shed_q_total += bm.shed_q;
            shed_q_total_abs += std::abs(bm.shed_q);
        }
        if (const Machine* g = network.machine_at(b)) {
            MachineMetrics mm;
            mm.bus = id;
            const auto [p0, q0] = power_from_iv(reference.state.v[b], reference.state.i_g[b]);
            mm.p0 = p0;
            mm.q0 = q0;
            const auto [p, q] = power_from_iv(state.v[b], state.i_g[b]);
            mm.p = p;
            mm.q = q;
            if (mask[b]) {
                const auto tp = taylor_power_row(reference.state.v[b], reference.state.i_g[b],
                                                 WhichPower::Active);
                const auto tq = taylor_power_row(reference.state.v[b], reference.state.i_g[b],
                                                 WhichPower::Reactive);
                const std::map<std::string, double> at{{"v_re", state.v[b].real()},
                                                       {"v_im", state.v[b].imag()},
                                                       {"i_re", state.i_g[b].real()},
                                                       {"i_im", state.i_g[b].imag()}};
                mm.taylor_p = tp.evaluate(at);
                mm.taylor_q = tq.evaluate(at);
            }
            mm.pmax = g->pmax;
            mm.percent_of_pmax = g->pmax > 0.0 ? 100.0 * p / g->pmax : 0.0;
            mm.redispatch_p = std::abs(p - p0);
            mm.redispatch_q = std::abs(q - q0);
            m.machines.push_back(mm);
            cap_p_total += std::max(0.0, g->pmax);
            cap_q_total += std::max(0.0, g->qmax);
            red_p_total += mm.redispatch_p;
            red_q_total += mm.redispatch_q;
        }
    }

    m.total_shed_p_percent = demand_p_total > 0.0 ? 100.0 * shed_p_total / demand_p_total : 0.0;
    m.total_shed_q_percent = demand_q_total != 0.0 ? 100.0 * shed_q_total / demand_q_total : 0.0;
    m.total_shed_q_percent_abs =
        demand_q_total_abs > 0.0 ? 100.0 * shed_q_total_abs / demand_q_total_abs : 0.0;
    m.total_redispatch_p_percent = cap_p_total > 0.0 ? 100.0 * red_p_total / cap_p_total : 0.0;
    m.total_redispatch_q_percent = cap_q_total > 0.0 ? 100.0 * red_q_total / cap_q_total : 0.0;
    return m;
}

EvaluationReport run_scenario(const RunConfig& config) {
    config.validate();
    EvaluationReport report;
    report.case_path = config.case_path;
    report.kind = config.formulation;
    report.reference_kind = config.reference_kind;
    report.objective_mode = config.objective;
    report.load_scale = config.load_scale;
    report.contingency_bus = config.contingency_bus;
    report.contingency_branches = config.contingency_branches;
    report.sides =
        FormulationSides{config.sides_current, config.sides_voltage, config.sides_robust};

    Network base;
    try {
        const std::string text = read_text_file(config.case_path);
        base = parse_matpower_case(text, config.costs);
        report.case_name = std::filesystem::path(config.case_path).stem().string();
    } catch (const std::exception& e) {
        throw StageError("parse", e.what());
    }

    Network scaled;
    try {
        scaled = scale_demands(base, config.load_scale);
    } catch (const std::exception& e) {
        throw StageError("scale", e.what());
    }

    Network post;
    try {
        post = scaled;
        if (config.contingency_bus) post = apply_bus_contingency(post, *config.contingency_bus);
        if (!config.contingency_branches.empty())
            post = apply_branch_contingency(post, config.contingency_branches);
        post = zero_islanded_devices(post);
    } catch (const std::exception& e) {
        throw StageError("contingency", e.what());
    }
    report.network = post;

    ReferencePoint ref;
    try {
        const PowerFlowOptions pf_options;
        if (config.reference_kind == ReferenceKind::Pre) {
            ref = compute_reference(scaled, ReferenceKind::Pre, pf_options);
            if (!ref.converged)
                throw DataError("pre-contingency power flow did not converge (residual " +
                                std::to_string(ref.max_residual) + ")");
        } else {
            ref = compute_reference(post, ReferenceKind::Post, pf_options);
            if (!ref.converged) {
                // the post-contingency flow can fail to exist; anchor on the
                // pre-contingency state instead and say so in the report
                ref = compute_reference(scaled, ReferenceKind::Post, pf_options);
                ref.fallback = true;
                if (!ref.converged)
                    throw DataError("neither post- nor pre-contingency power flow converged");
            }
        }
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError("reference", e.what());
    }
    report.reference_converged = ref.converged;
    report.reference_fallback = ref.fallback;
    report.reference_residual = ref.max_residual;
    report.reference_iterations = ref.iterations;

    ConicProgram program;
    try {
        program = build_formulation(post, ref, config.formulation, report.sides, config.objective);
    } catch (const std::exception& e) {
        throw StageError("build", e.what());
    }

    const SolverResult result = solve_with_canonical_selection(
        program, post, ref, config.formulation, report.sides, config.objective, config.solver);
    report.status = result.status;
    report.objective = result.objective;
    report.solver_iterations = result.iterations;
    report.solve_wall_ms = result.wall_time_ms;

    if (result.status == SolveStatus::Optimal) {
        report.state = extract_solution(program, result, post);
        report.violations = check_exact_feasibility(post, report.state, config.violation_tolerance);
        report.exact_feasible = report.violations.empty();
        report.metrics = compute_metrics(post, ref, report.state);
        report.metrics.objective = result.objective;
        report.metrics.wall_time_ms = result.wall_time_ms;
    }

    if (!config.output_dir.empty()) {
        try {
            std::filesystem::create_directories(config.output_dir);
            const std::string stem = config.label.empty() ? to_string(config.formulation)
                                                          : config.label;
            write_state_report(report, config.output_dir + "/" + stem);
        } catch (const std::exception& e) {
            throw StageError("write", e.what());
        }
    }
    return report;
}

ComparisonTable compare_formulations(const std::vector<RunConfig>& configs) {
    if (configs.size() < 2)
        throw DataError("compare_formulations needs at least two configurations");
    for (size_t i = 1; i < configs.size(); ++i) {
        const RunConfig& a = configs[0];
        const RunConfig& b = configs[i];
        const bool same = a.case_path == b.case_path && a.load_scale == b.load_scale &&
                          a.contingency_bus == b.contingency_bus &&
                          a.contingency_branches == b.contingency_branches &&
                          a.reference_kind == b.reference_kind &&
                          a.sides_current == b.sides_current &&
                          a.sides_voltage == b.sides_voltage &&
                          a.sides_robust == b.sides_robust && a.objective == b.objective;
        if (!same) throw DataError("compare_formulations: configs describe different scenarios");
    }

    std::vector<std::future<EvaluationReport>> futures;
    futures.reserve(configs.size());
    for (const RunConfig& c : configs)
        futures.push_back(std::async(std::launch::async, [c] { return run_scenario(c); }));

    ComparisonTable table;
    for (auto& f : futures) table.reports.push_back(f.get());

    auto objective_of = [&](FormulationKind k) -> std::optional<double> {
        for (const auto& r : table.reports)
            if (r.kind == k && r.status == SolveStatus::Optimal) return r.objective;
        return std::nullopt;
    };

    for (const auto& r : table.reports) {
        ComparisonRow row;
        row.kind = r.kind;
        row.status = r.status;
        row.objective = r.objective;
        row.total_shed_p_percent = r.metrics.total_shed_p_percent;
        row.total_shed_q_percent = r.metrics.total_shed_q_percent;
        row.total_redispatch_p_percent = r.metrics.total_redispatch_p_percent;
        row.total_redispatch_q_percent = r.metrics.total_redispatch_q_percent;
        row.violation_count = static_cast<int>(r.violations.size());
        row.exact_feasible = r.exact_feasible;
        row.wall_time_ms = r.solve_wall_ms;
        if (r.status == SolveStatus::Optimal && is_linear(r.kind)) {
            const FormulationKind convex_twin = r.kind == FormulationKind::LinearTaylor
                                                    ? FormulationKind::ConvexTaylor
                                                    : FormulationKind::ConvexRobust;
            if (auto conv = objective_of(convex_twin)) {
                const double eps = 1e-6 * std::max(1.0, std::abs(*conv));
                row.objective_ordering_ok = r.objective >= *conv - eps;
            }
        }
        table.rows.push_back(row);
    }
    return table;
}

namespace {

std::string csv_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

std::string comparison_csv(const ComparisonTable& table) {
    std::string out =
        "kind,status,objective,total_shed_p_percent,total_shed_q_percent,"
        "total_redispatch_p_percent,total_redispatch_q_percent,violations,exact_feasible,"
        "wall_time_ms,objective_ordering_ok\n";
    for (const auto& r : table.rows) {
        out += to_string(r.kind) + "," + to_string(r.status) + "," + csv_num(r.objective) + "," +
               csv_num(r.total_shed_p_percent) + "," + csv_num(r.total_shed_q_percent) + "," +
               csv_num(r.total_redispatch_p_percent) + "," +
               csv_num(r.total_redispatch_q_percent) + "," + std::to_string(r.violation_count) +
               "," + (r.exact_feasible ? "true" : "false") + "," + csv_num(r.wall_time_ms) + ",";
        out += r.objective_ordering_ok ? (*r.objective_ordering_ok ? "true" : "false") : "n/a";
        out += "\n";
    }
    return out;
}

std::string comparison_json(const ComparisonTable& table) {
    json rows = json::array();
    for (const auto& r : table.rows) {
        json row{{"kind", to_string(r.kind)},
                 {"status", to_string(r.status)},
                 {"objective", r.objective},
                 {"total_shed_p_percent", r.total_shed_p_percent},
                 {"total_shed_q_percent", r.total_shed_q_percent},
                 {"total_redispatch_p_percent", r.total_redispatch_p_percent},
                 {"total_redispatch_q_percent", r.total_redispatch_q_percent},
                 {"violations", r.violation_count},
                 {"exact_feasible", r.exact_feasible},
                 {"wall_time_ms", r.wall_time_ms}};
        if (r.objective_ordering_ok) row["objective_ordering_ok"] = *r.objective_ordering_ok;
        rows.push_back(row);
    }
    return json{{"comparison", rows}}.dump(2) + "\n";
}

std::string state_json(const Network& network, const SystemState& state) {
    json j;
    json ids = json::array();
    for (const Bus& b : network.buses()) ids.push_back(b.id);
    j["buses"] = ids;
    auto vec = [&](auto accessor, bool re) {
        json arr = json::array();
        for (const auto& c : accessor) arr.push_back(re ? c.real() : c.imag());
        return arr;
    };
    j["v_re"] = vec(state.v, true);
    j["v_im"] = vec(state.v, false);
    j["i_g_re"] = vec(state.i_g, true);
    j["i_g_im"] = vec(state.i_g, false);
    j["i_l_re"] = vec(state.i_l, true);
    j["i_l_im"] = vec(state.i_l, false);
    j["i_f_from_re"] = vec(state.i_f_from, true);
    j["i_f_from_im"] = vec(state.i_f_from, false);
    j["i_f_to_re"] = vec(state.i_f_to, true);
    j["i_f_to_im"] = vec(state.i_f_to, false);
    return j.dump(2) + "\n";
}

SystemState state_from_json(const std::string& text, const Network& network) {
    json j = json::parse(text);
    SystemState s = make_zero_state(network);
    const auto& ids = j.at("buses");
    if (static_cast<int>(ids.size()) != network.num_buses())
        throw DataError("state file bus count does not match the case");
    for (int b = 0; b < network.num_buses(); ++b)
        if (ids[b].get<int>() != network.buses()[b].id)
            throw DataError("state file bus ids do not match the case");
    auto fill = [&](std::vector<Complex>& out, const std::string& re_key,
                    const std::string& im_key, size_t expected) {
        const auto& re = j.at(re_key);
        const auto& im = j.at(im_key);
        if (re.size() != expected || im.size() != expected)
            throw DataError("state file array '" + re_key + "' has wrong length");
        for (size_t i = 0; i < expected; ++i)
            out[i] = Complex{re[i].get<double>(), im[i].get<double>()};
    };
    fill(s.v, "v_re", "v_im", network.num_buses());
    fill(s.i_g, "i_g_re", "i_g_im", network.num_buses());
    fill(s.i_l, "i_l_re", "i_l_im", network.num_buses());
    fill(s.i_f_from, "i_f_from_re", "i_f_from_im", network.num_branches());
    fill(s.i_f_to, "i_f_to_re", "i_f_to_im", network.num_branches());
    return s;
}

std::string report_json(const EvaluationReport& report) {
    json j;
    j["case"] = report.case_name;
    j["case_path"] = report.case_path;
    j["kind"] = to_string(report.kind);
    j["reference"] = to_string(report.reference_kind);
    j["objective_mode"] =
        report.objective_mode == ObjectiveMode::Deviation ? "deviation" : "literal";
    j["load_scale"] = report.load_scale;
    if (report.contingency_bus) j["contingency_bus"] = *report.contingency_bus;
    else j["contingency_bus"] = nullptr;
    j["contingency_branches"] = report.contingency_branches;
    j["sides"] = json{{"m_i", report.sides.current},
                      {"m_v", report.sides.voltage},
                      {"n_i", report.sides.robust}};
    j["reference_info"] = json{{"converged", report.reference_converged},
                               {"fallback", report.reference_fallback},
                               {"max_residual", report.reference_residual},
                               {"iterations", report.reference_iterations}};
    j["solver"] = json{{"status", to_string(report.status)},
                       {"objective", report.objective},
                       {"iterations", report.solver_iterations},
                       {"wall_time_ms", report.solve_wall_ms}};
    const ControlMetrics& m = report.metrics;
    j["metrics"] = json{{"total_shed_p_percent", m.total_shed_p_percent},
                        {"total_shed_q_percent", m.total_shed_q_percent},
                        {"total_shed_q_percent_abs", m.total_shed_q_percent_abs},
                        {"total_redispatch_p_percent", m.total_redispatch_p_percent},
                        {"total_redispatch_q_percent", m.total_redispatch_q_percent},
                        {"objective", m.objective},
                        {"wall_time_ms", m.wall_time_ms}};
    json buses = json::array();
    for (const BusMetrics& bm : m.buses) {
        buses.push_back(json{{"bus", bm.bus},
                             {"demand_p0", bm.demand_p0},
                             {"demand_q0", bm.demand_q0},
                             {"load_p", bm.load_p},
                             {"load_q", bm.load_q},
                             {"taylor_p", bm.taylor_p},
                             {"taylor_q", bm.taylor_q},
                             {"shed_p", bm.shed_p},
                             {"shed_q", bm.shed_q},
                             {"shed_p_percent", bm.shed_p_percent},
                             {"shed_q_percent", bm.shed_q_percent},
                             {"voltage_mag", bm.voltage_mag}});
    }
    j["buses"] = buses;
    json machines = json::array();
    for (const MachineMetrics& mm : m.machines) {
        machines.push_back(json{{"bus", mm.bus},
                                {"p0", mm.p0},
                                {"q0", mm.q0},
                                {"p", mm.p},
                                {"q", mm.q},
                                {"taylor_p", mm.taylor_p},
                                {"taylor_q", mm.taylor_q},
                                {"pmax", mm.pmax},
                                {"percent_of_pmax", mm.percent_of_pmax},
                                {"redispatch_p", mm.redispatch_p},
                                {"redispatch_q", mm.redispatch_q}});
    }
    j["machines"] = machines;
    json violations = json::array();
    for (const Violation& v : report.violations) {
        violations.push_back(json{{"kind", v.kind},
                                  {"element", v.element},
                                  {"magnitude", v.magnitude},
                                  {"limit", v.limit}});
    }
    j["violations"] = violations;
    j["exact_feasible"] = report.exact_feasible;
    return j.dump(2) + "\n";
}

void write_state_report(const EvaluationReport& report, const std::string& path_stem) {
    write_text_file(path_stem + "_report.json", report_json(report));
    write_text_file(path_stem + "_state.json", state_json(report.network, report.state));
    // the exact network the state was solved on, so `check` can re-audit it
    write_text_file(path_stem + "_case.m",
                    serialize_matpower_case(report.network, report.case_name + "_solved"));

    std::string buses =
        "bus,demand_p0,demand_q0,load_p,load_q,taylor_p,taylor_q,shed_p,shed_q,"
        "shed_p_percent,shed_q_percent,voltage_mag\n";
    for (const BusMetrics& bm : report.metrics.buses) {
        buses += std::to_string(bm.bus) + "," + csv_num(bm.demand_p0) + "," +
                 csv_num(bm.demand_q0) + "," + csv_num(bm.load_p) + "," + csv_num(bm.load_q) +
                 "," + csv_num(bm.taylor_p) + "," + csv_num(bm.taylor_q) + "," +
                 csv_num(bm.shed_p) + "," + csv_num(bm.shed_q) + "," +
                 csv_num(bm.shed_p_percent) + "," + csv_num(bm.shed_q_percent) + "," +
                 csv_num(bm.voltage_mag) + "\n";
    }
    write_text_file(path_stem + "_buses.csv", buses);

    std::string machines =
        "bus,p0,q0,p,q,taylor_p,taylor_q,pmax,percent_of_pmax,redispatch_p,redispatch_q\n";
    for (const MachineMetrics& mm : report.metrics.machines) {
        machines += std::to_string(mm.bus) + "," + csv_num(mm.p0) + "," + csv_num(mm.q0) + "," +
                    csv_num(mm.p) + "," + csv_num(mm.q) + "," + csv_num(mm.taylor_p) + "," +
                    csv_num(mm.taylor_q) + "," + csv_num(mm.pmax) + "," +
                    csv_num(mm.percent_of_pmax) + "," + csv_num(mm.redispatch_p) + "," +
                    csv_num(mm.redispatch_q) + "\n";
    }
    write_text_file(path_stem + "_machines.csv", machines);
}

}  // namespace gridrelief
