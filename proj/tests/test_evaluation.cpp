#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>

#include "json.hpp"

#include "gridrelief/evaluation.hpp"
#include "test_helpers.hpp"

using namespace gridrelief;
using gridrelief::testing::data_path;
using gridrelief::testing::load_rts96;
using nlohmann::json;

namespace {

RunConfig stressed_config(FormulationKind kind, ReferenceKind ref = ReferenceKind::Post) {
    RunConfig c;
    c.case_path = data_path("case24_rts96.m");
    c.load_scale = 1.15;
    c.contingency_bus = 24;
    c.reference_kind = ref;
    c.formulation = kind;
    return c;
}

json strip_timings(json j) {
    j["solver"].erase("wall_time_ms");
    j["metrics"].erase("wall_time_ms");
    return j;
}

}  // namespace

TEST_CASE("the base case state is exactly feasible") {
    const Network net = load_rts96();
    const ReferencePoint ref = compute_reference(net, ReferenceKind::Pre);
    REQUIRE(ref.converged);
    CHECK(check_exact_feasibility(net, ref.state, 1e-6).empty());
}

TEST_CASE("the stressed post-contingency state is the emergency") {
    const Network post = zero_islanded_devices(
        apply_bus_contingency(scale_demands(load_rts96(), 1.15), 24));
    const ReferencePoint ref = compute_reference(post, ReferenceKind::Post);
    REQUIRE(ref.converged);
    const ViolationReport report = check_exact_feasibility(post, ref.state, 1e-6);
    CHECK(!report.empty());
    bool magnitude_violation = false;
    for (const Violation& v : report)
        if (v.kind == "branch-current" || v.kind == "voltage-lower" || v.kind == "voltage-upper")
            magnitude_violation = true;
    CHECK(magnitude_violation);
}

TEST_CASE("a single pushed branch current yields exactly one branch-current violation") {
    const Network net = load_rts96();
    const ReferencePoint ref = compute_reference(net, ReferenceKind::Pre);
    REQUIRE(ref.converged);
    SystemState state = ref.state;
    const int k = 0;
    state.i_f_from[k] = std::polar(net.branches()[k].imax * 1.05, std::arg(state.i_f_from[k]));
    const ViolationReport report = check_exact_feasibility(net, state, 1e-6);
    int branch_current = 0;
    for (const Violation& v : report)
        if (v.kind == "branch-current") ++branch_current;
    CHECK(branch_current == 1);
}

TEST_CASE("violation records carry magnitudes beyond their limits") {
    const Network post = zero_islanded_devices(
        apply_bus_contingency(scale_demands(load_rts96(), 1.15), 24));
    const ReferencePoint ref = compute_reference(post, ReferenceKind::Post);
    for (const Violation& v : check_exact_feasibility(post, ref.state, 1e-6)) {
        if (v.kind == "voltage-lower" || v.kind == "p-lower" || v.kind == "q-lower")
            CHECK(v.magnitude < v.limit - 1e-6);
        else
            CHECK(v.magnitude > v.limit + 1e-6);
    }
}

TEST_CASE("metrics at the reference are all zero") {
    const Network net = load_rts96();
    const ReferencePoint ref = compute_reference(net, ReferenceKind::Pre);
    const ControlMetrics m = compute_metrics(net, ref, ref.state);
    CHECK(m.total_shed_p_percent == doctest::Approx(0.0).epsilon(1e-7));
    CHECK(m.total_redispatch_p_percent == doctest::Approx(0.0).epsilon(1e-7));
    for (const BusMetrics& bm : m.buses) CHECK(bm.shed_p_percent == doctest::Approx(0.0));
}

TEST_CASE("shed percentages are plain arithmetic over the totals") {
    // total demand is 28.5 p.u.; serving 27.0 of it sheds 5.263%
    const Network net = load_rts96();
    const ReferencePoint ref = compute_reference(net, ReferenceKind::Pre);
    REQUIRE(ref.converged);
    SystemState state = ref.state;
    for (int b = 0; b < net.num_buses(); ++b) state.i_l[b] *= 27.0 / 28.5;
    const ControlMetrics m = compute_metrics(net, ref, state);
    CHECK(m.total_shed_p_percent == doctest::Approx(100.0 * 1.5 / 28.5).epsilon(1e-9));
}

TEST_CASE("per-machine percentages above 100 coincide with p-upper violations") {
    const Network net = load_rts96();
    const ReferencePoint ref = compute_reference(net, ReferenceKind::Pre);
    SystemState state = ref.state;
    const int b = net.bus_index(18);
    state.i_g[b] *= 1.2;  // push the bus-18 unit 20% over
    const ControlMetrics m = compute_metrics(net, ref, state);
    bool over = false;
    for (const MachineMetrics& mm : m.machines)
        if (mm.bus == 18) over = mm.percent_of_pmax > 100.0;
    CHECK(over);
    bool flagged = false;
    for (const Violation& v : check_exact_feasibility(net, state, 1e-6))
        if (v.kind == "p-upper" && v.element == "machine:18") flagged = true;
    CHECK(flagged);
}

TEST_CASE("run_scenario end to end on the stressed scenario") {
    const EvaluationReport r = run_scenario(stressed_config(FormulationKind::ConvexRobust));
    CHECK(r.status == SolveStatus::Optimal);
    CHECK(r.reference_converged);
    CHECK(!r.reference_fallback);
    CHECK(r.exact_feasible);
    CHECK(r.violations.empty());
    CHECK(r.metrics.total_shed_p_percent > 1.0);
    const auto res = injection_residual(r.network, r.state);
    CHECK(max_abs(res) < 1e-6);
}

TEST_CASE("run_scenario accepts a branch-list contingency") {
    RunConfig c = stressed_config(FormulationKind::LinearTaylor);
    c.contingency_bus.reset();
    c.contingency_branches = {9};  // the 6-10 cable
    const EvaluationReport r = run_scenario(c);
    CHECK(r.status == SolveStatus::Optimal);
    CHECK(!r.network.branches()[9].in_service);
    CHECK(r.network.branches()[8].in_service);
}

TEST_CASE("run_scenario surfaces stage failures with their tag") {
    RunConfig c = stressed_config(FormulationKind::LinearTaylor);
    c.case_path = "/nowhere/missing.m";
    try {
        run_scenario(c);
        FAIL("expected StageError");
    } catch (const StageError& e) {
        CHECK(e.stage == "parse");
        CHECK(std::string(e.what()).find("stage:parse") != std::string::npos);
    }
    RunConfig bad = stressed_config(FormulationKind::LinearTaylor);
    bad.contingency_bus = 77;
    try {
        run_scenario(bad);
        FAIL("expected StageError");
    } catch (const StageError& e) {
        CHECK(e.stage == "contingency");
    }
}

TEST_CASE("reports are byte-identical across runs once timings are stripped") {
    const EvaluationReport a = run_scenario(stressed_config(FormulationKind::LinearTaylor));
    const EvaluationReport b = run_scenario(stressed_config(FormulationKind::LinearTaylor));
    const json ja = strip_timings(json::parse(report_json(a)));
    const json jb = strip_timings(json::parse(report_json(b)));
    CHECK(ja.dump() == jb.dump());
}

TEST_CASE("metrics are invariant under bus reordering of the input file") {
    const std::string text = read_text_file(data_path("case24_rts96.m"));
    // reverse the rows of the bus table
    const auto start = text.find("mpc.bus = [");
    const auto stop = text.find("];", start);
    const std::string head = text.substr(0, start + 11);
    const std::string body = text.substr(start + 11, stop - start - 11);
    std::vector<std::string> rows;
    std::istringstream in(body);
    std::string line;
    while (std::getline(in, line))
        if (line.find(';') != std::string::npos) rows.push_back(line);
    std::string reversed;
    for (auto it = rows.rbegin(); it != rows.rend(); ++it) reversed += *it + "\n";
    const std::string permuted = head + "\n" + reversed + text.substr(stop);

    const std::string alt_path = "/tmp/gridrelief_permuted_case.m";
    write_text_file(alt_path, permuted);

    RunConfig c1 = stressed_config(FormulationKind::ConvexRobust);
    RunConfig c2 = c1;
    c2.case_path = alt_path;
    const EvaluationReport r1 = run_scenario(c1);
    const EvaluationReport r2 = run_scenario(c2);
    REQUIRE(r1.status == SolveStatus::Optimal);
    REQUIRE(r2.status == SolveStatus::Optimal);
    CHECK(r1.metrics.total_shed_p_percent ==
          doctest::Approx(r2.metrics.total_shed_p_percent).epsilon(1e-4));
    CHECK(r1.metrics.total_redispatch_p_percent ==
          doctest::Approx(r2.metrics.total_redispatch_p_percent).epsilon(1e-4));
}

TEST_CASE("state JSON round-trips through the audit format") {
    const Network net = load_rts96();
    const ReferencePoint ref = compute_reference(net, ReferenceKind::Pre);
    const SystemState back = state_from_json(state_json(net, ref.state), net);
    for (int b = 0; b < net.num_buses(); ++b) {
        CHECK(back.v[b] == ref.state.v[b]);
        CHECK(back.i_g[b] == ref.state.i_g[b]);
        CHECK(back.i_l[b] == ref.state.i_l[b]);
    }
    for (int k = 0; k < net.num_branches(); ++k) {
        CHECK(back.i_f_from[k] == ref.state.i_f_from[k]);
        CHECK(back.i_f_to[k] == ref.state.i_f_to[k]);
    }
}

TEST_CASE("report files land on disk with the frozen schema") {
    RunConfig c = stressed_config(FormulationKind::LinearRobust);
    const std::string dir = "/tmp/gridrelief_report_test";
    std::filesystem::remove_all(dir);
    c.output_dir = dir;
    c.label = "probe";
    const EvaluationReport r = run_scenario(c);
    REQUIRE(r.status == SolveStatus::Optimal);

    const json j = json::parse(read_text_file(dir + "/probe_report.json"));
    const std::vector<std::string> top_keys{
        "buses",        "case",           "case_path",  "contingency_branches",
        "contingency_bus", "exact_feasible", "kind",      "load_scale",
        "machines",     "metrics",        "objective_mode", "reference",
        "reference_info", "sides",        "solver",     "violations"};
    REQUIRE(j.size() == top_keys.size());
    for (const auto& key : top_keys) CHECK(j.contains(key));
    for (const auto& key : {"total_shed_p_percent", "total_shed_q_percent",
                            "total_shed_q_percent_abs", "total_redispatch_p_percent",
                            "total_redispatch_q_percent", "objective", "wall_time_ms"})
        CHECK(j["metrics"].contains(key));
    REQUIRE(!j["buses"].empty());
    for (const auto& key : {"bus", "demand_p0", "shed_p", "shed_p_percent", "voltage_mag"})
        CHECK(j["buses"][0].contains(key));
    REQUIRE(!j["machines"].empty());
    for (const auto& key : {"bus", "p0", "p", "pmax", "percent_of_pmax"})
        CHECK(j["machines"][0].contains(key));
    CHECK(j["violations"].is_array());
    CHECK(j["violations"].empty());  // robust solution

    const std::string buses_csv = read_text_file(dir + "/probe_buses.csv");
    CHECK(std::count(buses_csv.begin(), buses_csv.end(), '\n') ==
          1 + static_cast<long>(r.metrics.buses.size()));
    const std::string machines_csv = read_text_file(dir + "/probe_machines.csv");
    CHECK(std::count(machines_csv.begin(), machines_csv.end(), '\n') ==
          1 + static_cast<long>(r.metrics.machines.size()));
    CHECK(std::filesystem::exists(dir + "/probe_state.json"));
}

TEST_CASE("compare_formulations aligns the four kinds") {
    std::vector<RunConfig> configs;
    for (FormulationKind kind :
         {FormulationKind::ConvexTaylor, FormulationKind::ConvexRobust,
          FormulationKind::LinearTaylor, FormulationKind::LinearRobust})
        configs.push_back(stressed_config(kind));
    const ComparisonTable table = compare_formulations(configs);
    REQUIRE(table.rows.size() == 4);

    double taylor_shed = 0, robust_shed = 0;
    for (const ComparisonRow& row : table.rows) {
        CHECK(row.status == SolveStatus::Optimal);
        if (row.kind == FormulationKind::ConvexTaylor) taylor_shed = row.total_shed_p_percent;
        if (row.kind == FormulationKind::ConvexRobust) robust_shed = row.total_shed_p_percent;
        if (is_linear(row.kind)) {
            REQUIRE(row.objective_ordering_ok.has_value());
            CHECK(*row.objective_ordering_ok);
        }
        if (is_robust(row.kind)) CHECK(row.exact_feasible);
    }
    CHECK(robust_shed > taylor_shed);

    const std::string csv = comparison_csv(table);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
    CHECK(csv.find("wall_time_ms") != std::string::npos);

    SUBCASE("mismatched scenarios are rejected") {
        std::vector<RunConfig> bad = configs;
        bad[1].load_scale = 1.0;
        CHECK_THROWS_AS(compare_formulations(bad), DataError);
    }
}
