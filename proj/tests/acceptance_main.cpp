// Acceptance suite: one pass/fail line per criterion, nonzero exit on failure.

#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gridrelief/conic_solver.hpp"
#include "gridrelief/evaluation.hpp"
#include "test_helpers.hpp"

using namespace gridrelief;
using gridrelief::testing::data_path;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::vector<double> g_solution_residuals;  // collected for criterion 8

RunConfig stressed_config(FormulationKind kind, ReferenceKind ref = ReferenceKind::Post) {
    RunConfig c;
    c.case_path = data_path("case24_rts96.m");
    c.load_scale = 1.15;
    c.contingency_bus = 24;
    c.reference_kind = ref;
    c.formulation = kind;
    return c;
}

EvaluationReport run_and_track(const RunConfig& c) {
    EvaluationReport r = run_scenario(c);
    if (r.status == SolveStatus::Optimal)
        g_solution_residuals.push_back(max_abs(injection_residual(r.network, r.state)));
    return r;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

int machine_p_upper_count(const EvaluationReport& r, double* max_excess = nullptr,
                          int* generators_only = nullptr) {
    int count = 0;
    if (generators_only) *generators_only = 0;
    if (max_excess) *max_excess = 0.0;
    std::map<int, double> pmax_of;
    for (const MachineMetrics& mm : r.metrics.machines) pmax_of[mm.bus] = mm.pmax;
    for (const Violation& v : r.violations) {
        if (v.kind != "p-upper" || v.element.rfind("machine:", 0) != 0) continue;
        ++count;
        const int bus = std::stoi(v.element.substr(8));
        if (max_excess) *max_excess = std::max(*max_excess, v.magnitude - v.limit);
        if (generators_only && pmax_of[bus] > 0.0) ++*generators_only;
    }
    return count;
}

// ---- criteria ----

Outcome criterion1(const std::vector<EvaluationReport>& reports) {
    Outcome o;
    for (const EvaluationReport& r : reports) {
        if (!is_robust(r.kind)) continue;
        const bool ok = r.status == SolveStatus::Optimal && r.violations.empty() &&
                        r.solve_wall_ms < 5000.0;
        if (!ok) o.pass = false;
        o.detail += to_string(r.kind) + ": " + to_string(r.status) + ", " +
                    std::to_string(r.violations.size()) + " violations, " +
                    fmt(r.solve_wall_ms) + " ms; ";
    }
    return o;
}

Outcome criterion2(const std::vector<EvaluationReport>& reports) {
    Outcome o;
    auto shed = [&](FormulationKind k) {
        for (const auto& r : reports)
            if (r.kind == k) return r.metrics.total_shed_p_percent;
        return -1.0;
    };
    const double ct = shed(FormulationKind::ConvexTaylor);
    const double cr = shed(FormulationKind::ConvexRobust);
    const double lt = shed(FormulationKind::LinearTaylor);
    const double lr = shed(FormulationKind::LinearRobust);
    o.pass = cr >= ct - 1e-9 && lr >= lt - 1e-9;
    const bool strict = cr > ct + 1e-9 && lr > lt + 1e-9;
    o.detail = "shed% convex " + fmt(ct) + " -> " + fmt(cr) + ", linear " + fmt(lt) + " -> " +
               fmt(lr) + (strict ? " (strict)" : " (tie)");
    return o;
}

Outcome criterion3(const std::vector<EvaluationReport>& reports) {
    Outcome o;
    auto report_of = [&](FormulationKind k) -> const EvaluationReport& {
        for (const auto& r : reports)
            if (r.kind == k) return r;
        throw std::logic_error("missing report");
    };
    auto max_gap = [&](FormulationKind lin, FormulationKind con) {
        const auto& rl = report_of(lin);
        const auto& rc = report_of(con);
        double gap = 0.0;
        for (size_t i = 0; i < rl.metrics.buses.size(); ++i)
            gap = std::max(gap, std::abs(rl.metrics.buses[i].shed_p_percent -
                                         rc.metrics.buses[i].shed_p_percent));
        return gap;
    };
    const double taylor_gap = max_gap(FormulationKind::LinearTaylor, FormulationKind::ConvexTaylor);
    const double robust_gap = max_gap(FormulationKind::LinearRobust, FormulationKind::ConvexRobust);
    o.pass = taylor_gap <= 2.0 && robust_gap <= 2.0;
    o.detail = "max per-bus shed gap: taylor " + fmt(taylor_gap) + " pp, robust " +
               fmt(robust_gap) + " pp (limit 2)";
    if (robust_gap > 2.0) {
        // context: the rationed totals agree; the excess sits on near-tied buses
        const auto& rl = report_of(FormulationKind::LinearRobust);
        const auto& rc = report_of(FormulationKind::ConvexRobust);
        int over = 0;
        for (size_t i = 0; i < rl.metrics.buses.size(); ++i)
            if (std::abs(rl.metrics.buses[i].shed_p_percent -
                         rc.metrics.buses[i].shed_p_percent) > 2.0)
                ++over;
        o.detail += " | robust totals " + fmt(rc.metrics.total_shed_p_percent) + " vs " +
                    fmt(rl.metrics.total_shed_p_percent) + "%, " + std::to_string(over) + " of " +
                    std::to_string(rl.metrics.buses.size()) +
                    " buses beyond 2 pp: under heavy rationing the polygonal tightening "
                    "rebalances shed among electrically close buses";
    }
    return o;
}

Outcome criterion4() {
    Outcome o;
    const Network base = scale_demands(
        parse_matpower_case(read_text_file(data_path("case24_rts96.m"))), 1.15);
    std::mt19937 gen(424242u);
    std::uniform_real_distribution<double> jitter(0.95, 1.05);
    int checked = 0;
    double worst_margin = 1e9;
    for (int trial = 0; trial <= 20; ++trial) {
        Network stressed = base;
        if (trial > 0) {
            std::vector<Demand> demands = base.demands();
            for (Demand& d : demands) {
                const double f = jitter(gen);
                d.p0 *= f;
                d.q0 *= f;
            }
            stressed = Network(base.buses(), base.branches(), base.machines(), demands,
                               base.base_mva());
        }
        const Network post = zero_islanded_devices(apply_bus_contingency(stressed, 24));
        ReferencePoint ref = compute_reference(post, ReferenceKind::Post);
        if (!ref.converged) {
            ref = compute_reference(stressed, ReferenceKind::Post);
            ref.fallback = true;
        }
        if (!ref.converged) {
            o.pass = false;
            o.detail = "trial " + std::to_string(trial) + ": no reference";
            return o;
        }
        const FormulationSides sides{32, 32, 32};
        auto objective_of = [&](FormulationKind kind, bool& ok) {
            const ConicProgram prog = build_formulation(post, ref, kind, sides);
            const SolverResult res = solve_program(prog);
            ok = res.status == SolveStatus::Optimal;
            if (ok)
                g_solution_residuals.push_back(
                    max_abs(injection_residual(post, extract_solution(prog, res, post))));
            return res.objective;
        };
        bool ok1 = false, ok2 = false, ok3 = false, ok4 = false;
        const double ct = objective_of(FormulationKind::ConvexTaylor, ok1);
        const double lt = objective_of(FormulationKind::LinearTaylor, ok2);
        const double cr = objective_of(FormulationKind::ConvexRobust, ok3);
        const double lr = objective_of(FormulationKind::LinearRobust, ok4);
        if (!(ok1 && ok2 && ok3 && ok4)) {
            o.pass = false;
            o.detail = "trial " + std::to_string(trial) + ": a solve failed";
            return o;
        }
        const double eps_t = 1e-6 * std::max(1.0, std::abs(ct));
        const double eps_r = 1e-6 * std::max(1.0, std::abs(cr));
        worst_margin = std::min({worst_margin, lt - ct + eps_t, lr - cr + eps_r});
        if (lt < ct - eps_t || lr < cr - eps_r) {
            o.pass = false;
            o.detail = "ordering broken at trial " + std::to_string(trial) + ": taylor " +
                       fmt(lt) + " vs " + fmt(ct) + ", robust " + fmt(lr) + " vs " + fmt(cr);
            return o;
        }
        ++checked;
    }
    o.detail = std::to_string(checked) + " scenarios ordered (worst margin " + fmt(worst_margin) +
               ")";
    return o;
}

Outcome criterion5(const std::vector<EvaluationReport>& reports) {
    Outcome o;
    const EvaluationReport pre = run_and_track(
        stressed_config(FormulationKind::LinearTaylor, ReferenceKind::Pre));
    const EvaluationReport* post = nullptr;
    for (const auto& r : reports)
        if (r.kind == FormulationKind::LinearTaylor) post = &r;

    double pre_excess = 0.0, post_excess = 0.0;
    int pre_gen = 0, post_gen = 0;
    const int pre_count = machine_p_upper_count(pre, &pre_excess, &pre_gen);
    const int post_count = machine_p_upper_count(*post, &post_excess, &post_gen);
    o.pass = pre_count >= 1 && post_count == 0;
    o.detail = "pre: " + std::to_string(pre_count) + " machine p-upper (max excess " +
               fmt(pre_excess) + " p.u.); post: " + std::to_string(post_count) +
               " (max excess " + fmt(post_excess) + " p.u.)";
    if (!o.pass && pre_count >= 1) {
        o.detail += " | second-order remainders at limit-pinned machines keep the post side "
                    "above the 1e-6 check tolerance; at plot resolution (0.5% of limit) post "
                    "shows " +
                    std::to_string([&] {
                        int n = 0;
                        std::map<int, double> pmax_of;
                        for (const auto& mm : post->metrics.machines) pmax_of[mm.bus] = mm.pmax;
                        for (const auto& v : post->violations) {
                            if (v.kind != "p-upper" || v.element.rfind("machine:", 0) != 0)
                                continue;
                            const int bus = std::stoi(v.element.substr(8));
                            if (pmax_of[bus] > 0.0 &&
                                v.magnitude - v.limit > 0.005 * pmax_of[bus])
                                ++n;
                        }
                        return n;
                    }()) +
                    " generator(s) above the limit";
    }
    return o;
}

Outcome criterion6() {
    Outcome o;
    std::mt19937 gen(1234u);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double tol = 1e-9;
    const int samples = 100000;
    double worst = 0.0;

    auto sample_in = [&](const std::vector<Halfspace>& hs, double box,
                         const std::function<void(double, double)>& check) {
        int accepted = 0;
        while (accepted < samples) {
            const double x = u(gen) * box, y = u(gen) * box;
            bool inside = true;
            for (const Halfspace& h : hs) {
                double s = 0.0;
                for (const auto& [name, c] : h.coeffs)
                    s += c * (name == "x" || name == "v_re" || name == "i_re" ? x : y);
                if (h.sense == Sense::LessEqual ? s > h.rhs : s < h.rhs) {
                    inside = false;
                    break;
                }
            }
            if (!inside) continue;
            ++accepted;
            check(x, y);
        }
    };

    // inscribed current polygon inside its circle
    {
        const double r = 1.37;
        const auto facets = inscribed_polygon_facets(r, 32);
        sample_in(facets, r, [&](double x, double y) {
            worst = std::max(worst, std::hypot(x, y) - r);
        });
    }
    // convex voltage domain inside the magnitude band
    {
        const double vmin = 0.95, vmax = 1.05;
        const Complex v0 = std::polar(0.99, 0.2);
        std::vector<Halfspace> hs;
        Halfspace lower;
        lower.coeffs = {{"v_re", v0.real()}, {"v_im", v0.imag()}};
        lower.rhs = vmin * std::abs(v0);
        lower.sense = Sense::GreaterEqual;
        hs.push_back(lower);
        int accepted = 0;
        while (accepted < samples) {
            const double x = u(gen) * vmax, y = u(gen) * vmax;
            if (std::hypot(x, y) > vmax) continue;  // quadratic upper bound
            if (x * v0.real() + y * v0.imag() < lower.rhs) continue;
            ++accepted;
            const double m = std::hypot(x, y);
            worst = std::max(worst, std::max(vmin - m, m - vmax));
        }
    }
    // polygonal voltage domain inside the magnitude band
    {
        const double vmin = 0.95, vmax = 1.05, theta = -0.15;
        const double phi = std::acos(vmin / vmax);
        auto facets = voltage_polygon_facets(theta, phi, vmax, 32);
        Halfspace lower;
        lower.coeffs = {{"v_re", std::cos(theta)}, {"v_im", std::sin(theta)}};
        lower.rhs = vmin;
        lower.sense = Sense::GreaterEqual;
        facets.push_back(lower);
        sample_in(facets, vmax, [&](double x, double y) {
            const double m = std::hypot(x, y);
            worst = std::max(worst, std::max(vmin - m, m - vmax));
        });
    }
    // robust current domains inside the exact robust set, via the oracle
    for (bool linear : {false, true}) {
        const PowerBounds pb{0.4, 1.6, -0.5, 0.8};
        const double theta = 0.1, phi = std::acos(0.95 / 1.05), vmax = 1.05;
        const RobustCurrentDomain dom =
            linear ? robust_linear_domain(pb, theta, phi, vmax, 32)
                   : robust_conic_domain(pb, theta, phi, vmax);
        const double radius = std::min(pb.pmax, pb.qmax) / vmax;
        int accepted = 0;
        while (accepted < samples) {
            const double x = u(gen) * radius, y = u(gen) * radius;
            if (!linear && std::hypot(x, y) > radius) continue;
            bool inside = true;
            for (const Halfspace& h : dom.halfspaces) {
                double s = 0.0;
                for (const auto& [name, c] : h.coeffs) s += c * (name == "i_re" ? x : y);
                if (h.sense == Sense::LessEqual ? s > h.rhs : s < h.rhs) {
                    inside = false;
                    break;
                }
            }
            if (!inside) continue;
            if (linear && std::hypot(x, y) > radius + 1e-12) continue;  // disks still apply
            ++accepted;
            const Complex i{x, y};
            if (std::abs(i) == 0.0) continue;
            const Complex vu = worst_case_voltage(i, theta, phi, vmax, BoundKind::Upper);
            const Complex vl = worst_case_voltage(i, theta, phi, vmax, BoundKind::Lower);
            worst = std::max(worst, (vu.real() * x + vu.imag() * y) - pb.pmax);
            worst = std::max(worst, pb.pmin - (vl.real() * x + vl.imag() * y));
            const Complex irot{-y, x};
            const Complex wu = worst_case_voltage(irot, theta, phi, vmax, BoundKind::Upper);
            const Complex wl = worst_case_voltage(irot, theta, phi, vmax, BoundKind::Lower);
            worst = std::max(worst, (wu.real() * irot.real() + wu.imag() * irot.imag()) - pb.qmax);
            worst = std::max(worst, pb.qmin - (wl.real() * irot.real() + wl.imag() * irot.imag()));
        }
    }

    o.pass = worst <= tol;
    o.detail = "worst exterior excursion " + fmt(worst) + " (limit 1e-9, 100000 samples each)";
    return o;
}

Outcome criterion7() {
    Outcome o;
    std::mt19937 gen(777u);
    std::uniform_real_distribution<double> uth(-M_PI, M_PI), uphi(0.02, M_PI / 2 - 0.02),
        umag(0.05, 3.0), uang(-M_PI, M_PI);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const double theta = uth(gen), phi = uphi(gen), vmax = 1.05;
        const Complex i = std::polar(umag(gen), uang(gen));
        double lo = 1e300, hi = -1e300;
        for (int k = 0; k < 10000; ++k) {
            const double a = theta - phi + 2.0 * phi * k / 9999.0;
            const double dot = vmax * (std::cos(a) * i.real() + std::sin(a) * i.imag());
            lo = std::min(lo, dot);
            hi = std::max(hi, dot);
        }
        const Complex vu = worst_case_voltage(i, theta, phi, vmax, BoundKind::Upper);
        const Complex vl = worst_case_voltage(i, theta, phi, vmax, BoundKind::Lower);
        worst = std::max(worst, std::abs(vu.real() * i.real() + vu.imag() * i.imag() - hi));
        worst = std::max(worst, std::abs(vl.real() * i.real() + vl.imag() * i.imag() - lo));
    }
    o.pass = worst <= 1e-6;
    o.detail = "max |analytic - sampled| = " + fmt(worst) + " over 1000 triples";
    return o;
}

Outcome criterion8() {
    Outcome o;
    const Network net = scale_demands(
        parse_matpower_case(read_text_file(data_path("case24_rts96.m"))), 1.15);
    const PowerFlowResult pf = solve_power_flow(net);
    const double residual = max_abs(injection_residual(net, pf.state));
    double worst_solution = 0.0;
    for (double r : g_solution_residuals) worst_solution = std::max(worst_solution, r);
    o.pass = pf.converged && pf.iterations <= 10 && pf.max_mismatch <= 1e-8 &&
             residual <= 1e-8 && worst_solution <= 1e-6 && !g_solution_residuals.empty();
    o.detail = "flow mismatch " + fmt(pf.max_mismatch) + " in " +
               std::to_string(pf.iterations) + " iterations; worst extracted-solution residual " +
               fmt(worst_solution) + " over " + std::to_string(g_solution_residuals.size()) +
               " solves";
    return o;
}

Outcome criterion9() {
    Outcome o;
    std::mt19937 gen(99u);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    double worst_ref = 0.0, worst_order = 10.0;
    for (int trial = 0; trial < 200; ++trial) {
        const Complex v0{1.0 + 0.1 * u(gen), 0.2 * u(gen)};
        const Complex i0{u(gen), u(gen)};
        auto [p0, q0] = power_from_iv(v0, i0);
        const auto rp = taylor_power_row(v0, i0, WhichPower::Active);
        const auto rq = taylor_power_row(v0, i0, WhichPower::Reactive);
        const std::map<std::string, double> at{{"v_re", v0.real()},
                                               {"v_im", v0.imag()},
                                               {"i_re", i0.real()},
                                               {"i_im", i0.imag()}};
        worst_ref = std::max(worst_ref, std::abs(rp.evaluate(at) - p0));
        worst_ref = std::max(worst_ref, std::abs(rq.evaluate(at) - q0));

        const Complex dv{u(gen), u(gen)}, di{u(gen), u(gen)};
        double delta = 1e-2, prev = 0.0;
        for (int step = 0; step < 4; ++step, delta /= 2) {
            const Complex v = v0 + delta * dv;
            const Complex i = i0 + delta * di;
            const std::map<std::string, double> vals{{"v_re", v.real()},
                                                     {"v_im", v.imag()},
                                                     {"i_re", i.real()},
                                                     {"i_im", i.imag()}};
            const double err = std::abs(power_from_iv(v, i).first - rp.evaluate(vals));
            if (step > 0 && prev > 1e-14)
                worst_order = std::min(worst_order, std::log2(prev / err));
            prev = err;
        }
    }
    o.pass = worst_ref <= 1e-12 && worst_order >= 1.9;
    o.detail = "reference error " + fmt(worst_ref) + ", observed order " + fmt(worst_order);
    return o;
}

}  // namespace

int main() {
    std::printf("acceptance suite: RTS96, loads x1.15, bus-24 outage, 32 facets\n\n");

    std::vector<EvaluationReport> reports;
    for (FormulationKind kind :
         {FormulationKind::ConvexTaylor, FormulationKind::ConvexRobust,
          FormulationKind::LinearTaylor, FormulationKind::LinearRobust})
        reports.push_back(run_and_track(stressed_config(kind)));

    struct Entry {
        int id;
        const char* name;
        Outcome outcome;
    };
    std::vector<Entry> entries;
    entries.push_back({1, "robust solutions are exactly feasible within 5 s", criterion1(reports)});
    entries.push_back({2, "robust formulations shed at least as much load", criterion2(reports)});
    entries.push_back({3, "convex and linear solutions agree per bus (2 pp)", criterion3(reports)});
    entries.push_back({4, "linear objectives dominate convex ones (21 scenarios)", criterion4()});
    entries.push_back({5, "pre-reference violates generator limits, post-reference does not",
                       criterion5(reports)});
    entries.push_back({6, "inner approximations never leave the exact sets", criterion6()});
    entries.push_back({7, "analytic worst-case voltage matches brute force", criterion7()});
    entries.push_back({8, "power flow and extracted solutions are flow-consistent", criterion8()});
    entries.push_back({9, "Taylor rows are exact at the reference with second-order error",
                       criterion9()});

    int failed = 0;
    for (const Entry& e : entries) {
        if (!e.outcome.pass) ++failed;
        std::printf("[%s] criterion %d: %s\n        %s\n", e.outcome.pass ? "PASS" : "FAIL", e.id,
                    e.name, e.outcome.detail.c_str());
    }
    std::printf("\n%zu/%zu criteria passed\n", entries.size() - failed, entries.size());
    return failed;
}
