#include "gridrelief/case_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace gridrelief {

std::string to_string(FormulationKind kind) {
    switch (kind) {
        case FormulationKind::ConvexTaylor: return "convex-taylor";
        case FormulationKind::ConvexRobust: return "convex-robust";
        case FormulationKind::LinearTaylor: return "linear-taylor";
        case FormulationKind::LinearRobust: return "linear-robust";
    }
    return "?";
}

FormulationKind formulation_kind_from_string(const std::string& s) {
    if (s == "convex-taylor") return FormulationKind::ConvexTaylor;
    if (s == "convex-robust") return FormulationKind::ConvexRobust;
    if (s == "linear-taylor") return FormulationKind::LinearTaylor;
    if (s == "linear-robust") return FormulationKind::LinearRobust;
    throw DataError("unknown formulation kind '" + s + "'");
}

std::string to_string(ReferenceKind kind) {
    return kind == ReferenceKind::Pre ? "pre" : "post";
}

bool is_robust(FormulationKind kind) {
    return kind == FormulationKind::ConvexRobust || kind == FormulationKind::LinearRobust;
}

bool is_linear(FormulationKind kind) {
    return kind == FormulationKind::LinearTaylor || kind == FormulationKind::LinearRobust;
}

void RunConfig::validate() const {
    if (case_path.empty()) throw DataError("config: missing case path");
    if (!(load_scale > 0.0)) throw DataError("config: load_scale must be positive");
    if (sides_current < 3) throw DataError("config: m_i must be >= 3");
    if (sides_voltage < 1) throw DataError("config: m_v must be >= 1");
    if (sides_robust < 3) throw DataError("config: n_i must be >= 3");
    if (!(solver.tolerance > 0.0)) throw DataError("config: solver tolerance must be positive");
    if (!(violation_tolerance > 0.0)) throw DataError("config: violation tolerance must be positive");
}

namespace {

std::string strip_comment(const std::string& line) {
    auto pos = line.find('%');
    return pos == std::string::npos ? line : line.substr(0, pos);
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

bool parse_double(const std::string& tok, double& out) {
    try {
        size_t used = 0;
        out = std::stod(tok, &used);
        return used == tok.size();
    } catch (...) {
        return false;
    }
}

struct TableSpec {
    std::vector<std::vector<double>>* rows;
    size_t min_cols;
};

}  // namespace

CaseDocument parse_matpower_document(const std::string& text) {
    CaseDocument doc;
    std::map<std::string, TableSpec> tables{
        {"bus", {&doc.bus, 13}},
        {"gen", {&doc.gen, 10}},
        {"branch", {&doc.branch, 11}},
        {"gencost", {&doc.gencost, 4}},
    };

    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    std::string open_table;  // table currently being filled
    bool saw_bus = false, saw_branch = false;

    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;

        if (open_table.empty()) {
            if (line.rfind("function", 0) == 0) {
                auto eq = line.find('=');
                if (eq != std::string::npos) doc.name = trim(line.substr(eq + 1));
                continue;
            }
            if (line.rfind("mpc.version", 0) == 0) {
                auto q1 = line.find('\'');
                auto q2 = line.rfind('\'');
                if (q1 == std::string::npos || q2 <= q1)
                    throw ParseError(line_no, "malformed version declaration");
                doc.version = line.substr(q1 + 1, q2 - q1 - 1);
                continue;
            }
            if (line.rfind("mpc.baseMVA", 0) == 0) {
                auto eq = line.find('=');
                std::string v = trim(line.substr(eq + 1));
                if (!v.empty() && v.back() == ';') v.pop_back();
                if (!parse_double(trim(v), doc.base_mva))
                    throw ParseError(line_no, "malformed baseMVA");
                continue;
            }
            auto eq = line.find("= [");
            if (line.rfind("mpc.", 0) == 0 && eq != std::string::npos) {
                std::string key = trim(line.substr(4, eq - 4));
                if (tables.count(key)) {
                    open_table = key;
                    if (key == "bus") saw_bus = true;
                    if (key == "branch") saw_branch = true;
                } else {
                    open_table = "";  // unknown matrix: skip until closing bracket
                    std::string rest;
                    while (line.find("];") == std::string::npos && std::getline(in, raw)) {
                        ++line_no;
                        line = trim(strip_comment(raw));
                    }
                }
                continue;
            }
            continue;  // tolerate stray matlab statements
        }

        // inside a table
        bool closes = false;
        auto close_pos = line.find("];");
        if (close_pos != std::string::npos) {
            closes = true;
            line = trim(line.substr(0, close_pos));
        }
        if (!line.empty()) {
            // rows may end with ';'
            std::string row_text = line;
            if (row_text.back() == ';') row_text.pop_back();
            std::istringstream rs(row_text);
            std::vector<double> row;
            std::string tok;
            while (rs >> tok) {
                double v;
                if (!parse_double(tok, v))
                    throw ParseError(line_no, "malformed numeric token '" + tok + "' in mpc." + open_table);
                row.push_back(v);
            }
            if (!row.empty()) {
                const TableSpec& spec = tables.at(open_table);
                if (row.size() < spec.min_cols)
                    throw ParseError(line_no, "mpc." + open_table + " row has " +
                                                  std::to_string(row.size()) + " columns, expected >= " +
                                                  std::to_string(spec.min_cols));
                spec.rows->push_back(std::move(row));
            }
        }
        if (closes) open_table.clear();
    }
    if (!open_table.empty()) throw ParseError(line_no, "unterminated matrix mpc." + open_table);
    if (!saw_bus) throw ParseError(line_no, "missing mpc.bus matrix");
    if (!saw_branch) throw ParseError(line_no, "missing mpc.branch matrix");
    return doc;
}

Network parse_matpower_case(const std::string& text, const CostConfig& costs) {
    CaseDocument doc = parse_matpower_document(text);
    if (doc.version != "2")
        throw ParseError(1, "unsupported MATPOWER case version '" + doc.version + "' (need 2)");
    const double base = doc.base_mva;
    if (!(base > 0.0)) throw ParseError(1, "baseMVA must be positive");

    std::vector<Bus> buses;
    std::vector<Demand> demands;
    buses.reserve(doc.bus.size());
    for (const auto& row : doc.bus) {
        Bus b;
        b.id = static_cast<int>(row[0]);
        b.is_slack = static_cast<int>(row[1]) == 3;
        b.shunt = Complex{row[4] / base, row[5] / base};
        b.vmax = row[11];
        b.vmin = row[12];
        buses.push_back(b);
        if (row[2] != 0.0 || row[3] != 0.0) {
            Demand d;
            d.bus = b.id;
            d.p0 = row[2] / base;
            d.q0 = row[3] / base;
            d.sheddable = true;
            d.cost_shed_p = costs.shed_p;
            d.cost_shed_q = costs.shed_q;
            demands.push_back(d);
        }
    }

    // aggregate in-service generators per bus; sums stay in MW until the
    // single per-unit division so serialization can reproduce them exactly
    struct MwAggregate {
        double p0 = 0, q0 = 0, qmax = 0, qmin = 0, pmax = 0, pmin = 0;
        double v_setpoint = 1.0;
    };
    std::map<int, MwAggregate> agg;
    for (const auto& row : doc.gen) {
        if (row[7] <= 0.0) continue;
        MwAggregate& a = agg.try_emplace(static_cast<int>(row[0])).first->second;
        a.p0 += row[1];
        a.q0 += row[2];
        a.qmax += row[3];
        a.qmin += row[4];
        a.v_setpoint = row[5];
        a.pmax += row[8];
        a.pmin += row[9];
    }
    std::vector<Machine> machines;
    machines.reserve(agg.size());
    for (auto& [bus_id, a] : agg) {
        Machine g;
        g.bus = bus_id;
        g.p0 = a.p0 / base;
        g.q0 = a.q0 / base;
        g.qmax = a.qmax / base;
        g.qmin = a.qmin / base;
        g.pmax = a.pmax / base;
        g.pmin = a.pmin / base;
        g.v_setpoint = a.v_setpoint;
        g.cost_p = costs.redispatch_p;
        g.cost_q = costs.redispatch_q;
        machines.push_back(g);
    }

    std::vector<Branch> branches;
    branches.reserve(doc.branch.size());
    int next_id = 0;
    for (const auto& row : doc.branch) {
        Branch br;
        br.id = next_id++;
        br.from_bus = static_cast<int>(row[0]);
        br.to_bus = static_cast<int>(row[1]);
        br.series_impedance = Complex{row[2], row[3]};
        br.total_shunt_susceptance = row[4];
        // MVA rating -> p.u. current magnitude at nominal voltage; 0 = unlimited
        br.imax = row[5] > 0.0 ? row[5] / base : std::numeric_limits<double>::infinity();
        br.tap_ratio = row[8] != 0.0 ? row[8] : 1.0;
        br.phase_shift = row[9] * M_PI / 180.0;
        br.in_service = row[10] > 0.0;
        branches.push_back(br);
    }

    try {
        return Network(std::move(buses), std::move(branches), std::move(machines),
                       std::move(demands), base);
    } catch (const StructuralError& e) {
        throw ParseError(1, std::string("structural: ") + e.what());
    }
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Emit a scaled value that divides back to exactly `pu` when parsed.
double exact_scaled(double pu, double base) {
    const double s = pu * base;
    double up = s, dn = s;
    for (int k = 0; k < 8; ++k) {
        if (up / base == pu) return up;
        if (dn / base == pu) return dn;
        up = std::nextafter(up, std::numeric_limits<double>::infinity());
        dn = std::nextafter(dn, -std::numeric_limits<double>::infinity());
    }
    return s;
}

double exact_degrees(double rad) {
    double d = rad * 180.0 / M_PI;
    for (int k = 0; k < 3; ++k) {
        if (d * M_PI / 180.0 == rad) return d;
        d = std::nextafter(d, rad > d * M_PI / 180.0 ? std::numeric_limits<double>::infinity()
                                                     : -std::numeric_limits<double>::infinity());
    }
    return d;
}

}  // namespace

std::string serialize_matpower_case(const Network& network, const std::string& name) {
    const double base = network.base_mva();
    std::ostringstream out;
    out << "function mpc = " << name << "\n";
    out << "mpc.version = '2';\n";
    out << "mpc.baseMVA = " << fmt(base) << ";\n\n";

    out << "%% bus data\n";
    out << "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\n";
    out << "mpc.bus = [\n";
    for (int i = 0; i < network.num_buses(); ++i) {
        const Bus& b = network.buses()[i];
        const Demand* d = network.demand_at(i);
        int type = b.is_slack ? 3 : (network.machine_at(i) ? 2 : 1);
        out << "\t" << b.id << "\t" << type << "\t" << fmt(d ? exact_scaled(d->p0, base) : 0.0)
            << "\t" << fmt(d ? exact_scaled(d->q0, base) : 0.0) << "\t"
            << fmt(exact_scaled(b.shunt.real(), base)) << "\t"
            << fmt(exact_scaled(b.shunt.imag(), base)) << "\t1\t1\t0\t0\t1\t" << fmt(b.vmax)
            << "\t" << fmt(b.vmin) << ";\n";
    }
    out << "];\n\n";

    out << "%% generator data\n";
    out << "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\n";
    out << "mpc.gen = [\n";
    for (const Machine& g : network.machines()) {
        out << "\t" << g.bus << "\t" << fmt(exact_scaled(g.p0, base)) << "\t"
            << fmt(exact_scaled(g.q0, base)) << "\t" << fmt(exact_scaled(g.qmax, base)) << "\t"
            << fmt(exact_scaled(g.qmin, base)) << "\t" << fmt(g.v_setpoint) << "\t" << fmt(base)
            << "\t1\t" << fmt(exact_scaled(g.pmax, base)) << "\t" << fmt(exact_scaled(g.pmin, base))
            << ";\n";
    }
    out << "];\n\n";

    out << "%% branch data\n";
    out << "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\n";
    out << "mpc.branch = [\n";
    for (const Branch& br : network.branches()) {
        double rate = std::isfinite(br.imax) ? exact_scaled(br.imax, base) : 0.0;
        out << "\t" << br.from_bus << "\t" << br.to_bus << "\t" << fmt(br.series_impedance.real())
            << "\t" << fmt(br.series_impedance.imag()) << "\t" << fmt(br.total_shunt_susceptance)
            << "\t" << fmt(rate) << "\t0\t0\t" << fmt(br.tap_ratio) << "\t"
            << fmt(exact_degrees(br.phase_shift)) << "\t" << (br.in_service ? 1 : 0) << ";\n";
    }
    out << "];\n";
    return out.str();
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

double to_double_or_throw(const std::string& key, const std::string& v) {
    double d;
    if (!parse_double(v, d)) throw DataError("config: '" + key + "' expects a number, got '" + v + "'");
    return d;
}

int to_int_or_throw(const std::string& key, const std::string& v) {
    double d = to_double_or_throw(key, v);
    if (d != std::floor(d)) throw DataError("config: '" + key + "' expects an integer");
    return static_cast<int>(d);
}

}  // namespace

std::vector<RunConfig> load_run_config(const std::string& text) {
    RunConfig base;
    std::vector<FormulationKind> kinds{FormulationKind::LinearTaylor};
    bool kinds_given = false;

    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(line_no, "expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.empty()) throw ParseError(line_no, "empty value for '" + key + "'");

        if (key == "case") {
            base.case_path = value;
        } else if (key == "load_scale") {
            base.load_scale = to_double_or_throw(key, value);
        } else if (key == "contingency_bus") {
            base.contingency_bus = to_int_or_throw(key, value);
        } else if (key == "contingency_branches") {
            for (const auto& tok : split(value, ','))
                if (!tok.empty()) base.contingency_branches.push_back(to_int_or_throw(key, tok));
        } else if (key == "reference") {
            if (value == "pre") base.reference_kind = ReferenceKind::Pre;
            else if (value == "post") base.reference_kind = ReferenceKind::Post;
            else throw DataError("config: reference must be pre or post, got '" + value + "'");
        } else if (key == "kind") {
            kinds.clear();
            kinds_given = true;
            if (value == "all") {
                kinds = {FormulationKind::ConvexTaylor, FormulationKind::ConvexRobust,
                         FormulationKind::LinearTaylor, FormulationKind::LinearRobust};
            } else {
                for (const auto& tok : split(value, ','))
                    if (!tok.empty()) kinds.push_back(formulation_kind_from_string(tok));
            }
            if (kinds.empty()) throw DataError("config: 'kind' names no formulation");
        } else if (key == "sides") {
            int n = to_int_or_throw(key, value);
            base.sides_current = base.sides_voltage = base.sides_robust = n;
        } else if (key == "m_i") {
            base.sides_current = to_int_or_throw(key, value);
        } else if (key == "m_v") {
            base.sides_voltage = to_int_or_throw(key, value);
        } else if (key == "n_i") {
            base.sides_robust = to_int_or_throw(key, value);
        } else if (key == "objective") {
            if (value == "deviation") base.objective = ObjectiveMode::Deviation;
            else if (value == "literal") base.objective = ObjectiveMode::Literal;
            else throw DataError("config: objective must be deviation or literal");
        } else if (key == "cost_shed_p") {
            base.costs.shed_p = to_double_or_throw(key, value);
        } else if (key == "cost_shed_q") {
            base.costs.shed_q = to_double_or_throw(key, value);
        } else if (key == "cost_redispatch_p") {
            base.costs.redispatch_p = to_double_or_throw(key, value);
        } else if (key == "cost_redispatch_q") {
            base.costs.redispatch_q = to_double_or_throw(key, value);
        } else if (key == "solver_tol") {
            base.solver.tolerance = to_double_or_throw(key, value);
        } else if (key == "violation_tol") {
            base.violation_tolerance = to_double_or_throw(key, value);
        } else if (key == "out") {
            base.output_dir = value;
        } else if (key == "label") {
            base.label = value;
        } else {
            throw ParseError(line_no, "unknown config key '" + key + "'");
        }
    }
    (void)kinds_given;

    std::vector<RunConfig> out;
    for (FormulationKind k : kinds) {
        RunConfig c = base;
        c.formulation = k;
        if (c.label.empty() || kinds.size() > 1) c.label = to_string(k);
        c.validate();
        out.push_back(std::move(c));
    }
    return out;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file '" + path + "'");
    out << content;
    if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace gridrelief
