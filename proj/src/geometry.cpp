#include "gridrelief/geometry.hpp"

#include <cmath>

namespace gridrelief {

double Halfspace::evaluate(const std::map<std::string, double>& values) const {
    double s = 0.0;
    for (const auto& [name, c] : coeffs) s += c * values.at(name);
    return s;
}

bool Halfspace::satisfied(const std::map<std::string, double>& values, double tol) const {
    double s = evaluate(values);
    return sense == Sense::LessEqual ? s <= rhs + tol : s >= rhs - tol;
}

double LinearExpr::evaluate(const std::map<std::string, double>& values) const {
    double s = constant;
    for (const auto& [name, c] : coeffs) s += c * values.at(name);
    return s;
}

double wrap_angle(double a) {
    a = std::fmod(a, 2.0 * M_PI);
    if (a > M_PI) a -= 2.0 * M_PI;
    if (a <= -M_PI) a += 2.0 * M_PI;
    return a;
}

AnchorAngles anchor_angles(const ReferencePoint& reference, const Network& network) {
    const auto mask = energized_mask(network);
    AnchorAngles a;
    a.theta.assign(network.num_buses(), 0.0);
    a.phi.assign(network.num_buses(), 0.0);
    for (int b = 0; b < network.num_buses(); ++b) {
        const Bus& bus = network.buses()[b];
        a.phi[b] = std::acos(std::min(1.0, bus.vmin / bus.vmax));
        if (!mask[b]) continue;
        const Complex v0 = reference.state.v[b];
        if (std::abs(v0) == 0.0)
            throw DataError("zero reference voltage at energized bus " + std::to_string(bus.id));
        a.theta[b] = std::atan2(v0.imag(), v0.real());
    }
    return a;
}

std::vector<VoltageDomain> voltage_convex_domain(const ReferencePoint& reference,
                                                 const Network& network) {
    const auto mask = energized_mask(network);
    std::vector<VoltageDomain> out;
    for (int b = 0; b < network.num_buses(); ++b) {
        if (!mask[b]) continue;
        const Bus& bus = network.buses()[b];
        const Complex v0 = reference.state.v[b];
        const double v0mag = std::abs(v0);
        if (v0mag == 0.0)
            throw DataError("zero reference voltage at energized bus " + std::to_string(bus.id));
        VoltageDomain d;
        d.bus_index = b;
        d.upper.norm_vars = {"v_re", "v_im"};
        d.upper.bound = bus.vmax;
        d.lower.coeffs = {{"v_re", v0.real()}, {"v_im", v0.imag()}};
        d.lower.rhs = bus.vmin * v0mag;
        d.lower.sense = Sense::GreaterEqual;
        out.push_back(std::move(d));
    }
    return out;
}

LinearExpr taylor_power_row(const Complex& v0, const Complex& i0, WhichPower which) {
    LinearExpr e;
    if (which == WhichPower::Active) {
        e.coeffs = {{"i_re", v0.real()},
                    {"i_im", v0.imag()},
                    {"v_re", i0.real()},
                    {"v_im", i0.imag()}};
        e.constant = -(v0.real() * i0.real() + v0.imag() * i0.imag());
    } else {
        e.coeffs = {{"i_re", v0.imag()},
                    {"i_im", -v0.real()},
                    {"v_re", -i0.imag()},
                    {"v_im", i0.real()}};
        e.constant = -(v0.imag() * i0.real() - v0.real() * i0.imag());
    }
    return e;
}

Complex worst_case_voltage(const Complex& i, double theta, double phi, double vmax,
                           BoundKind bound_kind) {
    if (std::abs(i) == 0.0) throw DataError("worst_case_voltage: zero current");
    const double delta = wrap_angle(std::arg(i) - theta);
    if (bound_kind == BoundKind::Upper) {
        if (std::abs(delta) <= phi) return std::polar(vmax, theta + delta);
        return std::polar(vmax, delta > phi ? theta + phi : theta - phi);
    }
    // minimizer of <v, i>: the reflected current direction when it lies on
    // the arc, otherwise the far endpoint
    const double anti = wrap_angle(delta + M_PI);
    if (std::abs(anti) <= phi) return std::polar(vmax, theta + anti);
    return std::polar(vmax, delta > 0.0 ? theta - phi : theta + phi);
}

namespace {

Halfspace direction_halfspace(double angle, const std::string& xv, const std::string& yv,
                              double rhs, Sense sense) {
    Halfspace h;
    h.coeffs = {{xv, std::cos(angle)}, {yv, std::sin(angle)}};
    h.rhs = rhs;
    h.sense = sense;
    return h;
}

// reactive power uses the quarter-turn of the current vector:
// <v, (-i_im, i_re)> so the facet at direction `angle` reads
// sin(angle) i_re - cos(angle) i_im.
Halfspace reactive_halfspace(double angle, double rhs, Sense sense) {
    Halfspace h;
    h.coeffs = {{"i_re", std::sin(angle)}, {"i_im", -std::cos(angle)}};
    h.rhs = rhs;
    h.sense = sense;
    return h;
}

void append_lower_halfspaces(const PowerBounds& bounds, double theta, double phi, double vmax,
                             RobustCurrentDomain& d) {
    d.halfspaces.push_back(
        direction_halfspace(theta - phi, "i_re", "i_im", bounds.pmin / vmax, Sense::GreaterEqual));
    d.halfspaces.push_back(
        direction_halfspace(theta + phi, "i_re", "i_im", bounds.pmin / vmax, Sense::GreaterEqual));
    d.halfspaces.push_back(reactive_halfspace(theta - phi, bounds.qmin / vmax, Sense::GreaterEqual));
    d.halfspaces.push_back(reactive_halfspace(theta + phi, bounds.qmin / vmax, Sense::GreaterEqual));
}

}  // namespace

RobustCurrentDomain robust_conic_domain(const PowerBounds& bounds, double theta, double phi,
                                        double vmax) {
    if (!(vmax > 0.0)) throw DataError("robust domain: vmax must be positive");
    if (bounds.pmax < 0.0 || bounds.qmax < 0.0)
        throw DataError("robust domain: negative upper power bound is not representable");
    RobustCurrentDomain d;
    SecondOrderCone active_disk{{"i_re", "i_im"}, bounds.pmax / vmax};
    SecondOrderCone reactive_disk{{"i_re", "i_im"}, bounds.qmax / vmax};
    d.disks = {active_disk, reactive_disk};
    d.halfspaces.push_back(
        direction_halfspace(theta - phi, "i_re", "i_im", bounds.pmax / vmax, Sense::LessEqual));
    d.halfspaces.push_back(
        direction_halfspace(theta + phi, "i_re", "i_im", bounds.pmax / vmax, Sense::LessEqual));
    append_lower_halfspaces(bounds, theta, phi, vmax, d);
    return d;
}

std::vector<Halfspace> inscribed_polygon_facets(double radius, int sides) {
    if (sides < 3) throw DataError("inscribed polygon needs at least 3 sides");
    if (radius < 0.0) throw DataError("inscribed polygon: negative radius");
    std::vector<Halfspace> out;
    out.reserve(sides);
    const double rhs = radius * std::cos(M_PI / sides);
    for (int j = 1; j <= sides; ++j) {
        const double a = (j - 1) * M_PI / sides;
        const double b = j * M_PI / sides;
        out.push_back(direction_halfspace(a + b, "x", "y", rhs, Sense::LessEqual));
    }
    return out;
}

std::vector<Halfspace> voltage_polygon_facets(double theta, double phi, double vmax, int sides) {
    if (sides < 1) throw DataError("voltage polygon needs at least 1 side per half-arc");
    std::vector<Halfspace> out;
    out.reserve(2 * sides);
    for (int j = 1; j <= sides; ++j) {
        const double a1 = 0.5 * (theta + (j - 1) * phi / sides);
        const double b1 = 0.5 * (theta + j * phi / sides);
        out.push_back(direction_halfspace(a1 + b1, "v_re", "v_im", vmax * std::cos(a1 - b1),
                                          Sense::LessEqual));
        const double a2 = 0.5 * (theta - (j - 1) * phi / sides);
        const double b2 = 0.5 * (theta - j * phi / sides);
        out.push_back(direction_halfspace(a2 + b2, "v_re", "v_im", vmax * std::cos(a2 - b2),
                                          Sense::LessEqual));
    }
    return out;
}

RobustCurrentDomain robust_linear_domain(const PowerBounds& bounds, double theta, double phi,
                                         double vmax, int sides) {
    if (sides < 3) throw DataError("robust linear domain needs at least 3 facets");
    if (!(vmax > 0.0)) throw DataError("robust domain: vmax must be positive");
    if (bounds.pmax < 0.0 || bounds.qmax < 0.0)
        throw DataError("robust domain: negative upper power bound is not representable");
    RobustCurrentDomain d;
    const double cosgap = std::cos(M_PI / sides);
    for (int j = 1; j <= sides; ++j) {
        const double a = (j - 1) * M_PI / sides;
        const double b = j * M_PI / sides;
        d.halfspaces.push_back(direction_halfspace(a + b, "i_re", "i_im",
                                                   (bounds.pmax / vmax) * cosgap, Sense::LessEqual));
        d.halfspaces.push_back(
            reactive_halfspace(a + b, (bounds.qmax / vmax) * cosgap, Sense::LessEqual));
    }
    append_lower_halfspaces(bounds, theta, phi, vmax, d);
    return d;
}

std::vector<Halfspace> corner_robust_facets(const PowerBounds& bounds, double vmax, int sides) {
    if (sides < 3) throw DataError("corner form needs at least 3 corners");
    std::vector<Halfspace> out;
    out.reserve(2 * sides);
    for (int j = 1; j <= sides; ++j) {
        const double a = (j - 1) * M_PI / sides;
        Halfspace hp;
        hp.coeffs = {{"i_re", vmax * std::cos(a)}, {"i_im", vmax * std::sin(a)}};
        hp.rhs = bounds.pmax;
        hp.sense = Sense::LessEqual;
        out.push_back(std::move(hp));
        Halfspace hq;
        hq.coeffs = {{"i_im", -vmax * std::cos(a)}, {"i_re", vmax * std::sin(a)}};
        hq.rhs = bounds.qmax;
        hq.sense = Sense::LessEqual;
        out.push_back(std::move(hq));
    }
    return out;
}

}  // namespace gridrelief
