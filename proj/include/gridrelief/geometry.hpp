#pragma once

#include <map>
#include <string>
#include <vector>

#include "gridrelief/network.hpp"
#include "gridrelief/powerflow.hpp"

namespace gridrelief {

enum class Sense { LessEqual, GreaterEqual };

/// Linear inequality sum_k coeffs[k] * var_k  (<=|>=)  rhs over named variables.
struct Halfspace {
    std::map<std::string, double> coeffs;
    double rhs = 0.0;
    Sense sense = Sense::LessEqual;

    double evaluate(const std::map<std::string, double>& values) const;
    bool satisfied(const std::map<std::string, double>& values, double tol = 0.0) const;
};

/// || (var_1, ..., var_k) ||_2 <= bound, bound constant.
struct SecondOrderCone {
    std::vector<std::string> norm_vars;
    double bound = 0.0;
};

/// Affine expression sum coeffs[k]*var_k + constant over named variables.
struct LinearExpr {
    std::map<std::string, double> coeffs;
    double constant = 0.0;

    double evaluate(const std::map<std::string, double>& values) const;
};

/// Per-bus reference-voltage phase (theta) and admissible half-aperture
/// phi = arccos(vmin / vmax) of the convex voltage domain.
struct AnchorAngles {
    std::vector<double> theta;
    std::vector<double> phi;
};

struct PowerBounds {
    double pmin = 0.0, pmax = 0.0;
    double qmin = 0.0, qmax = 0.0;
};

/// Convex voltage feasibility region of one bus: quadratic upper bound plus
/// the supporting halfspace that replaces the non-convex lower bound.
struct VoltageDomain {
    int bus_index = -1;
    SecondOrderCone upper;  // ||(v_re, v_im)|| <= vmax
    Halfspace lower;        // v_re v0_re + v_im v0_im >= vmin |v0|
};

/// Current-space region on (i_re, i_im) whose power stays inside the box
/// for every admissible voltage.
struct RobustCurrentDomain {
    std::vector<SecondOrderCone> disks;  // over {"i_re","i_im"}
    std::vector<Halfspace> halfspaces;   // over {"i_re","i_im"}
};

enum class WhichPower { Active, Reactive };
enum class BoundKind { Upper, Lower };

double wrap_angle(double a);  // into (-pi, pi]

AnchorAngles anchor_angles(const ReferencePoint& reference, const Network& network);

std::vector<VoltageDomain> voltage_convex_domain(const ReferencePoint& reference,
                                                 const Network& network);

/// First-order expansion of p or q around (v0, i0); variables are named
/// "v_re", "v_im", "i_re", "i_im". Exact at the expansion point.
LinearExpr taylor_power_row(const Complex& v0, const Complex& i0, WhichPower which);

/// Voltage in the convex domain (radius vmax, aperture phi around theta)
/// that extremizes <v, i>: the maximizer for Upper, minimizer for Lower.
Complex worst_case_voltage(const Complex& i, double theta, double phi, double vmax,
                           BoundKind bound_kind);

/// Conic inner approximation of the box power bounds, robust over the whole
/// voltage domain: unconditional disks plus the supporting halfspaces.
RobustCurrentDomain robust_conic_domain(const PowerBounds& bounds, double theta, double phi,
                                        double vmax);

/// Inscribed regular m-gon of the disk of radius r, as m halfspaces over
/// {"x","y"}; vertices at angles 2*j*pi/m, common rhs r*cos(pi/m).
std::vector<Halfspace> inscribed_polygon_facets(double radius, int sides);

/// Chord facets covering the voltage arc [theta-phi, theta+phi]; combined
/// downstream with the lower halfspace of the convex domain. Variables
/// "v_re", "v_im".
std::vector<Halfspace> voltage_polygon_facets(double theta, double phi, double vmax, int sides);

/// Linear robust domain: the disks of the conic version replaced by n_i
/// inscribed facets each; lower bounds unchanged.
RobustCurrentDomain robust_linear_domain(const PowerBounds& bounds, double theta, double phi,
                                         double vmax, int sides);

/// Alternative robust upper bounds built from the corners of the voltage
/// polytope: <vmax e^{j a_j}, i> <= pmax and the reactive analog.
std::vector<Halfspace> corner_robust_facets(const PowerBounds& bounds, double vmax, int sides);

}  // namespace gridrelief
