#include "gridrelief/conic_solver.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

namespace gridrelief {

namespace {

using Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

constexpr double kInf = std::numeric_limits<double>::infinity();

// min c'x  s.t.  A x = b,  G x + s = h,  s in (R+)^l x SOC(d1) x ... x SOC(dk)
struct StandardForm {
    int n = 0, p = 0, l = 0, m = 0;
    std::vector<int> soc_dims;
    std::vector<int> soc_offsets;  // into the m-dimensional cone vector
    SpMat A, G;
    VectorXd b, h, c;
    double objective_constant = 0.0;
    int degree = 0;  // l + number of cones
};

StandardForm build_standard_form(const ConicProgram& prog) {
    StandardForm sf;
    sf.n = prog.num_variables();
    if (sf.n == 0) throw std::invalid_argument("program has no variables");
    sf.p = prog.num_equalities();
    sf.l = prog.num_inequalities();

    sf.c = VectorXd::Zero(sf.n);
    for (const auto& [v, coeff] : prog.objective().terms) sf.c[v] += coeff;
    sf.objective_constant = prog.objective().constant;

    std::vector<Triplet> at;
    sf.b = VectorXd::Zero(sf.p);
    for (int r = 0; r < sf.p; ++r) {
        const AffineExpr& e = prog.equalities()[r];
        double scale = 1.0;
        for (const auto& [v, coeff] : e.terms) scale = std::max(scale, std::abs(coeff));
        for (const auto& [v, coeff] : e.terms) at.emplace_back(r, v, coeff / scale);
        sf.b[r] = -e.constant / scale;
    }
    sf.A = SpMat(sf.p, sf.n);
    sf.A.setFromTriplets(at.begin(), at.end());

    int m = sf.l;
    for (const auto& cone : prog.cones()) {
        sf.soc_offsets.push_back(m);
        sf.soc_dims.push_back(1 + static_cast<int>(cone.norm_terms.size()));
        m += sf.soc_dims.back();
    }
    sf.m = m;
    sf.degree = sf.l + static_cast<int>(sf.soc_dims.size());

    std::vector<Triplet> gt;
    sf.h = VectorXd::Zero(m);
    for (int r = 0; r < sf.l; ++r) {
        const AffineExpr& e = prog.inequalities()[r];
        double scale = 1.0;
        for (const auto& [v, coeff] : e.terms) scale = std::max(scale, std::abs(coeff));
        for (const auto& [v, coeff] : e.terms) gt.emplace_back(r, v, coeff / scale);
        sf.h[r] = -e.constant / scale;
    }
    for (size_t k = 0; k < prog.cones().size(); ++k) {
        const auto& cone = prog.cones()[k];
        const int base = sf.soc_offsets[k];
        double scale = 1.0;
        for (const auto& [v, coeff] : cone.bound.terms) scale = std::max(scale, std::abs(coeff));
        for (const auto& t : cone.norm_terms)
            for (const auto& [v, coeff] : t.terms) scale = std::max(scale, std::abs(coeff));
        // s_0 = bound(x), s_j = norm_term_j(x)
        for (const auto& [v, coeff] : cone.bound.terms) gt.emplace_back(base, v, -coeff / scale);
        sf.h[base] = cone.bound.constant / scale;
        for (size_t j = 0; j < cone.norm_terms.size(); ++j) {
            const int row = base + 1 + static_cast<int>(j);
            for (const auto& [v, coeff] : cone.norm_terms[j].terms)
                gt.emplace_back(row, v, -coeff / scale);
            sf.h[row] = cone.norm_terms[j].constant / scale;
        }
    }
    sf.G = SpMat(m, sf.n);
    sf.G.setFromTriplets(gt.begin(), gt.end());
    return sf;
}

// Nesterov-Todd scaling for the orthant and second-order cones.
struct Scaling {
    VectorXd w_lp;                     // sqrt(s/z)
    std::vector<double> eta;           // per SOC
    std::vector<VectorXd> wbar;        // per SOC, hyperbolic-unit point
    VectorXd lambda;                   // scaled point, full cone dimension
    bool ok = false;
};

struct ConeView {
    int l;
    const std::vector<int>& dims;
    const std::vector<int>& offs;
};

VectorXd cone_identity(const ConeView& cv, int m) {
    VectorXd e = VectorXd::Zero(m);
    e.head(cv.l).setOnes();
    for (size_t k = 0; k < cv.dims.size(); ++k) e[cv.offs[k]] = 1.0;
    return e;
}

Scaling compute_scaling(const ConeView& cv, const VectorXd& s, const VectorXd& z) {
    Scaling sc;
    const int m = static_cast<int>(s.size());
    sc.lambda = VectorXd::Zero(m);
    sc.w_lp = VectorXd::Zero(cv.l);
    for (int i = 0; i < cv.l; ++i) {
        if (!(s[i] > 0.0 && z[i] > 0.0)) return sc;
        sc.w_lp[i] = std::sqrt(s[i] / z[i]);
        sc.lambda[i] = std::sqrt(s[i] * z[i]);
    }
    for (size_t k = 0; k < cv.dims.size(); ++k) {
        const int o = cv.offs[k], d = cv.dims[k];
        const auto sb = s.segment(o, d);
        const auto zb = z.segment(o, d);
        const double ress = sb[0] * sb[0] - sb.tail(d - 1).squaredNorm();
        const double resz = zb[0] * zb[0] - zb.tail(d - 1).squaredNorm();
        if (!(ress > 0.0 && resz > 0.0 && sb[0] > 0.0 && zb[0] > 0.0)) return sc;
        const VectorXd sbar = sb / std::sqrt(ress);
        const VectorXd zbar = zb / std::sqrt(resz);
        const double gamma = std::sqrt((1.0 + sbar.dot(zbar)) / 2.0);
        VectorXd w = zbar;
        w.tail(d - 1) = -w.tail(d - 1);  // J zbar
        w += sbar;
        w /= (2.0 * gamma);
        const double eta = std::pow(ress / resz, 0.25);
        sc.eta.push_back(eta);
        sc.wbar.push_back(w);
        // lambda = W z = eta * H(wbar) z
        VectorXd lam(d);
        const double wz = w.tail(d - 1).dot(zb.tail(d - 1));
        lam[0] = w[0] * zb[0] + wz;
        lam.tail(d - 1) =
            zb.tail(d - 1) + (zb[0] + wz / (1.0 + w[0])) * w.tail(d - 1);
        sc.lambda.segment(o, d) = eta * lam;
    }
    sc.ok = true;
    return sc;
}

VectorXd apply_W(const ConeView& cv, const Scaling& sc, const VectorXd& u) {
    VectorXd r(u.size());
    r.head(cv.l) = sc.w_lp.array() * u.head(cv.l).array();
    for (size_t k = 0; k < cv.dims.size(); ++k) {
        const int o = cv.offs[k], d = cv.dims[k];
        const VectorXd& w = sc.wbar[k];
        const auto ub = u.segment(o, d);
        const double wu = w.tail(d - 1).dot(ub.tail(d - 1));
        r[o] = sc.eta[k] * (w[0] * ub[0] + wu);
        r.segment(o + 1, d - 1) =
            sc.eta[k] * (ub.tail(d - 1) + (ub[0] + wu / (1.0 + w[0])) * w.tail(d - 1));
    }
    return r;
}

VectorXd apply_W_inverse(const ConeView& cv, const Scaling& sc, const VectorXd& u) {
    VectorXd r(u.size());
    r.head(cv.l) = u.head(cv.l).array() / sc.w_lp.array();
    for (size_t k = 0; k < cv.dims.size(); ++k) {
        const int o = cv.offs[k], d = cv.dims[k];
        const VectorXd& w = sc.wbar[k];
        const auto ub = u.segment(o, d);
        const double wu = w.tail(d - 1).dot(ub.tail(d - 1));
        r[o] = (w[0] * ub[0] - wu) / sc.eta[k];
        r.segment(o + 1, d - 1) =
            (ub.tail(d - 1) + (-ub[0] + wu / (1.0 + w[0])) * w.tail(d - 1)) / sc.eta[k];
    }
    return r;
}

VectorXd apply_WtW(const ConeView& cv, const Scaling& sc, const VectorXd& u) {
    VectorXd r(u.size());
    r.head(cv.l) = sc.w_lp.array().square() * u.head(cv.l).array();
    for (size_t k = 0; k < cv.dims.size(); ++k) {
        const int o = cv.offs[k], d = cv.dims[k];
        const VectorXd& w = sc.wbar[k];
        const auto ub = u.segment(o, d);
        const double e2 = sc.eta[k] * sc.eta[k];
        const double wu = w[0] * ub[0] + w.tail(d - 1).dot(ub.tail(d - 1));
        r[o] = e2 * (2.0 * w[0] * wu - ub[0]);
        r.segment(o + 1, d - 1) = e2 * (2.0 * wu * w.tail(d - 1) + ub.tail(d - 1));
    }
    return r;
}

VectorXd jordan_product(const ConeView& cv, const VectorXd& u, const VectorXd& v) {
    VectorXd r(u.size());
    r.head(cv.l) = u.head(cv.l).array() * v.head(cv.l).array();
    for (size_t k = 0; k < cv.dims.size(); ++k) {
        const int o = cv.offs[k], d = cv.dims[k];
        const auto ub = u.segment(o, d);
        const auto vb = v.segment(o, d);
        r[o] = ub.dot(vb);
        r.segment(o + 1, d - 1) = ub[0] * vb.tail(d - 1) + vb[0] * ub.tail(d - 1);
    }
    return r;
}

// solve lambda o x = d for x
VectorXd jordan_solve(const ConeView& cv, const VectorXd& lambda, const VectorXd& d) {
    VectorXd r(d.size());
    r.head(cv.l) = d.head(cv.l).array() / lambda.head(cv.l).array();
    for (size_t k = 0; k < cv.dims.size(); ++k) {
        const int o = cv.offs[k], dim = cv.dims[k];
        const auto lb = lambda.segment(o, dim);
        const auto db = d.segment(o, dim);
        const double det = lb[0] * lb[0] - lb.tail(dim - 1).squaredNorm();
        const double x0 = (lb[0] * db[0] - lb.tail(dim - 1).dot(db.tail(dim - 1))) / det;
        r[o] = x0;
        r.segment(o + 1, dim - 1) = (db.tail(dim - 1) - x0 * lb.tail(dim - 1)) / lb[0];
    }
    return r;
}

double smallest_positive_root(double a, double b_half, double c) {
    // a t^2 + 2 b_half t + c = 0, c > 0; returns +inf when no positive root
    double best = kInf;
    if (std::abs(a) < 1e-300) {
        if (b_half < 0.0) best = -c / (2.0 * b_half);
        return best;
    }
    const double disc = b_half * b_half - a * c;
    if (disc < 0.0) return kInf;
    const double sd = std::sqrt(disc);
    const double q = -(b_half + (b_half >= 0.0 ? sd : -sd));
    for (double r : {a != 0.0 ? q / a : kInf, q != 0.0 ? c / q : kInf}) {
        if (r > 0.0 && std::isfinite(r)) best = std::min(best, r);
    }
    return best;
}

// sup { t : v + t dv stays in the cone }, with v strictly interior
double max_step(const ConeView& cv, const VectorXd& v, const VectorXd& dv) {
    double t = kInf;
    for (int i = 0; i < cv.l; ++i)
        if (dv[i] < 0.0) t = std::min(t, -v[i] / dv[i]);
    for (size_t k = 0; k < cv.dims.size(); ++k) {
        const int o = cv.offs[k], d = cv.dims[k];
        const auto vb = v.segment(o, d);
        const auto db = dv.segment(o, d);
        const double a = db[0] * db[0] - db.tail(d - 1).squaredNorm();
        const double bh = vb[0] * db[0] - vb.tail(d - 1).dot(db.tail(d - 1));
        const double c = vb[0] * vb[0] - vb.tail(d - 1).squaredNorm();
        t = std::min(t, smallest_positive_root(a, bh, c));
    }
    return t;
}

struct KktSolver {
    const StandardForm& sf;
    const ConeView& cv;
    Eigen::SparseLU<SpMat> lu;
    SpMat kkt;
    bool analyzed = false;
    const Scaling* scaling = nullptr;
    int refinement = 2;
    static constexpr double kReg = 1e-9;

    KktSolver(const StandardForm& s, const ConeView& c) : sf(s), cv(c) {}

    bool factor(const Scaling& sc) {
        scaling = &sc;
        const int n = sf.n, p = sf.p, m = sf.m;
        std::vector<Triplet> t;
        t.reserve(sf.A.nonZeros() * 2 + sf.G.nonZeros() * 2 + n + p + m * 3);
        for (int i = 0; i < n; ++i) t.emplace_back(i, i, kReg);
        for (int col = 0; col < sf.A.outerSize(); ++col)
            for (SpMat::InnerIterator it(sf.A, col); it; ++it) {
                t.emplace_back(n + it.row(), it.col(), it.value());
                t.emplace_back(it.col(), n + it.row(), it.value());
            }
        for (int i = 0; i < p; ++i) t.emplace_back(n + i, n + i, -kReg);
        for (int col = 0; col < sf.G.outerSize(); ++col)
            for (SpMat::InnerIterator it(sf.G, col); it; ++it) {
                t.emplace_back(n + p + it.row(), it.col(), it.value());
                t.emplace_back(it.col(), n + p + it.row(), it.value());
            }
        for (int i = 0; i < cv.l; ++i) {
            const double w2 = sc.w_lp[i] * sc.w_lp[i];
            t.emplace_back(n + p + i, n + p + i, -(w2 + kReg));
        }
        for (size_t k = 0; k < cv.dims.size(); ++k) {
            const int o = cv.offs[k], d = cv.dims[k];
            const VectorXd& w = sc.wbar[k];
            const double e2 = sc.eta[k] * sc.eta[k];
            for (int i = 0; i < d; ++i) {
                for (int j = 0; j < d; ++j) {
                    double hij = 2.0 * w[i] * w[j];
                    if (i == j) hij += (i == 0 ? -1.0 : 1.0);
                    double v = -e2 * hij;
                    if (i == j) v -= kReg;
                    t.emplace_back(n + p + o + i, n + p + o + j, v);
                }
            }
        }
        kkt = SpMat(n + p + m, n + p + m);
        kkt.setFromTriplets(t.begin(), t.end());
        kkt.makeCompressed();
        if (!analyzed) {
            lu.analyzePattern(kkt);
            analyzed = true;
        }
        lu.factorize(kkt);
        return lu.info() == Eigen::Success;
    }

    // residual against the unregularized KKT operator
    VectorXd apply_unregularized(const VectorXd& u) const {
        const int n = sf.n, p = sf.p, m = sf.m;
        VectorXd ux = u.head(n), uy = u.segment(n, p), uz = u.tail(m);
        VectorXd r(n + p + m);
        r.head(n) = sf.A.transpose() * uy + sf.G.transpose() * uz;
        r.segment(n, p) = sf.A * ux;
        r.tail(m) = sf.G * ux - apply_WtW(cv, *scaling, uz);
        return r;
    }

    void solve3(const VectorXd& bx, const VectorXd& by, const VectorXd& bz, VectorXd& ux,
                VectorXd& uy, VectorXd& uz) const {
        const int n = sf.n, p = sf.p, m = sf.m;
        VectorXd rhs(n + p + m);
        rhs.head(n) = bx;
        rhs.segment(n, p) = by;
        rhs.tail(m) = bz;
        VectorXd sol = lu.solve(rhs);
        for (int r = 0; r < refinement; ++r) {
            VectorXd res = rhs - apply_unregularized(sol);
            sol += lu.solve(res);
        }
        ux = sol.head(n);
        uy = sol.segment(n, p);
        uz = sol.tail(m);
    }
};

}  // namespace

SolverResult solve_program(const ConicProgram& program, const SolverOptions& options) {
    const auto t_start = std::chrono::steady_clock::now();
    SolverResult result;
    auto finish = [&](SolveStatus st) {
        result.status = st;
        result.wall_time_ms = std::chrono::duration<double, std::milli>(
                                  std::chrono::steady_clock::now() - t_start)
                                  .count();
        return result;
    };

    const StandardForm sf = build_standard_form(program);
    const ConeView cv{sf.l, sf.soc_dims, sf.soc_offsets};
    const int n = sf.n, p = sf.p, m = sf.m;
    const double tol = options.tolerance;

    const double resx0 = std::max(1.0, sf.c.norm());
    const double resy0 = std::max(1.0, sf.b.norm());
    const double resz0 = std::max(1.0, sf.h.norm());

    VectorXd x = VectorXd::Zero(n), y = VectorXd::Zero(p);
    VectorXd s = cone_identity(cv, m), z = cone_identity(cv, m);
    double tau = 1.0, kappa = 1.0;

    KktSolver kkt(sf, cv);
    kkt.refinement = options.refinement_steps;

    for (int iter = 0; iter <= options.max_iterations; ++iter) {
        const VectorXd rx = sf.A.transpose() * y + sf.G.transpose() * z + sf.c * tau;
        const VectorXd ry = sf.A * x - sf.b * tau;
        const VectorXd rz = sf.G * x + s - sf.h * tau;
        const double rtau = kappa + sf.c.dot(x) + sf.b.dot(y) + sf.h.dot(z);
        const double gap = s.dot(z);
        const double mu = (gap + tau * kappa) / (sf.degree + 1);

        const double pcost = sf.c.dot(x) / tau;
        const double by_hz = sf.b.dot(y) + sf.h.dot(z);
        const double pres = std::max(p > 0 ? ry.norm() / resy0 : 0.0, m > 0 ? rz.norm() / resz0 : 0.0) / tau;
        const double dres = rx.norm() / resx0 / tau;
        const double gap_abs = gap / (tau * tau);
        const double relgap = gap_abs / std::max(1.0, std::abs(pcost));

        result.iterations = iter;
        result.primal_residual = pres;
        result.dual_residual = dres;
        result.duality_gap = gap_abs;

        if (pres <= tol && dres <= tol && (gap_abs <= tol || relgap <= tol)) {
            result.values.assign(n, 0.0);
            for (int i = 0; i < n; ++i) result.values[i] = x[i] / tau;
            result.objective = pcost + sf.objective_constant;
            return finish(SolveStatus::Optimal);
        }
        if (-by_hz > 0.0) {
            const double pinf = (sf.A.transpose() * y + sf.G.transpose() * z).norm() / resx0 / (-by_hz);
            if (pinf <= tol) return finish(SolveStatus::Infeasible);
        }
        if (-sf.c.dot(x) > 0.0) {
            const double dinf = std::max(p > 0 ? (sf.A * x).norm() / resy0 : 0.0,
                                         m > 0 ? (sf.G * x + s).norm() / resz0 : 0.0) /
                                (-sf.c.dot(x));
            if (dinf <= tol) return finish(SolveStatus::Unbounded);
        }
        if (iter == options.max_iterations) break;

        const Scaling sc = compute_scaling(cv, s, z);
        if (!sc.ok) return finish(SolveStatus::NumericFailure);
        if (!kkt.factor(sc)) return finish(SolveStatus::NumericFailure);

        VectorXd x1, y1, z1;
        kkt.solve3(-sf.c, sf.b, sf.h, x1, y1, z1);
        const double denom_tau = sf.c.dot(x1) + sf.b.dot(y1) + sf.h.dot(z1) - kappa / tau;

        auto direction = [&](const VectorXd& dx_t, const VectorXd& dy_t, const VectorXd& dz_t,
                             double dtau_t, const VectorXd& dlam, double dkap, VectorXd& Dx,
                             VectorXd& Dy, VectorXd& Dz, VectorXd& Ds, double& Dtau,
                             double& Dkappa) {
            const VectorXd wsol = apply_W(cv, sc, jordan_solve(cv, sc.lambda, dlam));
            VectorXd x2, y2, z2;
            kkt.solve3(dx_t, dy_t, dz_t - wsol, x2, y2, z2);
            Dtau = (dtau_t - dkap / tau - (sf.c.dot(x2) + sf.b.dot(y2) + sf.h.dot(z2))) / denom_tau;
            Dx = x2 + Dtau * x1;
            Dy = y2 + Dtau * y1;
            Dz = z2 + Dtau * z1;
            Ds = wsol - apply_WtW(cv, sc, Dz);
            Dkappa = (dkap - kappa * Dtau) / tau;
        };

        // predictor
        VectorXd dxa, dya, dza, dsa;
        double dtaua, dkappaa;
        direction(-rx, -ry, -rz, -rtau, -jordan_product(cv, sc.lambda, sc.lambda), -tau * kappa,
                  dxa, dya, dza, dsa, dtaua, dkappaa);

        double alpha_max = std::min(max_step(cv, s, dsa), max_step(cv, z, dza));
        if (dtaua < 0.0) alpha_max = std::min(alpha_max, -tau / dtaua);
        if (dkappaa < 0.0) alpha_max = std::min(alpha_max, -kappa / dkappaa);
        const double alpha_aff = std::min(1.0, 0.99 * alpha_max);

        const double gap_aff = (s + alpha_aff * dsa).dot(z + alpha_aff * dza) +
                               (tau + alpha_aff * dtaua) * (kappa + alpha_aff * dkappaa);
        double sigma = gap_aff / (gap + tau * kappa);
        sigma = std::min(1.0, std::max(0.0, sigma));
        sigma = sigma * sigma * sigma;

        // corrector
        const VectorXd e = cone_identity(cv, m);
        const VectorXd corr = jordan_product(cv, apply_W(cv, sc, dza), apply_W_inverse(cv, sc, dsa));
        const VectorXd dlam =
            -jordan_product(cv, sc.lambda, sc.lambda) - corr + sigma * mu * e;
        const double dkap_target = -tau * kappa - dtaua * dkappaa + sigma * mu;

        VectorXd dx, dy, dz, ds;
        double dtau, dkappa;
        const double f = 1.0 - sigma;
        direction(-f * rx, -f * ry, -f * rz, -f * rtau, dlam, dkap_target, dx, dy, dz, ds, dtau,
                  dkappa);

        double step_max = std::min(max_step(cv, s, ds), max_step(cv, z, dz));
        if (dtau < 0.0) step_max = std::min(step_max, -tau / dtau);
        if (dkappa < 0.0) step_max = std::min(step_max, -kappa / dkappa);
        const double alpha = std::min(1.0, 0.99 * step_max);
        if (!std::isfinite(alpha) || alpha <= 0.0) return finish(SolveStatus::NumericFailure);

        x += alpha * dx;
        y += alpha * dy;
        z += alpha * dz;
        s += alpha * ds;
        tau += alpha * dtau;
        kappa += alpha * dkappa;
        if (!(tau > 0.0) || !std::isfinite(tau)) return finish(SolveStatus::NumericFailure);
    }
    return finish(SolveStatus::NumericFailure);
}

}  // namespace gridrelief
