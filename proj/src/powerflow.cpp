#include "gridrelief/powerflow.hpp"

#include <cmath>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

namespace gridrelief {

std::pair<double, double> power_from_iv(const Complex& v, const Complex& i) {
    return {v.real() * i.real() + v.imag() * i.imag(),
            v.imag() * i.real() - v.real() * i.imag()};
}

double max_abs(const std::vector<Complex>& values) {
    double m = 0.0;
    for (const Complex& c : values) m = std::max(m, std::abs(c));
    return m;
}

std::vector<Complex> injection_residual(const Network& network, const SystemState& state) {
    const SparseComplexMatrix yb = build_bus_admittance(network);
    Eigen::VectorXcd v(network.num_buses());
    for (int i = 0; i < network.num_buses(); ++i) v[i] = state.v[i];
    Eigen::VectorXcd flow = yb * v;
    std::vector<Complex> res(network.num_buses());
    for (int i = 0; i < network.num_buses(); ++i)
        res[i] = (state.i_g[i] - state.i_l[i]) - flow[i];
    return res;
}

namespace {

enum class BusKind { Slack, PV, PQ };

struct PolarSolverWorkspace {
    std::vector<int> bus_of;        // solver position -> bus index
    std::vector<int> pos_of;        // bus index -> solver position, -1 if dead
    std::vector<BusKind> kind;      // per solver position
    std::vector<double> p_sched, q_sched, v_set;
    std::vector<int> theta_eq;      // solver position -> P-mismatch row, -1 for slack
    std::vector<int> vmag_eq;       // solver position -> Q-mismatch row, -1 unless PQ
    int n_eq = 0;
};

PolarSolverWorkspace classify(const Network& network, const std::vector<bool>& energized) {
    PolarSolverWorkspace w;
    w.pos_of.assign(network.num_buses(), -1);
    for (int b = 0; b < network.num_buses(); ++b) {
        if (!energized[b]) continue;
        w.pos_of[b] = static_cast<int>(w.bus_of.size());
        w.bus_of.push_back(b);
        const Machine* g = network.machine_at(b);
        const Demand* d = network.demand_at(b);
        BusKind k = BusKind::PQ;
        if (network.buses()[b].is_slack) k = BusKind::Slack;
        else if (g != nullptr) k = BusKind::PV;
        w.kind.push_back(k);
        w.p_sched.push_back((g ? g->p0 : 0.0) - (d ? d->p0 : 0.0));
        w.q_sched.push_back((g ? g->q0 : 0.0) - (d ? d->q0 : 0.0));
        w.v_set.push_back(g ? g->v_setpoint : 1.0);
    }
    int slack_count = 0;
    for (BusKind k : w.kind)
        if (k == BusKind::Slack) ++slack_count;
    if (slack_count != 1)
        throw StructuralError("energized component must contain exactly one slack bus, found " +
                              std::to_string(slack_count));

    w.theta_eq.assign(w.bus_of.size(), -1);
    w.vmag_eq.assign(w.bus_of.size(), -1);
    int row = 0;
    for (size_t i = 0; i < w.bus_of.size(); ++i)
        if (w.kind[i] != BusKind::Slack) w.theta_eq[i] = row++;
    for (size_t i = 0; i < w.bus_of.size(); ++i)
        if (w.kind[i] == BusKind::PQ) w.vmag_eq[i] = row++;
    w.n_eq = row;
    return w;
}

}  // namespace

PowerFlowResult solve_power_flow(const Network& network, const PowerFlowOptions& options,
                                 const SystemState* initial) {
    if (!(options.tolerance > 0.0)) throw DataError("power flow tolerance must be positive");
    if (options.max_iterations < 1) throw DataError("max_iterations must be >= 1");

    const std::vector<bool> energized = energized_mask(network);
    PolarSolverWorkspace w = classify(network, energized);
    const int m = static_cast<int>(w.bus_of.size());

    // reduced admittance over energized buses
    const SparseComplexMatrix yb_full = build_bus_admittance(network);
    std::vector<Eigen::Triplet<Complex>> trip;
    for (int col = 0; col < yb_full.outerSize(); ++col) {
        for (SparseComplexMatrix::InnerIterator it(yb_full, col); it; ++it) {
            int r = w.pos_of[it.row()], c = w.pos_of[it.col()];
            if (r >= 0 && c >= 0) trip.emplace_back(r, c, it.value());
        }
    }
    SparseComplexMatrix yb(m, m);
    yb.setFromTriplets(trip.begin(), trip.end());

    Eigen::VectorXd theta(m), vmag(m);
    for (int i = 0; i < m; ++i) {
        int b = w.bus_of[i];
        if (initial != nullptr && !options.flat_start && std::abs(initial->v[b]) > 1e-6) {
            theta[i] = std::arg(initial->v[b]);
            vmag[i] = std::abs(initial->v[b]);
        } else {
            theta[i] = 0.0;
            vmag[i] = (w.kind[i] == BusKind::PQ) ? 1.0 : w.v_set[i];
        }
        if (w.kind[i] != BusKind::PQ) vmag[i] = w.v_set[i];
        if (w.kind[i] == BusKind::Slack) theta[i] = 0.0;
    }

    auto calc_power = [&](const Eigen::VectorXd& th, const Eigen::VectorXd& vm,
                          Eigen::VectorXd& p, Eigen::VectorXd& q) {
        Eigen::VectorXcd v(m);
        for (int i = 0; i < m; ++i) v[i] = std::polar(vm[i], th[i]);
        Eigen::VectorXcd s = v.array() * (yb * v).conjugate().array();
        p = s.real();
        q = s.imag();
    };

    auto mismatch = [&](const Eigen::VectorXd& th, const Eigen::VectorXd& vm) {
        Eigen::VectorXd p, q, f(w.n_eq);
        calc_power(th, vm, p, q);
        for (int i = 0; i < m; ++i) {
            if (w.theta_eq[i] >= 0) f[w.theta_eq[i]] = w.p_sched[i] - p[i];
            if (w.vmag_eq[i] >= 0) f[w.vmag_eq[i]] = w.q_sched[i] - q[i];
        }
        return f;
    };

    PowerFlowResult result;
    Eigen::VectorXd f = mismatch(theta, vmag);
    double fnorm = w.n_eq > 0 ? f.lpNorm<Eigen::Infinity>() : 0.0;

    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    bool analyzed = false;

    int iter = 0;
    while (fnorm > options.tolerance && iter < options.max_iterations) {
        // polar Jacobian of the scheduled-power mismatch
        Eigen::VectorXd p, q;
        calc_power(theta, vmag, p, q);
        std::vector<Eigen::Triplet<double>> jt;
        jt.reserve(yb.nonZeros() * 4);
        for (int col = 0; col < yb.outerSize(); ++col) {
            for (SparseComplexMatrix::InnerIterator it(yb, col); it; ++it) {
                const int i = static_cast<int>(it.row());
                const int k = static_cast<int>(it.col());
                const double g = it.value().real(), b = it.value().imag();
                double dp_dth, dq_dth, dp_dv, dq_dv;
                if (i == k) {
                    dp_dth = -q[i] - b * vmag[i] * vmag[i];
                    dq_dth = p[i] - g * vmag[i] * vmag[i];
                    dp_dv = p[i] / vmag[i] + g * vmag[i];
                    dq_dv = q[i] / vmag[i] - b * vmag[i];
                } else {
                    const double tik = theta[i] - theta[k];
                    const double ct = std::cos(tik), st = std::sin(tik);
                    dp_dth = vmag[i] * vmag[k] * (g * st - b * ct);
                    dq_dth = -vmag[i] * vmag[k] * (g * ct + b * st);
                    dp_dv = vmag[i] * (g * ct + b * st);
                    dq_dv = vmag[i] * (g * st - b * ct);
                }
                // mismatch = sched - calc, so rows carry -d(calc)
                if (w.theta_eq[i] >= 0 && w.theta_eq[k] >= 0)
                    jt.emplace_back(w.theta_eq[i], w.theta_eq[k], -dp_dth);
                if (w.theta_eq[i] >= 0 && w.vmag_eq[k] >= 0)
                    jt.emplace_back(w.theta_eq[i], w.vmag_eq[k], -dp_dv);
                if (w.vmag_eq[i] >= 0 && w.theta_eq[k] >= 0)
                    jt.emplace_back(w.vmag_eq[i], w.theta_eq[k], -dq_dth);
                if (w.vmag_eq[i] >= 0 && w.vmag_eq[k] >= 0)
                    jt.emplace_back(w.vmag_eq[i], w.vmag_eq[k], -dq_dv);
            }
        }
        Eigen::SparseMatrix<double> jac(w.n_eq, w.n_eq);
        jac.setFromTriplets(jt.begin(), jt.end());
        jac.makeCompressed();
        if (!analyzed) {
            lu.analyzePattern(jac);
            analyzed = true;
        }
        lu.factorize(jac);
        if (lu.info() != Eigen::Success) {
            result.note = "singular Jacobian";
            break;
        }
        Eigen::VectorXd dx = lu.solve(-f);

        // backtracking on the mismatch norm
        double step = 1.0;
        Eigen::VectorXd theta_new, vmag_new, f_new;
        double fnorm_new = fnorm;
        for (int bt = 0; bt < 12; ++bt) {
            theta_new = theta;
            vmag_new = vmag;
            for (int i = 0; i < m; ++i) {
                if (w.theta_eq[i] >= 0) theta_new[i] += step * dx[w.theta_eq[i]];
                if (w.vmag_eq[i] >= 0)
                    vmag_new[i] = std::max(1e-4, vmag_new[i] + step * dx[w.vmag_eq[i]]);
            }
            f_new = mismatch(theta_new, vmag_new);
            fnorm_new = f_new.lpNorm<Eigen::Infinity>();
            if (fnorm_new < fnorm || fnorm < options.tolerance) break;
            step *= 0.5;
        }
        if (fnorm_new >= fnorm) {
            result.note = "stalled: Newton step does not reduce the mismatch";
            break;
        }
        theta = theta_new;
        vmag = vmag_new;
        f = f_new;
        fnorm = fnorm_new;
        ++iter;
    }

    result.iterations = iter;
    result.max_mismatch = fnorm;
    result.converged = fnorm <= options.tolerance;

    // recover the full rectangular state; de-energized buses stay at zero
    SystemState st = make_zero_state(network);
    Eigen::VectorXcd v(m);
    for (int i = 0; i < m; ++i) v[i] = std::polar(vmag[i], theta[i]);
    for (int i = 0; i < m; ++i) st.v[w.bus_of[i]] = v[i];

    Eigen::VectorXcd inj = yb * v;
    for (int i = 0; i < m; ++i) {
        const int b = w.bus_of[i];
        const Demand* d = network.demand_at(b);
        if (d != nullptr && std::abs(st.v[b]) > 1e-9)
            st.i_l[b] = std::conj(Complex{d->p0, d->q0} / st.v[b]);
        if (network.machine_at(b) != nullptr) st.i_g[b] = inj[i] + st.i_l[b];
    }
    const SparseComplexMatrix yf = build_branch_admittance(network);
    Eigen::VectorXcd vfull(network.num_buses());
    for (int b = 0; b < network.num_buses(); ++b) vfull[b] = st.v[b];
    Eigen::VectorXcd flows = yf * vfull;
    for (int k = 0; k < network.num_branches(); ++k) {
        st.i_f_from[k] = flows[2 * k];
        st.i_f_to[k] = flows[2 * k + 1];
    }
    result.state = std::move(st);
    return result;
}

ReferencePoint compute_reference(const Network& network, ReferenceKind kind,
                                 const PowerFlowOptions& options) {
    PowerFlowResult pf = solve_power_flow(network, options);
    ReferencePoint ref;
    ref.state = std::move(pf.state);
    ref.kind = kind;
    ref.converged = pf.converged;
    ref.max_residual = pf.max_mismatch;
    ref.iterations = pf.iterations;
    return ref;
}

}  // namespace gridrelief
