#include "gridrelief/network.hpp"

#include <cmath>
#include <queue>

namespace gridrelief {

namespace {

bool finite(const Complex& c) { return std::isfinite(c.real()) && std::isfinite(c.imag()); }

}  // namespace

Network::Network(std::vector<Bus> buses, std::vector<Branch> branches,
                 std::vector<Machine> machines, std::vector<Demand> demands,
                 double base_mva)
    : buses_(std::move(buses)),
      branches_(std::move(branches)),
      machines_(std::move(machines)),
      demands_(std::move(demands)),
      base_mva_(base_mva) {
    if (base_mva_ <= 0.0) throw DataError("base MVA must be positive");

    bus_index_.reserve(buses_.size());
    for (int i = 0; i < static_cast<int>(buses_.size()); ++i) {
        const Bus& b = buses_[i];
        if (bus_index_.count(b.id))
            throw StructuralError("duplicate bus id " + std::to_string(b.id));
        if (!(b.vmin > 0.0 && b.vmin <= b.vmax))
            throw DataError("bus " + std::to_string(b.id) + ": need 0 < vmin <= vmax");
        if (!finite(b.shunt)) throw DataError("bus " + std::to_string(b.id) + ": non-finite shunt");
        bus_index_[b.id] = i;
    }

    for (const Branch& br : branches_) {
        if (!bus_index_.count(br.from_bus) || !bus_index_.count(br.to_bus))
            throw StructuralError("branch " + std::to_string(br.id) + ": dangling bus reference");
        if (br.from_bus == br.to_bus)
            throw StructuralError("branch " + std::to_string(br.id) + ": from == to");
        if (!finite(br.series_impedance) || std::abs(br.series_impedance) <= 0.0)
            throw DataError("branch " + std::to_string(br.id) + ": zero series impedance");
        if (!(br.imax > 0.0))
            throw DataError("branch " + std::to_string(br.id) + ": non-positive current rating");
        if (!(br.tap_ratio > 0.0))
            throw DataError("branch " + std::to_string(br.id) + ": non-positive tap ratio");
    }

    machine_of_bus_.assign(buses_.size(), -1);
    for (int m = 0; m < static_cast<int>(machines_.size()); ++m) {
        const Machine& g = machines_[m];
        int bi = bus_index(g.bus);
        if (machine_of_bus_[bi] != -1)
            throw StructuralError("bus " + std::to_string(g.bus) +
                                  ": multiple machines (aggregate at ingestion)");
        if (g.pmin > g.pmax || g.qmin > g.qmax)
            throw DataError("machine at bus " + std::to_string(g.bus) + ": inverted limits");
        if (g.p0 < g.pmin - 1e-9 || g.p0 > g.pmax + 1e-9)
            throw DataError("machine at bus " + std::to_string(g.bus) +
                            ": schedule outside [pmin, pmax]");
        machine_of_bus_[bi] = m;
    }

    demand_of_bus_.assign(buses_.size(), -1);
    for (int d = 0; d < static_cast<int>(demands_.size()); ++d) {
        const Demand& l = demands_[d];
        int bi = bus_index(l.bus);
        if (demand_of_bus_[bi] != -1)
            throw StructuralError("bus " + std::to_string(l.bus) +
                                  ": multiple demands (aggregate at ingestion)");
        demand_of_bus_[bi] = d;
    }
}

int Network::bus_index(int bus_id) const {
    auto it = bus_index_.find(bus_id);
    if (it == bus_index_.end())
        throw StructuralError("unknown bus id " + std::to_string(bus_id));
    return it->second;
}

const Machine* Network::machine_at(int bus_idx) const {
    int m = machine_of_bus_.at(bus_idx);
    return m >= 0 ? &machines_[m] : nullptr;
}

const Demand* Network::demand_at(int bus_idx) const {
    int d = demand_of_bus_.at(bus_idx);
    return d >= 0 ? &demands_[d] : nullptr;
}

int Network::slack_index() const {
    int found = -1;
    for (int i = 0; i < num_buses(); ++i) {
        if (buses_[i].is_slack) {
            if (found != -1) throw StructuralError("multiple slack buses");
            found = i;
        }
    }
    if (found == -1) throw StructuralError("no slack bus");
    return found;
}

SystemState make_zero_state(const Network& network) {
    SystemState s;
    s.v.assign(network.num_buses(), Complex{0, 0});
    s.i_g.assign(network.num_buses(), Complex{0, 0});
    s.i_l.assign(network.num_buses(), Complex{0, 0});
    s.i_f_from.assign(network.num_branches(), Complex{0, 0});
    s.i_f_to.assign(network.num_branches(), Complex{0, 0});
    return s;
}

namespace {

struct BranchStamp {
    Complex yff, yft, ytf, ytt;
};

// Standard pi-model stamp with off-nominal tap and phase shift.
BranchStamp stamp(const Branch& br) {
    const Complex y = Complex{1.0, 0.0} / br.series_impedance;
    const Complex ysh{0.0, br.total_shunt_susceptance / 2.0};
    const double tau = br.tap_ratio;
    const Complex shift = std::polar(1.0, br.phase_shift);
    BranchStamp s;
    s.yff = (y + ysh) / (tau * tau);
    s.ytt = y + ysh;
    s.yft = -y / (tau * std::conj(shift));
    s.ytf = -y / (tau * shift);
    return s;
}

}  // namespace

SparseComplexMatrix build_bus_admittance(const Network& network) {
    const int n = network.num_buses();
    std::vector<Eigen::Triplet<Complex>> trip;
    trip.reserve(network.num_branches() * 4 + n);
    for (const Branch& br : network.branches()) {
        if (!br.in_service) continue;
        const BranchStamp s = stamp(br);
        const int f = network.bus_index(br.from_bus);
        const int t = network.bus_index(br.to_bus);
        trip.emplace_back(f, f, s.yff);
        trip.emplace_back(t, t, s.ytt);
        trip.emplace_back(f, t, s.yft);
        trip.emplace_back(t, f, s.ytf);
    }
    for (int i = 0; i < n; ++i) {
        const Complex sh = network.buses()[i].shunt;
        if (sh != Complex{0, 0}) trip.emplace_back(i, i, sh);
    }
    SparseComplexMatrix y(n, n);
    y.setFromTriplets(trip.begin(), trip.end());
    return y;
}

SparseComplexMatrix build_branch_admittance(const Network& network) {
    const int n = network.num_buses();
    const int e = network.num_branches();
    std::vector<Eigen::Triplet<Complex>> trip;
    trip.reserve(e * 4);
    for (int k = 0; k < e; ++k) {
        const Branch& br = network.branches()[k];
        if (!br.in_service) continue;  // zero rows: branch carries nothing
        const BranchStamp s = stamp(br);
        const int f = network.bus_index(br.from_bus);
        const int t = network.bus_index(br.to_bus);
        trip.emplace_back(2 * k, f, s.yff);
        trip.emplace_back(2 * k, t, s.yft);
        trip.emplace_back(2 * k + 1, f, s.ytf);
        trip.emplace_back(2 * k + 1, t, s.ytt);
    }
    SparseComplexMatrix y(2 * e, n);
    y.setFromTriplets(trip.begin(), trip.end());
    return y;
}

Network apply_bus_contingency(const Network& network, int bus_id) {
    network.bus_index(bus_id);  // validates the id
    std::vector<Branch> branches = network.branches();
    for (Branch& br : branches) {
        if (br.from_bus == bus_id || br.to_bus == bus_id) br.in_service = false;
    }
    return Network(network.buses(), std::move(branches), network.machines(),
                   network.demands(), network.base_mva());
}

Network apply_branch_contingency(const Network& network, const std::vector<int>& branch_indices) {
    std::vector<Branch> branches = network.branches();
    for (int k : branch_indices) {
        if (k < 0 || k >= static_cast<int>(branches.size()))
            throw StructuralError("branch index " + std::to_string(k) + " out of range");
        branches[k].in_service = false;
    }
    return Network(network.buses(), std::move(branches), network.machines(),
                   network.demands(), network.base_mva());
}

Network scale_demands(const Network& network, double factor) {
    if (!(factor > 0.0)) throw DataError("demand scale factor must be positive");
    std::vector<Demand> demands = network.demands();
    for (Demand& d : demands) {
        d.p0 *= factor;
        d.q0 *= factor;
    }
    return Network(network.buses(), network.branches(), network.machines(),
                   std::move(demands), network.base_mva());
}

std::vector<std::vector<int>> connected_components(const Network& network) {
    const int n = network.num_buses();
    std::vector<std::vector<int>> adj(n);
    for (const Branch& br : network.branches()) {
        if (!br.in_service) continue;
        int f = network.bus_index(br.from_bus);
        int t = network.bus_index(br.to_bus);
        adj[f].push_back(t);
        adj[t].push_back(f);
    }
    std::vector<int> comp(n, -1);
    std::vector<std::vector<int>> out;
    for (int start = 0; start < n; ++start) {
        if (comp[start] != -1) continue;
        int id = static_cast<int>(out.size());
        out.emplace_back();
        std::queue<int> q;
        q.push(start);
        comp[start] = id;
        while (!q.empty()) {
            int u = q.front();
            q.pop();
            out[id].push_back(network.buses()[u].id);
            for (int w : adj[u]) {
                if (comp[w] == -1) {
                    comp[w] = id;
                    q.push(w);
                }
            }
        }
    }
    return out;
}

std::vector<bool> energized_mask(const Network& network) {
    const int n = network.num_buses();
    std::vector<bool> mask(n, false);
    auto comps = connected_components(network);
    for (const auto& comp : comps) {
        bool has_slack = false;
        for (int id : comp) {
            if (network.buses()[network.bus_index(id)].is_slack) has_slack = true;
        }
        if (has_slack) {
            for (int id : comp) mask[network.bus_index(id)] = true;
        }
    }
    return mask;
}

Network zero_islanded_devices(const Network& network) {
    auto mask = energized_mask(network);
    std::vector<Machine> machines = network.machines();
    std::vector<Demand> demands = network.demands();
    for (Machine& g : machines) {
        if (!mask[network.bus_index(g.bus)]) {
            g.pmin = g.pmax = g.qmin = g.qmax = 0.0;
            g.p0 = g.q0 = 0.0;
        }
    }
    for (Demand& d : demands) {
        if (!mask[network.bus_index(d.bus)]) {
            d.p0 = d.q0 = 0.0;
        }
    }
    return Network(network.buses(), network.branches(), std::move(machines),
                   std::move(demands), network.base_mva());
}

}  // namespace gridrelief
