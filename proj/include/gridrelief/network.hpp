#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/SparseCore>

namespace gridrelief {

using Complex = std::complex<double>;
using SparseComplexMatrix = Eigen::SparseMatrix<Complex>;

/// Malformed network topology (dangling references, missing slack, ...).
struct StructuralError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Physically meaningless data (zero impedance, non-positive rating, ...).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Bus {
    int id = 0;
    double vmin = 0.9;  // p.u. voltage magnitude lower bound
    double vmax = 1.1;  // p.u. voltage magnitude upper bound
    bool is_slack = false;
    Complex shunt{0.0, 0.0};  // fixed bus shunt admittance, p.u.
};

struct Branch {
    int id = 0;
    int from_bus = 0;
    int to_bus = 0;
    Complex series_impedance{0.0, 0.0};  // p.u.
    double total_shunt_susceptance = 0.0;  // full line charging, p.u.
    double tap_ratio = 1.0;
    double phase_shift = 0.0;  // radians
    double imax = 0.0;  // current magnitude rating, p.u.
    bool in_service = true;
};

struct Machine {
    int bus = 0;
    double pmin = 0.0, pmax = 0.0;  // p.u.
    double qmin = 0.0, qmax = 0.0;
    double p0 = 0.0, q0 = 0.0;  // scheduled output
    double cost_p = 0.0, cost_q = 0.0;  // redispatch cost coefficients
    double v_setpoint = 1.0;  // held voltage magnitude when dispatched
};

struct Demand {
    int bus = 0;
    double p0 = 0.0, q0 = 0.0;  // nominal consumption, p.u.
    bool sheddable = true;
    double cost_shed_p = 0.0, cost_shed_q = 0.0;
};

/// Immutable grid description. Construction validates all cross references
/// and data invariants; transformation helpers return fresh copies.
class Network {
  public:
    Network() = default;
    Network(std::vector<Bus> buses, std::vector<Branch> branches,
            std::vector<Machine> machines, std::vector<Demand> demands,
            double base_mva);

    const std::vector<Bus>& buses() const { return buses_; }
    const std::vector<Branch>& branches() const { return branches_; }
    const std::vector<Machine>& machines() const { return machines_; }
    const std::vector<Demand>& demands() const { return demands_; }
    double base_mva() const { return base_mva_; }

    int num_buses() const { return static_cast<int>(buses_.size()); }
    int num_branches() const { return static_cast<int>(branches_.size()); }

    /// Position of a bus id in buses(); throws StructuralError if unknown.
    int bus_index(int bus_id) const;
    bool has_bus(int bus_id) const { return bus_index_.count(bus_id) > 0; }

    /// Machine/Demand attached at a bus index, nullptr if none.
    const Machine* machine_at(int bus_idx) const;
    const Demand* demand_at(int bus_idx) const;
    int machine_index_at(int bus_idx) const { return machine_of_bus_[bus_idx]; }
    int demand_index_at(int bus_idx) const { return demand_of_bus_[bus_idx]; }

    /// Index of the unique slack bus; throws if absent or ambiguous.
    int slack_index() const;

  private:
    std::vector<Bus> buses_;
    std::vector<Branch> branches_;
    std::vector<Machine> machines_;
    std::vector<Demand> demands_;
    double base_mva_ = 100.0;
    std::unordered_map<int, int> bus_index_;
    std::vector<int> machine_of_bus_;  // -1 if none
    std::vector<int> demand_of_bus_;
};

/// Rectangular voltages and currents for every bus and branch end.
/// i_g/i_l are zero at buses without a machine/demand.
struct SystemState {
    std::vector<Complex> v;
    std::vector<Complex> i_g;
    std::vector<Complex> i_l;
    std::vector<Complex> i_f_from;
    std::vector<Complex> i_f_to;
};

SystemState make_zero_state(const Network& network);

/// Bus admittance matrix from the standard pi model plus bus shunts.
/// Out-of-service branches contribute nothing.
SparseComplexMatrix build_bus_admittance(const Network& network);

/// Branch admittance matrix, 2|E| x |B|. Row 2k maps voltages to the
/// from-side current of branch k, row 2k+1 to the to-side current.
SparseComplexMatrix build_branch_admittance(const Network& network);

/// Copy of the network with every branch incident to `bus_id` switched out.
Network apply_bus_contingency(const Network& network, int bus_id);

/// Copy with the listed branch positions switched out.
Network apply_branch_contingency(const Network& network, const std::vector<int>& branch_indices);

/// Copy with every demand scaled by `factor` (> 0). Machine schedules untouched.
Network scale_demands(const Network& network, double factor);

/// Partition of bus ids induced by in-service branches.
std::vector<std::vector<int>> connected_components(const Network& network);

/// true per bus index when the bus is connected to a slack bus through
/// in-service branches.
std::vector<bool> energized_mask(const Network& network);

/// Copy with machines and demands on de-energized buses zeroed out
/// (schedules and limits set to zero). A dead island serves nothing.
Network zero_islanded_devices(const Network& network);

}  // namespace gridrelief
