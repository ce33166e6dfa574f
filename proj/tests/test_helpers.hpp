#pragma once

#include <random>
#include <string>

#include "gridrelief/case_io.hpp"
#include "gridrelief/network.hpp"

namespace gridrelief::testing {

inline std::string data_path(const std::string& name) {
    return std::string(GRIDRELIEF_DATA_DIR) + "/" + name;
}

inline Network load_rts96() {
    return parse_matpower_case(read_text_file(data_path("case24_rts96.m")));
}

/// Two buses joined by z = 0.1 + 0.1j, machine at the slack, load opposite.
inline Network two_bus_network(double load_p = 0.5, double load_q = 0.1) {
    std::vector<Bus> buses{{1, 0.9, 1.1, true, {0, 0}}, {2, 0.9, 1.1, false, {0, 0}}};
    std::vector<Branch> branches{{0, 1, 2, {0.1, 0.1}, 0.0, 1.0, 0.0, 2.0, true}};
    std::vector<Machine> machines{{1, 0.0, 2.0, -1.0, 1.0, load_p, load_q, 10.0, 1.0, 1.0}};
    std::vector<Demand> demands{{2, load_p, load_q, true, 1000.0, 100.0}};
    return Network(std::move(buses), std::move(branches), std::move(machines),
                   std::move(demands), 100.0);
}

/// Lossless series line, no shunt, no load; the trivial flat fixed point.
inline Network two_bus_lossless() {
    std::vector<Bus> buses{{1, 0.9, 1.1, true, {0, 0}}, {2, 0.9, 1.1, false, {0, 0}}};
    std::vector<Branch> branches{{0, 1, 2, {0.0, 0.1}, 0.0, 1.0, 0.0, 2.0, true}};
    return Network(std::move(buses), std::move(branches), {}, {}, 100.0);
}

inline std::mt19937& rng() {
    static std::mt19937 gen(20240817u);
    return gen;
}

}  // namespace gridrelief::testing
