#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "gridrelief/powerflow.hpp"
#include "test_helpers.hpp"

using namespace gridrelief;
using gridrelief::testing::load_rts96;
using gridrelief::testing::two_bus_lossless;
using gridrelief::testing::two_bus_network;

TEST_CASE("power conversion from rectangular voltage and current") {
    auto [p, q] = power_from_iv({1.0, 0.0}, {0.5, 0.0});
    CHECK(p == 0.5);
    CHECK(q == 0.0);

    auto [p0, q0] = power_from_iv({0.0, 0.0}, {3.0, -2.0});
    CHECK(p0 == 0.0);
    CHECK(q0 == 0.0);

    // matches the complex product v * conj(i)
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
        const Complex v{u(testing::rng()), u(testing::rng())};
        const Complex i{u(testing::rng()), u(testing::rng())};
        const Complex s = v * std::conj(i);
        auto [pp, qq] = power_from_iv(v, i);
        CHECK(pp == doctest::Approx(s.real()).epsilon(1e-14));
        CHECK(qq == doctest::Approx(s.imag()).epsilon(1e-14));
    }
}

TEST_CASE("lossless line with no load converges immediately to the flat state") {
    const PowerFlowResult r = solve_power_flow(two_bus_lossless());
    CHECK(r.converged);
    CHECK(r.iterations <= 1);
    CHECK(std::abs(r.state.v[0] - Complex{1.0, 0.0}) < 1e-12);
    CHECK(std::abs(r.state.v[1] - Complex{1.0, 0.0}) < 1e-12);
}

TEST_CASE("two-bus load case solves and carries consistent currents") {
    const Network net = two_bus_network(0.5, 0.1);
    const PowerFlowResult r = solve_power_flow(net);
    REQUIRE(r.converged);
    // load bus holds its scheduled consumption
    auto [p, q] = power_from_iv(r.state.v[1], r.state.i_l[1]);
    CHECK(p == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(q == doctest::Approx(0.1).epsilon(1e-9));
    CHECK(max_abs(injection_residual(net, r.state)) < 1e-9);
    // slack angle is exactly zero
    CHECK(r.state.v[0].imag() == 0.0);
}

TEST_CASE("RTS96 at 1.15 load converges tightly from a flat start") {
    const Network net = scale_demands(load_rts96(), 1.15);
    const PowerFlowResult r = solve_power_flow(net);
    REQUIRE(r.converged);
    CHECK(r.iterations <= 10);
    CHECK(r.max_mismatch <= 1e-8);
    // independent flow-consistency recheck
    CHECK(max_abs(injection_residual(net, r.state)) <= 1e-8);
    const int slack = net.slack_index();
    CHECK(r.state.v[slack].imag() == 0.0);

    SUBCASE("machine buses hold their setpoint magnitudes") {
        for (int b = 0; b < net.num_buses(); ++b) {
            const Machine* g = net.machine_at(b);
            if (g == nullptr) continue;
            CHECK(std::abs(r.state.v[b]) == doctest::Approx(g->v_setpoint).epsilon(1e-9));
        }
    }
    SUBCASE("PQ buses hold scheduled consumption") {
        for (int b = 0; b < net.num_buses(); ++b) {
            if (net.machine_at(b) != nullptr) continue;
            const Demand* d = net.demand_at(b);
            if (d == nullptr) continue;
            auto [p, q] = power_from_iv(r.state.v[b], r.state.i_l[b]);
            CHECK(p == doctest::Approx(d->p0).epsilon(1e-9));
            CHECK(q == doctest::Approx(d->q0).epsilon(1e-9));
        }
    }
}

TEST_CASE("post-contingency flow still solves with the island at zero") {
    const Network post = zero_islanded_devices(
        apply_bus_contingency(scale_demands(load_rts96(), 1.15), 24));
    const PowerFlowResult r = solve_power_flow(post);
    REQUIRE(r.converged);
    CHECK(std::abs(r.state.v[post.bus_index(24)]) == 0.0);
    CHECK(std::abs(r.state.i_f_from[6]) == 0.0);  // 3-24 switched out
    CHECK(max_abs(injection_residual(post, r.state)) <= 1e-8);
}

TEST_CASE("injection residual is the universal consistency check") {
    const Network net = two_bus_network();
    const PowerFlowResult r = solve_power_flow(net);
    REQUIRE(r.converged);

    SUBCASE("perturbing one machine current moves the residual by exactly that amount") {
        SystemState s = r.state;
        s.i_g[0] += Complex{0.1, 0.0};
        const auto res = injection_residual(net, s);
        CHECK(std::abs(res[0] - Complex{0.1, 0.0}) < 1e-9);
    }
    SUBCASE("the all-zero state has zero residual") {
        const SystemState zero = make_zero_state(net);
        CHECK(max_abs(injection_residual(net, zero)) == 0.0);
    }
}

TEST_CASE("reference point computation") {
    const Network net = scale_demands(load_rts96(), 1.15);

    const ReferencePoint pre = compute_reference(net, ReferenceKind::Pre);
    CHECK(pre.converged);
    CHECK(pre.kind == ReferenceKind::Pre);
    CHECK(pre.max_residual <= 1e-8);

    SUBCASE("post with no contingency equals pre") {
        const ReferencePoint post = compute_reference(net, ReferenceKind::Post);
        for (int b = 0; b < net.num_buses(); ++b)
            CHECK(std::abs(post.state.v[b] - pre.state.v[b]) < 1e-12);
    }
}

TEST_CASE("non-convergence is reported, not thrown") {
    // a hopeless operating point: twenty times the load
    const Network net = scale_demands(load_rts96(), 20.0);
    const PowerFlowResult r = solve_power_flow(net);
    CHECK(!r.converged);
    CHECK(r.max_mismatch > 0.0);
}

TEST_CASE("option validation") {
    CHECK_THROWS_AS(solve_power_flow(two_bus_lossless(), PowerFlowOptions{-1.0, 10, true}),
                    DataError);
    CHECK_THROWS_AS(solve_power_flow(two_bus_lossless(), PowerFlowOptions{1e-8, 0, true}),
                    DataError);
}

TEST_CASE("a network without a slack in the energized component is rejected") {
    std::vector<Bus> buses{{1, 0.9, 1.1, false, {0, 0}}, {2, 0.9, 1.1, false, {0, 0}}};
    std::vector<Branch> branches{{0, 1, 2, {0.1, 0.1}, 0.0, 1.0, 0.0, 2.0, true}};
    const Network net(buses, branches, {}, {}, 100.0);
    CHECK_THROWS_AS(solve_power_flow(net), StructuralError);
}
