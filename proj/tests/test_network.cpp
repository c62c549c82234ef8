#include <catch2/catch_amalgamated.hpp>

#include "fidvr/network.hpp"

using namespace fidvr;
using Catch::Approx;

namespace {

FeederNetwork two_bus(Complex branch_z = {0.01, 0.02}, double shunt_b = 0.0) {
    FeederNetwork net;
    net.buses = {{1, 4.8, true}, {2, 4.8, false}};
    net.branches = {{1, 2, branch_z, shunt_b}};
    net.source = {{1.0, 0.0}, {0.0, 0.1}};
    net.base_mva = 1.0;
    return net;
}

}  // namespace

TEST_CASE("admittance matrix from a single branch") {
    auto net = two_bus();
    auto y = build_admittance_matrix(net);
    // 1/(0.01+j0.02) = 20 - j40
    CHECK(y(0, 1).real() == Approx(-20.0).epsilon(1e-12));
    CHECK(y(0, 1).imag() == Approx(40.0).epsilon(1e-12));
    CHECK(y(1, 0) == y(0, 1));
    CHECK(y(0, 0) == -y(0, 1));
}

TEST_CASE("admittance matrix with no branches is zero") {
    FeederNetwork net;
    net.buses = {{1, 4.8, true}};
    auto y = build_admittance_matrix(net);
    REQUIRE(y.rows() == 1);
    CHECK(y(0, 0) == Complex(0.0, 0.0));
}

TEST_CASE("parallel identical branches double the off-diagonal") {
    FeederNetwork net = two_bus();
    net.branches.push_back(net.branches.front());
    // not a valid radial network, but admittance assembly is purely additive
    auto y = build_admittance_matrix(net);
    CHECK(y(0, 1).real() == Approx(-40.0));
    CHECK(y(0, 1).imag() == Approx(80.0));
}

TEST_CASE("admittance matrix is symmetric on a chain") {
    FeederNetwork net;
    net.buses = {{1, 4.8, true}, {2, 4.8, false}, {3, 4.8, false}};
    net.branches = {{1, 2, {0.01, 0.03}, 1e-4}, {2, 3, {0.02, 0.01}, 0.0}};
    auto y = build_admittance_matrix(net);
    CHECK((y - y.transpose()).cwiseAbs().maxCoeff() == 0.0);
    // shunt halves land on both branch ends
    CHECK((y(0, 0) + y(0, 1)).imag() == Approx(0.5e-4));
}

TEST_CASE("zero-impedance branch is rejected") {
    auto net = two_bus({0.0, 0.0});
    CHECK_THROWS_AS(build_admittance_matrix(net), InputError);
    CHECK_THROWS_AS(validate_network(net), InputError);
}

TEST_CASE("validation enforces radiality and the single source") {
    auto net = two_bus();
    CHECK_NOTHROW(validate_network(net));

    SECTION("branch count must be bus count minus one") {
        net.branches.push_back({1, 2, {0.01, 0.01}, 0.0});
        CHECK_THROWS_AS(validate_network(net), InputError);
    }
    SECTION("exactly one source") {
        net.buses[1].is_source = true;
        CHECK_THROWS_AS(validate_network(net), InputError);
    }
    SECTION("duplicate bus ids") {
        net.buses[1].id = 1;
        CHECK_THROWS_AS(validate_network(net), InputError);
    }
    SECTION("disconnected bus") {
        net.buses.push_back({3, 4.8, false});
        net.branches.push_back({3, 4, {0.01, 0.01}, 0.0});  // unknown endpoint
        CHECK_THROWS_AS(validate_network(net), InputError);
    }
    SECTION("emf magnitude window") {
        net.source.emf = {1.2, 0.0};
        CHECK_THROWS_AS(validate_network(net), InputError);
    }
}

TEST_CASE("stall admittance is the complex reciprocal") {
    SECTION("r = x = 0.1 gives G = B = 5") {
        Complex y = stall_admittance(0.1, 0.1);
        CHECK(y.real() == Approx(5.0));
        CHECK(inductive_susceptance(y) == Approx(5.0));
    }
    SECTION("area A5 values") {
        // oracle: 1/(0.072 + j0.091), |z|^2 = 0.013465
        Complex y = stall_admittance(0.072, 0.091);
        CHECK(y.real() == Approx(0.072 / 0.013465).epsilon(1e-9));
        CHECK(inductive_susceptance(y) == Approx(0.091 / 0.013465).epsilon(1e-9));
        CHECK(y.real() == Approx(5.347).epsilon(1e-3));
        CHECK(inductive_susceptance(y) == Approx(6.758).epsilon(1e-3));
    }
    SECTION("resistive limit") {
        Complex y = stall_admittance(1.0, 1e-12);
        CHECK(y.real() == Approx(1.0));
        CHECK(inductive_susceptance(y) == Approx(0.0).margin(1e-9));
    }
    SECTION("non-positive inputs rejected") {
        CHECK_THROWS_AS(stall_admittance(0.0, 0.1), InputError);
        CHECK_THROWS_AS(stall_admittance(0.1, -0.1), InputError);
    }
}

TEST_CASE("tree order walks from the source") {
    FeederNetwork net;
    net.buses = {{10, 4.8, false}, {20, 4.8, true}, {30, 4.8, false}};
    net.branches = {{20, 10, {0.01, 0.01}, 0.0}, {10, 30, {0.01, 0.01}, 0.0}};
    auto order = tree_order(net);
    CHECK(order.parent[1] == -1);
    CHECK(order.parent[0] == 1);
    CHECK(order.parent[2] == 0);
    CHECK(order.bfs_order.front() == 1);
}
