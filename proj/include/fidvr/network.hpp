#pragma once

// Static network data model for a radial distribution feeder fed from a
// Thevenin substation equivalent, plus nodal admittance assembly and a few
// tree utilities shared by the simulator and the sensitivity engine.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <queue>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "fidvr/types.hpp"

namespace fidvr {

struct Bus {
    int id = 0;
    double base_kv = 1.0;
    bool is_source = false;
};

struct Branch {
    int from = 0;
    int to = 0;
    Complex impedance{0.0, 0.0};  // series R + jX, p.u.
    double shunt_b = 0.0;         // total line charging susceptance, p.u.
};

/// Substation equivalent: an EMF behind an impedance.  The EMF node itself is
/// not part of the bus list; it couples to the unique source bus.
struct TheveninSource {
    Complex emf{1.0, 0.0};
    Complex impedance{0.0, 1e-4};
};

struct FeederNetwork {
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    TheveninSource source;
    double base_mva = 1.0;

    std::size_t size() const { return buses.size(); }
};

/// Dense per-id lookup built once per network.
inline std::unordered_map<int, int> bus_index_map(const FeederNetwork& net) {
    std::unordered_map<int, int> map;
    map.reserve(net.buses.size());
    for (std::size_t i = 0; i < net.buses.size(); ++i)
        map.emplace(net.buses[i].id, static_cast<int>(i));
    return map;
}

inline int source_bus_index(const FeederNetwork& net) {
    for (std::size_t i = 0; i < net.buses.size(); ++i)
        if (net.buses[i].is_source) return static_cast<int>(i);
    throw InputError("network has no source bus");
}

/// Validates ids, the single-source rule, branch impedances, radiality and
/// connectivity.  Throws InputError with the offending element named.
inline void validate_network(const FeederNetwork& net) {
    if (net.buses.empty()) throw InputError("network has no buses");
    if (net.base_mva <= 0.0) throw InputError("base_mva must be positive");

    std::unordered_map<int, int> index;
    int sources = 0;
    for (std::size_t i = 0; i < net.buses.size(); ++i) {
        const Bus& b = net.buses[i];
        if (!index.emplace(b.id, static_cast<int>(i)).second)
            throw InputError("duplicate bus id " + std::to_string(b.id));
        if (b.is_source) ++sources;
    }
    if (sources != 1)
        throw InputError("network must have exactly one source bus, found " +
                         std::to_string(sources));

    const double emf = std::abs(net.source.emf);
    if (emf < 0.9 || emf > 1.1)
        throw InputError("thevenin emf magnitude " + std::to_string(emf) +
                         " outside [0.9, 1.1]");

    if (net.branches.size() + 1 != net.buses.size())
        throw InputError("network is not radial: " + std::to_string(net.branches.size()) +
                         " branches for " + std::to_string(net.buses.size()) + " buses");

    std::vector<std::vector<int>> adj(net.buses.size());
    for (const Branch& br : net.branches) {
        if (std::abs(br.impedance) <= 0.0)
            throw InputError("zero-impedance branch " + std::to_string(br.from) + "-" +
                             std::to_string(br.to));
        auto fi = index.find(br.from);
        auto ti = index.find(br.to);
        if (fi == index.end() || ti == index.end())
            throw InputError("branch " + std::to_string(br.from) + "-" +
                             std::to_string(br.to) + " references unknown bus");
        adj[fi->second].push_back(ti->second);
        adj[ti->second].push_back(fi->second);
    }

    // connectivity from the source; with n-1 branches this also rules out cycles
    std::vector<char> seen(net.buses.size(), 0);
    std::queue<int> work;
    work.push(source_bus_index(net));
    seen[static_cast<std::size_t>(work.front())] = 1;
    std::size_t reached = 1;
    while (!work.empty()) {
        int u = work.front();
        work.pop();
        for (int v : adj[static_cast<std::size_t>(u)]) {
            if (!seen[static_cast<std::size_t>(v)]) {
                seen[static_cast<std::size_t>(v)] = 1;
                ++reached;
                work.push(v);
            }
        }
    }
    if (reached != net.buses.size())
        throw InputError("network is not connected: reached " + std::to_string(reached) +
                         " of " + std::to_string(net.buses.size()) + " buses");
}

/// Nodal admittance matrix of the branch network only (no source admittance,
/// no loads).  Line charging is split half to each branch end.
inline Eigen::MatrixXcd build_admittance_matrix(const FeederNetwork& net) {
    const auto index = bus_index_map(net);
    const auto n = static_cast<Eigen::Index>(net.buses.size());
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
    for (const Branch& br : net.branches) {
        if (std::abs(br.impedance) <= 0.0)
            throw InputError("zero-impedance branch " + std::to_string(br.from) + "-" +
                             std::to_string(br.to));
        const int i = index.at(br.from);
        const int j = index.at(br.to);
        const Complex ys = 1.0 / br.impedance;
        const Complex ysh(0.0, br.shunt_b / 2.0);
        y(i, j) -= ys;
        y(j, i) -= ys;
        y(i, i) += ys + ysh;
        y(j, j) += ys + ysh;
    }
    return y;
}

/// Stalled single-phase motor admittance Y = 1/(r + jx) = G - jB with
/// G = r/(r^2+x^2), B = x/(r^2+x^2).  Inputs are on the motor base.
inline Complex stall_admittance(double r_stall, double x_stall) {
    if (r_stall <= 0.0 || x_stall <= 0.0)
        throw InputError("stall impedance components must be positive");
    return 1.0 / Complex(r_stall, x_stall);
}

/// Parent bus index of every bus in the tree rooted at the source (-1 there),
/// plus the index of the branch to the parent (-1 at the source).
struct TreeOrder {
    std::vector<int> parent;
    std::vector<int> parent_branch;
    std::vector<int> bfs_order;  // source first
};

inline TreeOrder tree_order(const FeederNetwork& net) {
    const auto index = bus_index_map(net);
    const auto n = net.buses.size();
    std::vector<std::vector<std::pair<int, int>>> adj(n);  // (neighbor, branch)
    for (std::size_t b = 0; b < net.branches.size(); ++b) {
        const int i = index.at(net.branches[b].from);
        const int j = index.at(net.branches[b].to);
        adj[static_cast<std::size_t>(i)].emplace_back(j, static_cast<int>(b));
        adj[static_cast<std::size_t>(j)].emplace_back(i, static_cast<int>(b));
    }
    TreeOrder order;
    order.parent.assign(n, -2);
    order.parent_branch.assign(n, -1);
    const int root = source_bus_index(net);
    order.parent[static_cast<std::size_t>(root)] = -1;
    std::queue<int> work;
    work.push(root);
    while (!work.empty()) {
        int u = work.front();
        work.pop();
        order.bfs_order.push_back(u);
        for (auto [v, b] : adj[static_cast<std::size_t>(u)]) {
            if (order.parent[static_cast<std::size_t>(v)] == -2) {
                order.parent[static_cast<std::size_t>(v)] = u;
                order.parent_branch[static_cast<std::size_t>(v)] = b;
                work.push(v);
            }
        }
    }
    return order;
}

}  // namespace fidvr
