#pragma once

// Steady-state network solution and Jacobian construction.
//
// The solver uses fixed-point current injection: constant-admittance load
// parts are absorbed into the nodal matrix (factorized once per call),
// constant-power parts enter the right-hand side as conj(S/V) and are
// relaxed until the voltage update falls below tolerance.  Loads during
// FIDVR are predominantly admittance-like, which keeps this robust at the
// depressed voltages where Newton steps struggle.

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fidvr/network.hpp"
#include "fidvr/types.hpp"

namespace fidvr {

/// Per-bus load specification: constant complex power drawn plus a constant
/// shunt admittance (math convention).
struct BusInjection {
    Complex power{0.0, 0.0};
    Complex admittance{0.0, 0.0};
};

struct PowerFlowOptions {
    double tolerance = 1e-10;  // max |dV| between sweeps
    int max_iterations = 100;
};

struct PowerFlowSolution {
    Eigen::VectorXcd v;
    int iterations = 0;
    double power_scale = 1.0;  // < 1 when the halving fallback engaged
};

namespace detail {

/// Network admittance plus load admittances plus the Thevenin source
/// admittance on the source-bus diagonal.
inline Eigen::MatrixXcd total_admittance(const FeederNetwork& net,
                                         const std::vector<BusInjection>& inj,
                                         const Eigen::MatrixXcd& y_net) {
    Eigen::MatrixXcd y = y_net;
    for (Eigen::Index i = 0; i < y.rows(); ++i)
        y(i, i) += inj[static_cast<std::size_t>(i)].admittance;
    y(source_bus_index(net), source_bus_index(net)) += 1.0 / net.source.impedance;
    return y;
}

}  // namespace detail

/// Solves the network for the given loads.  `warm_start` (if sized) seeds the
/// iteration; otherwise a flat start at the source EMF is used.
/// Throws DivergedSolveError when the fixed point fails to settle.
inline PowerFlowSolution solve_power_flow(const FeederNetwork& net,
                                          const std::vector<BusInjection>& injections,
                                          const PowerFlowOptions& opts = {},
                                          const Eigen::VectorXcd& warm_start = {}) {
    const auto n = static_cast<Eigen::Index>(net.buses.size());
    if (static_cast<Eigen::Index>(injections.size()) != n)
        throw InputError("injection list size does not match bus count");

    const Eigen::MatrixXcd y_net = build_admittance_matrix(net);
    const Eigen::MatrixXcd y = detail::total_admittance(net, injections, y_net);
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(y);

    const int src = source_bus_index(net);
    Eigen::VectorXcd i_fixed = Eigen::VectorXcd::Zero(n);
    i_fixed(src) = net.source.emf / net.source.impedance;

    Eigen::VectorXcd v = warm_start.size() == n
                             ? warm_start
                             : Eigen::VectorXcd::Constant(n, net.source.emf);

    bool any_power = false;
    for (const auto& bj : injections)
        if (bj.power != Complex(0.0, 0.0)) any_power = true;

    PowerFlowSolution sol;
    for (int it = 0; it < opts.max_iterations; ++it) {
        Eigen::VectorXcd rhs = i_fixed;
        if (any_power) {
            for (Eigen::Index k = 0; k < n; ++k) {
                const Complex s = injections[static_cast<std::size_t>(k)].power;
                if (s != Complex(0.0, 0.0)) {
                    if (std::abs(v(k)) < 1e-12)
                        throw DivergedSolveError("voltage collapsed to zero at bus " +
                                                 std::to_string(net.buses[static_cast<std::size_t>(k)].id));
                    rhs(k) -= std::conj(s / v(k));
                }
            }
        }
        Eigen::VectorXcd v_new = lu.solve(rhs);
        if (!v_new.allFinite())
            throw DivergedSolveError("non-finite voltage iterate");
        const double dv = (v_new - v).cwiseAbs().maxCoeff();
        v = v_new;
        sol.iterations = it + 1;
        if (dv <= opts.tolerance || !any_power) {
            sol.v = v;
            return sol;
        }
    }
    throw DivergedSolveError("power flow did not converge in " +
                             std::to_string(opts.max_iterations) + " iterations");
}

/// Continuation fallback: on divergence the constant-power parts are halved
/// until the solve succeeds (admittance parts are never scaled).  The scale
/// that produced the returned solution is reported in `power_scale`.
inline PowerFlowSolution solve_power_flow_with_fallback(const FeederNetwork& net,
                                                        const std::vector<BusInjection>& injections,
                                                        const PowerFlowOptions& opts = {},
                                                        const Eigen::VectorXcd& warm_start = {},
                                                        int max_halvings = 8) {
    double scale = 1.0;
    std::vector<BusInjection> scaled = injections;
    for (int attempt = 0; attempt <= max_halvings; ++attempt) {
        try {
            PowerFlowSolution sol = solve_power_flow(net, scaled, opts, warm_start);
            sol.power_scale = scale;
            return sol;
        } catch (const DivergedSolveError&) {
            if (attempt == max_halvings) throw;
            scale *= 0.5;
            for (std::size_t k = 0; k < scaled.size(); ++k)
                scaled[k].power = injections[k].power * scale;
        }
    }
    throw DivergedSolveError("unreachable");
}

/// Max nodal current mismatch |Y*V - I(V)| over all buses.
inline double kcl_residual(const FeederNetwork& net,
                           const std::vector<BusInjection>& injections,
                           const Eigen::VectorXcd& v) {
    const Eigen::MatrixXcd y =
        detail::total_admittance(net, injections, build_admittance_matrix(net));
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(v.size());
    rhs(source_bus_index(net)) = net.source.emf / net.source.impedance;
    for (Eigen::Index k = 0; k < v.size(); ++k) {
        const Complex s = injections[static_cast<std::size_t>(k)].power;
        if (s != Complex(0.0, 0.0)) rhs(k) -= std::conj(s / v(k));
    }
    return (y * v - rhs).cwiseAbs().maxCoeff();
}

/// Power-flow Jacobian d(P,Q)/d(theta,|V|) in standard polar form over all
/// feeder buses.  The Thevenin EMF is treated as the slack node: it appears
/// in the computed injections but contributes no rows or columns.  Load
/// admittance parts from `injections` are folded into the admittance seen by
/// the Jacobian; constant-power parts do not enter (their derivative is zero).
/// Throws SingularJacobianError when the matrix is rank-deficient.
inline Eigen::MatrixXd compute_jacobian(const FeederNetwork& net,
                                        const std::vector<BusInjection>& injections,
                                        const Eigen::VectorXcd& v) {
    const auto n = static_cast<Eigen::Index>(net.buses.size());
    if (v.size() != n) throw InputError("voltage vector size mismatch");

    // augmented system: feeder buses 0..n-1 plus the EMF node at index n
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n + 1, n + 1);
    y.topLeftCorner(n, n) = detail::total_admittance(net, injections, build_admittance_matrix(net));
    const int src = source_bus_index(net);
    const Complex y_src = 1.0 / net.source.impedance;
    y(src, n) -= y_src;
    y(n, src) -= y_src;
    y(n, n) += y_src;

    Eigen::VectorXcd va(n + 1);
    va.head(n) = v;
    va(n) = net.source.emf;

    Eigen::VectorXd vm = va.cwiseAbs();
    Eigen::VectorXd th(n + 1);
    for (Eigen::Index i = 0; i <= n; ++i) th(i) = std::arg(va(i));
    for (Eigen::Index i = 0; i < n; ++i)
        if (vm(i) < 1e-9)
            throw SingularJacobianError("zero voltage magnitude at bus " +
                                        std::to_string(net.buses[static_cast<std::size_t>(i)].id));

    // computed injections S_i = V_i * conj(sum_k Y_ik V_k)
    Eigen::VectorXd p(n), q(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        Complex s = va(i) * std::conj((y.row(i) * va)(0, 0));
        p(i) = s.real();
        q(i) = s.imag();
    }

    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = 0; k < n; ++k) {
            const double g = y(i, k).real();
            const double b = y(i, k).imag();
            if (i == k) {
                jac(i, i) = -q(i) - b * vm(i) * vm(i);
                jac(i, n + i) = p(i) / vm(i) + g * vm(i);
                jac(n + i, i) = p(i) - g * vm(i) * vm(i);
                jac(n + i, n + i) = q(i) / vm(i) - b * vm(i);
            } else {
                const double tik = th(i) - th(k);
                const double c = std::cos(tik), s = std::sin(tik);
                jac(i, k) = vm(i) * vm(k) * (g * s - b * c);
                jac(i, n + k) = vm(i) * (g * c + b * s);
                jac(n + i, k) = -vm(i) * vm(k) * (g * c + b * s);
                jac(n + i, n + k) = vm(i) * (g * s - b * c);
            }
        }
    }

    Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
    if (!lu.isInvertible())
        throw SingularJacobianError("power-flow Jacobian is singular");
    return jac;
}

}  // namespace fidvr
