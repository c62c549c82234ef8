#pragma once

// Shared scalar types, conventions and error taxonomy for the FIDVR toolkit.
//
// Conventions used throughout:
//  * All electrical quantities are per-unit on the network's base_mva unless
//    a function says otherwise (motor parameters are per-unit on the motor's
//    own kVA base and are scaled where they enter the network).
//  * Complex admittances are stored in math convention Y = G + jB.  Power
//    engineering texts write an inductive load admittance as G - jB with
//    B > 0; that corresponds to Im(Y) < 0 here.  Reported susceptances use
//    the inductive-positive convention B_report = -Im(Y).
//  * Complex powers are in load convention: S = P + jQ with P > 0 consuming.
//    Generation (PV active output, reactive injection) is negative load.

#include <complex>
#include <stdexcept>
#include <string>

namespace fidvr {

using Complex = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

/// Invalid or inconsistent input data (bad file, violated invariant, ...).
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure in a solver.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Fixed-point power-flow iteration did not converge.
class DivergedSolveError : public NumericalError {
public:
    explicit DivergedSolveError(const std::string& what) : NumericalError(what) {}
};

/// Power-flow Jacobian is singular (operating point at/beyond the nose).
class SingularJacobianError : public NumericalError {
public:
    explicit SingularJacobianError(const std::string& what) : NumericalError(what) {}
};

/// Mitigation LP has no feasible point within the control bounds.
class InfeasiblePlanError : public std::runtime_error {
public:
    explicit InfeasiblePlanError(const std::string& what) : std::runtime_error(what) {}
};

/// Parameter fit could not improve on the trivial baseline.
class FitFailedError : public std::runtime_error {
public:
    explicit FitFailedError(const std::string& what) : std::runtime_error(what) {}
};

/// Susceptance in the inductive-positive reporting convention.
inline double inductive_susceptance(Complex y_math) { return -y_math.imag(); }

}  // namespace fidvr
