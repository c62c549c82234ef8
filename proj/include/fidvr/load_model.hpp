#pragma once

// Composite-load block: ZIP static load, electronic load, aggregated
// three-phase motor with first-order slip dynamics, single-phase A/C motor
// with stall detection and thermal-relay tripping, and a PV inverter.
// One block represents the load behind one bus (detailed model) or behind
// one equivalent feeder (reduced sub-model); the same stepping code serves
// both.

#include <algorithm>
#include <cmath>
#include <optional>

#include "fidvr/network.hpp"
#include "fidvr/power_flow.hpp"
#include "fidvr/types.hpp"

namespace fidvr {

struct Motor1PhaseParameters {
    double v_stall = 0.55;   // p.u. voltage below which the stall timer runs
    double t_stall = 0.032;  // s the voltage must stay low before stalling
    double r_stall = 0.1;    // p.u. on the motor base
    double x_stall = 0.1;
    double t_th = 15.0;    // thermal relay time constant, s
    double theta1 = 0.7;   // relay temperature where tripping starts
    double theta2 = 3.0;   // relay temperature where tripping completes
    double p_nom = 1.0;    // running-state demand, p.u. on the motor base
    double q_nom = 0.5;
};

inline void validate(const Motor1PhaseParameters& p) {
    if (!(p.theta1 > 0.0 && p.theta1 < p.theta2))
        throw InputError("motor1 requires 0 < theta1 < theta2");
    if (p.t_th <= 0.0 || p.t_stall <= 0.0) throw InputError("motor1 time constants must be positive");
    if (!(p.v_stall > 0.0 && p.v_stall < 1.0)) throw InputError("motor1 v_stall must lie in (0,1)");
    if (p.r_stall <= 0.0 || p.x_stall <= 0.0) throw InputError("motor1 stall impedance must be positive");
}

/// Single-cage equivalent of the aggregated 3-phase motor.  Double-cage rotor
/// values are accepted for file compatibility but the second cage is not
/// simulated.
struct Motor3PhaseParameters {
    double r_s = 0.025;
    double x_ls = 0.08;
    double x_m = 3.0;
    double r_r = 0.02;
    double x_lr = 0.08;
    double h = 0.6;  // inertia constant, s
    double load_torque_exponent = 2.0;
    double r_r2 = 0.0;   // parsed, unused
    double x_lr2 = 0.0;  // parsed, unused
};

inline void validate(const Motor3PhaseParameters& p) {
    if (p.x_ls <= 0.0 || p.x_m <= 0.0 || p.x_lr <= 0.0)
        throw InputError("motor3 reactances must be positive");
    if (p.h <= 0.0) throw InputError("motor3 inertia must be positive");
}

/// Fractions of the static block's initial P and Q assigned to the
/// impedance/current/power terms; q_sh0 is a capacitive compensation
/// susceptance expressed as a fraction of the static Q.
struct ZipParameters {
    double p_z0 = 0.4, p_i0 = 0.3, p_p0 = 0.3;
    double q_z0 = 0.4, q_i0 = 0.3, q_p0 = 0.3;
    double q_sh0 = 0.0;
};

inline void validate(const ZipParameters& z) {
    if (std::abs(z.p_z0 + z.p_i0 + z.p_p0 - 1.0) > 1e-9)
        throw InputError("ZIP p-fractions must sum to 1");
    if (std::abs(z.q_z0 + z.q_i0 + z.q_p0 - 1.0) > 1e-9)
        throw InputError("ZIP q-fractions must sum to 1");
}

/// PV inverter ratings in system p.u.
struct PvParameters {
    double p_pv = 0.0;      // active output (constant, no curtailment)
    double s_rating = 0.0;  // apparent rating
    double q_max_frac = 0.44;
};

inline void validate(const PvParameters& p) {
    if (p.q_max_frac < 0.0 || p.q_max_frac > 1.0)
        throw InputError("pv q_max_frac must lie in [0,1]");
    if (p.p_pv > p.s_rating + 1e-12) throw InputError("pv output exceeds its rating");
}

struct LoadComposition {
    double p_total = 0.0;  // kW
    double f_s = 0.0, f_el = 0.0, f_m1 = 0.0, f_m3 = 0.0;
    double f_pv = 0.0;  // generation sizing fraction, not a demand share
};

inline void validate(const LoadComposition& c) {
    if (std::abs(c.f_s + c.f_el + c.f_m1 + c.f_m3 - 1.0) > 1e-6)
        throw InputError("load fractions f_s+f_el+f_m1+f_m3 must sum to 1");
    if (c.p_total < 0.0) throw InputError("p_total must be non-negative");
}

enum class Motor1Mode { running, stalled, never_stalled };

struct LoadAreaState {
    Motor1Mode motor1_mode = Motor1Mode::running;
    double stall_timer = 0.0;  // s spent below v_stall while running
    double theta = 0.0;        // relay temperature estimate
    double f_th = 1.0;         // connected fraction of the stalled motors
    double slip3 = 0.0;
};

// ---------------------------------------------------------------------------
// thermal relay and stall logic
// ---------------------------------------------------------------------------

inline double thermal_trip_fraction(double theta, const Motor1PhaseParameters& p) {
    return std::clamp(1.0 - (theta - p.theta1) / (p.theta2 - p.theta1), 0.0, 1.0);
}

/// Exact exponential relay step with the heating power frozen over the step:
/// theta' = P_th + (theta - P_th) exp(-dt/T_th), P_th = v^2 G_stall.
inline LoadAreaState step_thermal_relay(LoadAreaState state, double v_load,
                                        const Motor1PhaseParameters& p, double dt) {
    const double g_stall = stall_admittance(p.r_stall, p.x_stall).real();
    const double p_th = v_load * v_load * g_stall;
    state.theta = p_th + (state.theta - p_th) * std::exp(-dt / p.t_th);
    state.f_th = thermal_trip_fraction(state.theta, p);
    return state;
}

/// Stall trigger: the timer runs while the voltage is below v_stall, resets
/// on recovery, and the running->stalled transition fires once it exceeds
/// t_stall.  Stalling is absorbing; tripped motors do not reconnect within a
/// study window.
inline LoadAreaState update_stall_state(LoadAreaState state, double v_load,
                                        const Motor1PhaseParameters& p, double dt) {
    if (state.motor1_mode != Motor1Mode::running) return state;
    if (v_load < p.v_stall) {
        state.stall_timer += dt;
        if (state.stall_timer > p.t_stall) {
            state.motor1_mode = Motor1Mode::stalled;
            state.f_th = thermal_trip_fraction(state.theta, p);
        }
    } else {
        state.stall_timer = 0.0;
    }
    return state;
}

// ---------------------------------------------------------------------------
// three-phase motor, single-cage steady-state circuit
// ---------------------------------------------------------------------------

inline Complex motor3_input_impedance(const Motor3PhaseParameters& p, double slip) {
    const double s = std::max(slip, 1e-9);
    const Complex z_r(p.r_r / s, p.x_lr);
    const Complex z_m(0.0, p.x_m);
    return Complex(p.r_s, p.x_ls) + (z_m * z_r) / (z_m + z_r);
}

/// Motor admittance at the given slip (math convention, motor base).
inline Complex motor3_admittance(const Motor3PhaseParameters& p, double slip) {
    return 1.0 / motor3_input_impedance(p, slip);
}

/// Electrical (air-gap) torque in p.u. at the synchronous-speed base.
inline double motor3_electrical_torque(const Motor3PhaseParameters& p, double slip, double v) {
    const double s = std::max(slip, 1e-9);
    const Complex z_s(p.r_s, p.x_ls);
    const Complex z_r(p.r_r / s, p.x_lr);
    const Complex z_m(0.0, p.x_m);
    const Complex z_in = z_s + (z_m * z_r) / (z_m + z_r);
    const Complex i_s = v / z_in;
    const Complex v_gap = v - i_s * z_s;
    const Complex i_r = v_gap / z_r;
    return std::norm(i_r) * p.r_r / s;
}

struct Motor3Calibration {
    double torque_coeff = 0.0;  // T_mech(s) = torque_coeff (1-s)^exponent
    double slip0 = 0.0;         // initialization slip
};

inline double motor3_mechanical_torque(const Motor3PhaseParameters& p,
                                       const Motor3Calibration& cal, double slip) {
    return cal.torque_coeff * std::pow(std::max(1.0 - slip, 0.0), p.load_torque_exponent);
}

/// Picks the initialization slip so the motor draws `p_target` p.u. of input
/// power at voltage `v0`, and sets the load torque to balance there.
inline Motor3Calibration calibrate_motor3(const Motor3PhaseParameters& p, double v0,
                                          double p_target = 1.0) {
    auto input_power = [&](double s) {
        return v0 * v0 * (1.0 / motor3_input_impedance(p, s)).real();
    };
    double lo = 1e-6, hi = 1e-3;
    while (input_power(hi) < p_target) {
        hi *= 2.0;
        if (hi > 0.5)
            throw InputError("3-phase motor cannot deliver the target power at this voltage");
    }
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (input_power(mid) < p_target)
            lo = mid;
        else
            hi = mid;
    }
    Motor3Calibration cal;
    cal.slip0 = 0.5 * (lo + hi);
    cal.torque_coeff = motor3_electrical_torque(p, cal.slip0, v0) /
                       std::pow(1.0 - cal.slip0, p.load_torque_exponent);
    return cal;
}

/// Explicit Euler slip step of 2H ds/dt = T_mech(s) - T_elec(s, v).
inline LoadAreaState motor3_step(LoadAreaState state, double v_load,
                                 const Motor3PhaseParameters& p,
                                 const Motor3Calibration& cal, double dt) {
    const double t_m = motor3_mechanical_torque(p, cal, state.slip3);
    const double t_e = motor3_electrical_torque(p, state.slip3, v_load);
    state.slip3 = std::clamp(state.slip3 + dt * (t_m - t_e) / (2.0 * p.h), 0.0, 1.0);
    return state;
}

/// Equilibrium slip at the given voltage, by bisection on the torque balance
/// over the stable branch.  Returns 1.0 (stalled) when no balance exists.
inline double motor3_equilibrium_slip(const Motor3PhaseParameters& p,
                                      const Motor3Calibration& cal, double v) {
    auto residual = [&](double s) {
        return motor3_electrical_torque(p, s, v) - motor3_mechanical_torque(p, cal, s);
    };
    double lo = 1e-6;
    if (residual(lo) > 0.0) return lo;
    double hi = lo;
    bool bracketed = false;
    while (hi < 0.5) {
        hi *= 1.5;
        if (residual(hi) > 0.0) {
            bracketed = true;
            break;
        }
    }
    if (!bracketed) return 1.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (residual(mid) > 0.0)
            hi = mid;
        else
            lo = mid;
    }
    return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// aggregate injection of one composite block
// ---------------------------------------------------------------------------

struct CompositeLoadParams {
    LoadComposition comp;
    Motor1PhaseParameters m1;
    Motor3PhaseParameters m3;
    ZipParameters zip;
    PvParameters pv;
    double static_pf = 0.95;
    double base_mva = 1.0;
};

struct CompositeLoadControls {
    double connected_ac_frac = 1.0;  // remaining fraction of the A/C base
    double pv_q_injection = 0.0;     // commanded reactive injection, p.u.
};

/// Splits the block into a constant-power part and an admittance part for
/// the network solve.  The stalled A/C population enters as f_th-scaled stall
/// admittance, the running population as constant power, ZIP per its
/// fractions (the constant-current term is evaluated at the supplied
/// voltage), electronic load and PV as constant power, and the 3-phase motor
/// as its equivalent-circuit admittance at the present slip.
inline BusInjection aggregate_load_injection(const CompositeLoadParams& p,
                                             const Motor3Calibration& m3cal,
                                             const LoadAreaState& st, Complex v,
                                             const CompositeLoadControls& ctl = {}) {
    BusInjection out;
    const double p_pu = p.comp.p_total / 1000.0 / p.base_mva;
    const double vm = std::abs(v);

    const double m1_base = p.comp.f_m1 * p_pu * ctl.connected_ac_frac;
    if (m1_base > 0.0) {
        if (st.motor1_mode == Motor1Mode::stalled) {
            out.admittance += st.f_th * m1_base * stall_admittance(p.m1.r_stall, p.m1.x_stall);
        } else {
            out.power += m1_base * Complex(p.m1.p_nom, p.m1.q_nom);
        }
    }

    const double p_static = p.comp.f_s * p_pu;
    if (p_static > 0.0) {
        const double q_static = p_static * std::tan(std::acos(p.static_pf));
        out.admittance += Complex(p_static * p.zip.p_z0, -q_static * p.zip.q_z0);
        out.power += Complex(p_static * p.zip.p_i0, q_static * p.zip.q_i0) * vm;
        out.power += Complex(p_static * p.zip.p_p0, q_static * p.zip.q_p0);
        out.admittance += Complex(0.0, p.zip.q_sh0 * q_static);
    }

    out.power += Complex(p.comp.f_el * p_pu, 0.0);

    const double m3_base = p.comp.f_m3 * p_pu;
    if (m3_base > 0.0) out.admittance += m3_base * motor3_admittance(p.m3, st.slip3);

    if (p.pv.s_rating > 0.0) {
        const double q_inj = std::min(ctl.pv_q_injection, p.pv.q_max_frac * p.pv.s_rating);
        out.power += Complex(-p.pv.p_pv, -q_inj);
    }
    return out;
}

/// One composite block with its own state; the building brick of both the
/// detailed feeder simulation (one per load bus) and the reduced sub-model.
class CompositeLoadBlock {
public:
    CompositeLoadBlock() = default;
    explicit CompositeLoadBlock(CompositeLoadParams params) : params_(std::move(params)) {
        validate(params_.comp);
        if (params_.comp.f_m1 > 0.0) validate(params_.m1);
        if (params_.comp.f_m3 > 0.0) validate(params_.m3);
        validate(params_.zip);
        validate(params_.pv);
    }

    /// Calibrates the 3-phase motor at the pre-fault voltage and rests the
    /// relay.  Must be called (possibly repeatedly while iterating the
    /// initial power flow) before stepping.
    void initialize(Complex v0) {
        state_ = LoadAreaState{};
        state_.motor1_mode =
            params_.comp.f_m1 > 0.0 ? Motor1Mode::running : Motor1Mode::never_stalled;
        if (params_.comp.f_m3 > 0.0) {
            m3cal_ = calibrate_motor3(params_.m3, std::abs(v0), 1.0);
            state_.slip3 = m3cal_.slip0;
        }
    }

    BusInjection injection(Complex v) const {
        return aggregate_load_injection(params_, m3cal_, state_, v, controls_);
    }

    /// Advances stall logic, thermal relay and slip by one step at the solved
    /// voltage magnitude.
    void advance(double v_mag, double dt) {
        state_ = update_stall_state(state_, v_mag, params_.m1, dt);
        if (state_.motor1_mode == Motor1Mode::stalled)
            state_ = step_thermal_relay(state_, v_mag, params_.m1, dt);
        if (params_.comp.f_m3 > 0.0)
            state_ = motor3_step(state_, v_mag, params_.m3, m3cal_, dt);
    }

    const LoadAreaState& state() const { return state_; }
    LoadAreaState& state() { return state_; }
    const CompositeLoadParams& params() const { return params_; }
    const Motor3Calibration& motor3_calibration() const { return m3cal_; }
    CompositeLoadControls& controls() { return controls_; }
    const CompositeLoadControls& controls() const { return controls_; }

    /// Connected A/C demand in kW (running + stalled base before f_th decay).
    double ac_base_kw() const {
        return params_.comp.f_m1 * params_.comp.p_total * controls_.connected_ac_frac;
    }

private:
    CompositeLoadParams params_;
    Motor3Calibration m3cal_;
    LoadAreaState state_;
    CompositeLoadControls controls_;
};

}  // namespace fidvr
