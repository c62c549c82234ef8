#include <catch2/catch_amalgamated.hpp>

#include "fidvr/load_model.hpp"

using namespace fidvr;
using Catch::Approx;

namespace {

Motor1PhaseParameters m1_g5() {
    Motor1PhaseParameters p;
    p.r_stall = 0.1;
    p.x_stall = 0.1;  // G = B = 5
    p.t_th = 15.0;
    p.theta1 = 0.7;
    p.theta2 = 3.0;
    return p;
}

}  // namespace

TEST_CASE("thermal relay exponential step") {
    auto p = m1_g5();
    LoadAreaState st;
    st.motor1_mode = Motor1Mode::stalled;

    SECTION("closed form: theta(15) = 2.45 (1 - e^-1)") {
        auto out = step_thermal_relay(st, 0.7, p, 15.0);  // P_th = 0.49*5 = 2.45
        CHECK(out.theta == Approx(2.45 * (1.0 - std::exp(-1.0))).epsilon(1e-12));
        CHECK(out.theta == Approx(1.5487).epsilon(1e-4));
    }

    SECTION("forward-Euler oracle at dt = 1e-3 agrees") {
        double theta = 0.0;
        const double p_th = 0.49 * 5.0;
        for (int i = 0; i < 15000; ++i) theta += 1e-3 * (p_th - theta) / p.t_th;
        auto out = step_thermal_relay(st, 0.7, p, 15.0);
        CHECK(out.theta == Approx(theta).epsilon(1e-3));
    }

    SECTION("trip fraction endpoints") {
        CHECK(thermal_trip_fraction(p.theta1, p) == 1.0);
        CHECK(thermal_trip_fraction(p.theta2, p) == 0.0);
        CHECK(thermal_trip_fraction(0.5 * (p.theta1 + p.theta2), p) == Approx(0.5));
    }

    SECTION("group property: one step equals two half steps") {
        auto one = step_thermal_relay(st, 0.8, p, 0.5);
        auto half = step_thermal_relay(step_thermal_relay(st, 0.8, p, 0.25), 0.8, p, 0.25);
        CHECK(std::abs(one.theta - half.theta) < 1e-12);
    }

    SECTION("theta is non-decreasing while P_th > theta") {
        st.theta = 0.3;
        auto out = step_thermal_relay(st, 0.7, p, 0.1);
        CHECK(out.theta > 0.3);
    }
}

TEST_CASE("stall trigger state machine") {
    auto p = m1_g5();
    p.v_stall = 0.55;
    p.t_stall = 0.03;

    SECTION("sustained low voltage stalls the motor") {
        LoadAreaState st;
        for (int i = 0; i < 8; ++i) st = update_stall_state(st, 0.4, p, 0.005);
        CHECK(st.motor1_mode == Motor1Mode::stalled);
        CHECK(st.f_th == 1.0);
    }
    SECTION("voltage at or above v_stall never arms the trigger") {
        LoadAreaState st;
        for (int i = 0; i < 10000; ++i) st = update_stall_state(st, 0.56, p, 0.005);
        CHECK(st.motor1_mode == Motor1Mode::running);
        CHECK(st.stall_timer == 0.0);
    }
    SECTION("dip shorter than t_stall recovers cleanly") {
        LoadAreaState st;
        for (int i = 0; i < 5; ++i) st = update_stall_state(st, 0.4, p, 0.005);  // 25 ms
        st = update_stall_state(st, 0.9, p, 0.005);
        CHECK(st.motor1_mode == Motor1Mode::running);
        CHECK(st.stall_timer == 0.0);
    }
    SECTION("stall is absorbing") {
        LoadAreaState st;
        st.motor1_mode = Motor1Mode::stalled;
        auto out = update_stall_state(st, 1.0, p, 1.0);
        CHECK(out.motor1_mode == Motor1Mode::stalled);
    }
}

TEST_CASE("three-phase motor slip dynamics") {
    Motor3PhaseParameters p;

    SECTION("calibration puts the motor in equilibrium") {
        auto cal = calibrate_motor3(p, 1.0, 1.0);
        const double t_m = motor3_mechanical_torque(p, cal, cal.slip0);
        const double t_e = motor3_electrical_torque(p, cal.slip0, 1.0);
        CHECK(std::abs(t_m - t_e) / (2.0 * p.h) < 1e-6);
        // drawn power matches the target
        CHECK((1.0 / motor3_input_impedance(p, cal.slip0)).real() == Approx(1.0).epsilon(1e-9));
    }

    SECTION("zero voltage drives the slip monotonically toward 1") {
        auto cal = calibrate_motor3(p, 1.0, 1.0);
        LoadAreaState st;
        st.slip3 = cal.slip0;
        double prev = st.slip3;
        for (int i = 0; i < 2000; ++i) {
            st = motor3_step(st, 0.0, p, cal, 0.005);
            CHECK(st.slip3 >= prev);
            prev = st.slip3;
        }
        // asymptotic coast-down under quadratic load torque
        CHECK(st.slip3 > 0.85);
    }

    SECTION("stepper settles onto the bisection equilibrium") {
        auto cal = calibrate_motor3(p, 1.0, 1.0);
        LoadAreaState st;
        st.slip3 = cal.slip0;
        for (int i = 0; i < 40000; ++i) st = motor3_step(st, 0.9, p, cal, 0.005);
        const double ref = motor3_equilibrium_slip(p, cal, 0.9);
        CHECK(std::abs(st.slip3 - ref) < 1e-4);
    }

    SECTION("no torque balance at deep sag reports stall") {
        auto cal = calibrate_motor3(p, 1.0, 1.0);
        CHECK(motor3_equilibrium_slip(p, cal, 0.2) == 1.0);
    }
}

TEST_CASE("aggregate load injection composition") {
    CompositeLoadParams p;
    p.comp = {100.0, 0.4, 0.1, 0.5, 0.0, 0.0};  // 100 kW: 40% static, 10% electronic, 50% A/C
    p.m1 = m1_g5();
    p.base_mva = 1.0;
    Motor3Calibration cal;

    SECTION("fully tripped stalled block contributes nothing") {
        LoadAreaState st;
        st.motor1_mode = Motor1Mode::stalled;
        st.theta = p.m1.theta2;
        st.f_th = 0.0;
        auto inj = aggregate_load_injection(p, cal, st, {1.0, 0.0});
        // only ZIP-Z remains in the admittance part
        const double p_static = 0.4 * 0.1;
        CHECK(inj.admittance.real() == Approx(p_static * p.zip.p_z0));
    }

    SECTION("stalled block admittance is f_th-scaled stall admittance on the motor base") {
        LoadAreaState st;
        st.motor1_mode = Motor1Mode::stalled;
        st.f_th = 1.0;
        auto inj = aggregate_load_injection(p, cal, st, {1.0, 0.0});
        const double m1_base = 0.5 * 0.1;  // p.u.
        const double p_static = 0.4 * 0.1;
        const double q_static = p_static * std::tan(std::acos(p.static_pf));
        CHECK(inj.admittance.real() == Approx(m1_base * 5.0 + p_static * p.zip.p_z0));
        CHECK(inductive_susceptance(inj.admittance) ==
              Approx(m1_base * 5.0 + q_static * p.zip.q_z0).epsilon(1e-9));
    }

    SECTION("running motor is constant power at (p_nom, q_nom)") {
        LoadAreaState st;
        auto inj = aggregate_load_injection(p, cal, st, {1.0, 0.0});
        const double m1_base = 0.5 * 0.1;
        CHECK(inj.power.real() ==
              Approx(m1_base * 1.0 + 0.1 * 0.1 + 0.4 * 0.1 * (p.zip.p_i0 + p.zip.p_p0)));
    }

    SECTION("stalled reactive demand ~6x nominal with stall parameters set accordingly") {
        // pick r,x so that G = 3 and B = 3.6 = 6 q_nom on the motor base
        CompositeLoadParams sane = p;
        sane.comp = {100.0, 0.0, 0.0, 1.0, 0.0, 0.0};
        sane.m1.r_stall = 0.136612;
        sane.m1.x_stall = 0.163934;
        sane.m1.q_nom = 0.6;
        LoadAreaState run;
        const double q_run = aggregate_load_injection(sane, cal, run, {1.0, 0.0}).power.imag();
        LoadAreaState stall;
        stall.motor1_mode = Motor1Mode::stalled;
        stall.f_th = 1.0;
        const double q_stall = inductive_susceptance(
            aggregate_load_injection(sane, cal, stall, {1.0, 0.0}).admittance);
        CHECK(q_stall / q_run == Approx(6.0).epsilon(0.01));
    }

    SECTION("PV injects negative load with a capped Q command") {
        CompositeLoadParams pv = p;
        pv.pv = {0.02, 0.05, 0.44};
        LoadAreaState st;
        CompositeLoadControls ctl;
        ctl.pv_q_injection = 1.0;  // far beyond the cap
        auto inj = aggregate_load_injection(pv, cal, st, {1.0, 0.0}, ctl);
        auto base = aggregate_load_injection(pv, cal, st, {1.0, 0.0});
        CHECK(inj.power.imag() - base.power.imag() == Approx(-0.44 * 0.05));
        CHECK(base.power.real() == Approx(inj.power.real()));
        CHECK((base.power - aggregate_load_injection(p, cal, st, {1.0, 0.0}).power).real() ==
              Approx(-0.02));
    }

    SECTION("block with no A/C initializes as never_stalled and skips stall logic") {
        CompositeLoadParams none = p;
        none.comp = {100.0, 0.5, 0.5, 0.0, 0.0, 0.0};
        CompositeLoadBlock block(none);
        block.initialize({1.0, 0.0});
        CHECK(block.state().motor1_mode == Motor1Mode::never_stalled);
        block.advance(0.1, 10.0);
        CHECK(block.state().motor1_mode == Motor1Mode::never_stalled);
    }

    SECTION("composition fractions must sum to one") {
        CompositeLoadParams bad = p;
        bad.comp.f_s = 0.9;
        CHECK_THROWS_AS(CompositeLoadBlock(bad), InputError);
    }
}
