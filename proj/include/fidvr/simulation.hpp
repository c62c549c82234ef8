#pragma once

// Quasi-static time-domain simulation of a feeder with composite-load blocks
// at its load buses: algebraic network solve per step, slow load dynamics
// advanced between solves, fault shunt applied on schedule.  This is the
// surrogate-data generator for model reduction and the validation plant for
// mitigation plans.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fidvr/load_model.hpp"
#include "fidvr/network.hpp"
#include "fidvr/power_flow.hpp"
#include "fidvr/types.hpp"

namespace fidvr {

struct FaultScenario {
    int bus = 0;
    double start = 1.0;     // s
    double duration = 0.08; // s
    Complex fault_shunt{1e4, 0.0};  // math-convention admittance added at the bus
};

inline void validate(const FaultScenario& f) {
    if (f.duration <= 0.0) throw InputError("fault duration must be positive");
    if (f.start < 0.0) throw InputError("fault start must be non-negative");
}

/// One load area: a set of member load buses rooted at the uPMU node, with
/// mean composition and device parameters.  Node-level heterogeneity is drawn
/// around these means when the simulation is built.
struct AreaDefinition {
    std::string id;
    int root_bus = 0;
    std::vector<std::pair<int, double>> member_loads;  // (bus id, kW)
    LoadComposition mean_fractions;                    // p_total unused here
    Motor1PhaseParameters m1;
    Motor3PhaseParameters m3;
    ZipParameters zip;
    double static_pf = 0.95;
    double pv_sizing_frac = 0.0;  // s_rating = frac * node kW
    double pv_output_frac = 0.4;  // p_pv = frac * s_rating
    double pv_q_max_frac = 0.44;
    double comp_sigma = 0.08;   // composition draw spread
    double param_sigma = 0.05;  // motor parameter draw spread

    double p_load_kw() const {
        double sum = 0.0;
        for (const auto& [bus, kw] : member_loads) sum += kw;
        return sum;
    }
};

struct SimConfig {
    double dt = 0.005;
    double horizon = 25.0;
    std::uint64_t seed = 1;
    double report_hz = 100.0;
    double recovery_threshold = 0.95;
    double load_scale = 1.0;  // uniform demand scaling for steady sweeps
    // enough halvings that a bolted fault degenerates to the admittance-only
    // solve instead of collapsing the scenario
    int max_halvings = 30;
};

/// Scheduled actuation of a mitigation plan: per-area A/C kW to disconnect
/// and per-area PV reactive setpoints, applied once at t_apply.
struct ControlSchedule {
    double t_apply = -1.0;  // negative: no control
    std::map<std::string, double> ac_disconnect_kw;
    std::map<std::string, double> pv_q_kvar;
    std::uint64_t selection_seed = 7;
};

struct AreaSeries {
    std::string id;
    int root_bus = 0;
    std::vector<double> p, q;  // p.u. at the root, v_root * conj(i_area)
    std::vector<Complex> v_root, i_area, v_agg;
    std::vector<double> f_th, theta, slip, stalled_frac;
    // realized aggregates after the heterogeneity draw
    double actual_f_m1 = 0.0, actual_f_m3 = 0.0, actual_f_s = 0.0, actual_f_el = 0.0;
    double ac_base_kw = 0.0;
    double p_load_kw = 0.0;
};

struct SimulationResult {
    std::vector<double> t;
    std::vector<int> bus_ids;
    Eigen::MatrixXcd bus_v;  // steps x buses
    std::vector<AreaSeries> areas;
    std::vector<std::uint8_t> recovered;  // all roots above threshold
    bool collapsed = false;
    std::string diagnostic;
    double fault_clear = 0.0;
    double dt = 0.0;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;

    /// Last time any monitored root voltage sat below the threshold, minus
    /// the fault-clear time; 0 when the dip never outlives the fault.
    double recovery_time() const {
        double last_low = -1.0;
        for (std::size_t k = 0; k < t.size(); ++k)
            if (!recovered[k]) last_low = t[k];
        if (last_low < fault_clear) return 0.0;
        return last_low - fault_clear;
    }
    bool recovered_by_horizon() const { return recovered.empty() ? true : recovered.back() != 0; }
};

namespace detail {

inline double truncated_factor(std::mt19937_64& rng, double sigma) {
    if (sigma <= 0.0) return 1.0;
    std::normal_distribution<double> dist(0.0, 1.0);
    double z = dist(rng);
    z = std::clamp(z, -3.0, 3.0);
    return std::max(0.2, 1.0 + sigma * z);
}

struct NodeBlock {
    int bus_index = 0;
    int area_index = 0;
    CompositeLoadBlock block;
};

}  // namespace detail

/// Runs one scenario.  Deterministic for a given (areas, scenario, cfg,
/// schedule) tuple: all heterogeneity comes from cfg.seed, all control
/// randomization from schedule.selection_seed.
inline SimulationResult run_simulation(const FeederNetwork& net,
                                       const std::vector<AreaDefinition>& areas,
                                       const FaultScenario& scenario, const SimConfig& cfg,
                                       const ControlSchedule& schedule = {}) {
    validate_network(net);
    validate(scenario);
    const auto index = bus_index_map(net);
    if (index.find(scenario.bus) == index.end())
        throw InputError("fault bus " + std::to_string(scenario.bus) + " not in network");

    const auto n = static_cast<Eigen::Index>(net.buses.size());
    SimulationResult res;
    res.dt = cfg.dt;
    res.seed = cfg.seed;
    res.fault_clear = scenario.start + scenario.duration;
    res.bus_ids.reserve(net.buses.size());
    for (const auto& b : net.buses) res.bus_ids.push_back(b.id);

    // --- build per-node blocks with seeded heterogeneity -------------------
    std::mt19937_64 rng(cfg.seed);
    std::vector<detail::NodeBlock> nodes;
    res.areas.resize(areas.size());
    for (std::size_t a = 0; a < areas.size(); ++a) {
        const AreaDefinition& area = areas[a];
        if (index.find(area.root_bus) == index.end())
            throw InputError("area " + area.id + " root bus not in network");
        AreaSeries& series = res.areas[a];
        series.id = area.id;
        series.root_bus = area.root_bus;
        for (const auto& [bus, kw] : area.member_loads) {
            auto it = index.find(bus);
            if (it == index.end())
                throw InputError("area " + area.id + " member bus " + std::to_string(bus) +
                                 " not in network");

            CompositeLoadParams p;
            p.base_mva = net.base_mva;
            p.static_pf = area.static_pf;
            p.zip = area.zip;
            p.m3 = area.m3;

            // composition draw: truncated normal around the means, renormalized
            const double mk[4] = {area.mean_fractions.f_s, area.mean_fractions.f_el,
                                  area.mean_fractions.f_m1, area.mean_fractions.f_m3};
            double fk[4];
            double sum = 0.0;
            for (int i = 0; i < 4; ++i) {
                fk[i] = mk[i] <= 0.0 ? 0.0 : mk[i] * detail::truncated_factor(rng, area.comp_sigma);
                sum += fk[i];
            }
            if (sum <= 0.0) {
                for (int i = 0; i < 4; ++i) fk[i] = mk[i];
                sum = mk[0] + mk[1] + mk[2] + mk[3];
            }
            p.comp.p_total = kw * cfg.load_scale;
            p.comp.f_s = fk[0] / sum;
            p.comp.f_el = fk[1] / sum;
            p.comp.f_m1 = fk[2] / sum;
            p.comp.f_m3 = fk[3] / sum;
            p.comp.f_pv = area.mean_fractions.f_pv;

            // motor parameter draw; theta2 jittered through the trip band so
            // theta1 < theta2 is preserved
            p.m1 = area.m1;
            p.m1.v_stall = std::min(0.95, area.m1.v_stall * detail::truncated_factor(rng, area.param_sigma));
            p.m1.t_stall = area.m1.t_stall * detail::truncated_factor(rng, area.param_sigma);
            p.m1.r_stall = area.m1.r_stall * detail::truncated_factor(rng, area.param_sigma);
            p.m1.x_stall = area.m1.x_stall * detail::truncated_factor(rng, area.param_sigma);
            p.m1.t_th = area.m1.t_th * detail::truncated_factor(rng, area.param_sigma);
            p.m1.theta1 = area.m1.theta1 * detail::truncated_factor(rng, area.param_sigma);
            p.m1.theta2 = p.m1.theta1 + (area.m1.theta2 - area.m1.theta1) *
                                            detail::truncated_factor(rng, area.param_sigma);

            // PV sized from the unscaled node demand
            if (area.pv_sizing_frac > 0.0) {
                const double s_kva = area.pv_sizing_frac * kw;
                p.pv.s_rating = s_kva / 1000.0 / net.base_mva;
                p.pv.p_pv = area.pv_output_frac * p.pv.s_rating;
                p.pv.q_max_frac = area.pv_q_max_frac;
            }

            detail::NodeBlock nb;
            nb.bus_index = it->second;
            nb.area_index = static_cast<int>(a);
            nb.block = CompositeLoadBlock(p);
            nodes.push_back(std::move(nb));

            series.p_load_kw += p.comp.p_total;
            series.actual_f_s += p.comp.f_s * p.comp.p_total;
            series.actual_f_el += p.comp.f_el * p.comp.p_total;
            series.actual_f_m1 += p.comp.f_m1 * p.comp.p_total;
            series.actual_f_m3 += p.comp.f_m3 * p.comp.p_total;
        }
        if (series.p_load_kw > 0.0) {
            series.actual_f_s /= series.p_load_kw;
            series.actual_f_el /= series.p_load_kw;
            series.actual_f_m1 /= series.p_load_kw;
            series.actual_f_m3 /= series.p_load_kw;
        }
        series.ac_base_kw = series.actual_f_m1 * series.p_load_kw;
    }

    // --- pre-fault equilibrium ---------------------------------------------
    Eigen::VectorXcd v = Eigen::VectorXcd::Constant(n, net.source.emf);
    std::vector<BusInjection> inj(static_cast<std::size_t>(n));
    PowerFlowOptions pf_opts;
    for (int pass = 0; pass < 60; ++pass) {
        for (auto& nb : nodes) nb.block.initialize(v(nb.bus_index));
        std::fill(inj.begin(), inj.end(), BusInjection{});
        for (const auto& nb : nodes) {
            const BusInjection bi = nb.block.injection(v(nb.bus_index));
            inj[static_cast<std::size_t>(nb.bus_index)].power += bi.power;
            inj[static_cast<std::size_t>(nb.bus_index)].admittance += bi.admittance;
        }
        Eigen::VectorXcd v_new = solve_power_flow(net, inj, pf_opts, v).v;
        const double dv = (v_new - v).cwiseAbs().maxCoeff();
        v = v_new;
        if (dv < 1e-13) break;
    }

    // --- time loop -----------------------------------------------------------
    const int steps = static_cast<int>(std::llround(cfg.horizon / cfg.dt)) + 1;
    res.t.reserve(static_cast<std::size_t>(steps));
    res.bus_v.resize(steps, n);
    res.recovered.reserve(static_cast<std::size_t>(steps));
    for (auto& series : res.areas) {
        const auto cap = static_cast<std::size_t>(steps);
        series.p.reserve(cap);
        series.q.reserve(cap);
        series.v_root.reserve(cap);
        series.i_area.reserve(cap);
        series.v_agg.reserve(cap);
        series.f_th.reserve(cap);
        series.theta.reserve(cap);
        series.slip.reserve(cap);
        series.stalled_frac.reserve(cap);
    }

    bool control_applied = false;
    const int fault_bus_idx = index.at(scenario.bus);

    for (int k = 0; k < steps; ++k) {
        const double t = k * cfg.dt;

        if (!control_applied && schedule.t_apply >= 0.0 && t >= schedule.t_apply - 0.25 * cfg.dt) {
            control_applied = true;
            std::mt19937_64 sel_rng(schedule.selection_seed);
            for (std::size_t a = 0; a < areas.size(); ++a) {
                const std::string& aid = areas[a].id;
                // A/C disconnection: random per-node allocation of the area target
                auto ac_it = schedule.ac_disconnect_kw.find(aid);
                if (ac_it != schedule.ac_disconnect_kw.end() && ac_it->second > 0.0) {
                    std::vector<detail::NodeBlock*> members;
                    double available = 0.0;
                    for (auto& nb : nodes)
                        if (nb.area_index == static_cast<int>(a) && nb.block.ac_base_kw() > 0.0) {
                            members.push_back(&nb);
                            available += nb.block.ac_base_kw();
                        }
                    double target = ac_it->second;
                    if (target > available + 1e-9) {
                        res.warnings.push_back("area " + aid + ": requested " +
                                               std::to_string(target) + " kW exceeds " +
                                               std::to_string(available) + " kW of A/C; capped");
                        target = available;
                    }
                    std::uniform_real_distribution<double> u(0.25, 1.0);
                    std::vector<double> w(members.size());
                    for (auto& wi : w) wi = u(sel_rng);
                    std::vector<double> assigned(members.size(), 0.0);
                    std::vector<char> capped(members.size(), 0);
                    double remaining = target;
                    for (int round = 0; round < 8 && remaining > 1e-12; ++round) {
                        double wsum = 0.0;
                        for (std::size_t i = 0; i < members.size(); ++i)
                            if (!capped[i]) wsum += w[i] * members[i]->block.ac_base_kw();
                        if (wsum <= 0.0) break;
                        double next_remaining = 0.0;
                        for (std::size_t i = 0; i < members.size(); ++i) {
                            if (capped[i]) continue;
                            const double cap_i = members[i]->block.ac_base_kw() - assigned[i];
                            double share =
                                remaining * w[i] * members[i]->block.ac_base_kw() / wsum;
                            if (share >= cap_i) {
                                next_remaining += share - cap_i;
                                share = cap_i;
                                capped[i] = 1;
                            }
                            assigned[i] += share;
                        }
                        remaining = next_remaining;
                    }
                    for (std::size_t i = 0; i < members.size(); ++i) {
                        const double base = members[i]->block.ac_base_kw();
                        if (base > 0.0 && assigned[i] > 0.0) {
                            auto& ctl = members[i]->block.controls();
                            ctl.connected_ac_frac *= std::max(0.0, 1.0 - assigned[i] / base);
                        }
                    }
                }
                // PV reactive setpoints, spread over nodes by rating
                auto pv_it = schedule.pv_q_kvar.find(aid);
                if (pv_it != schedule.pv_q_kvar.end() && pv_it->second > 0.0) {
                    double rating_sum = 0.0;
                    for (auto& nb : nodes)
                        if (nb.area_index == static_cast<int>(a))
                            rating_sum += nb.block.params().pv.s_rating;
                    if (rating_sum > 0.0) {
                        const double q_pu = pv_it->second / 1000.0 / net.base_mva;
                        for (auto& nb : nodes)
                            if (nb.area_index == static_cast<int>(a)) {
                                const auto& pv = nb.block.params().pv;
                                const double share = q_pu * pv.s_rating / rating_sum;
                                nb.block.controls().pv_q_injection =
                                    std::min(share, pv.q_max_frac * pv.s_rating);
                            }
                    } else {
                        res.warnings.push_back("area " + aid + ": PV Q requested but no PV installed");
                    }
                }
            }
        }

        const bool fault_on =
            t >= scenario.start - 0.25 * cfg.dt && t < res.fault_clear - 0.25 * cfg.dt;

        std::fill(inj.begin(), inj.end(), BusInjection{});
        for (const auto& nb : nodes) {
            const BusInjection bi = nb.block.injection(v(nb.bus_index));
            inj[static_cast<std::size_t>(nb.bus_index)].power += bi.power;
            inj[static_cast<std::size_t>(nb.bus_index)].admittance += bi.admittance;
        }
        if (fault_on) inj[static_cast<std::size_t>(fault_bus_idx)].admittance += scenario.fault_shunt;

        PowerFlowSolution sol;
        try {
            sol = solve_power_flow_with_fallback(net, inj, pf_opts, v, cfg.max_halvings);
        } catch (const DivergedSolveError& e) {
            res.collapsed = true;
            res.diagnostic = "collapsed at t=" + std::to_string(t) + ": " + e.what();
            return res;
        }
        v = sol.v;

        // --- record ----------------------------------------------------------
        res.t.push_back(t);
        res.bus_v.row(k) = v.transpose();
        bool all_up = true;
        for (const auto& series : res.areas) {
            const double vr = std::abs(v(index.at(series.root_bus)));
            if (vr < cfg.recovery_threshold) all_up = false;
        }
        res.recovered.push_back(all_up ? 1 : 0);

        for (std::size_t a = 0; a < res.areas.size(); ++a) {
            AreaSeries& series = res.areas[a];
            Complex i_sum(0.0, 0.0);
            Complex v_agg(0.0, 0.0);
            double kw_sum = 0.0;
            double ac_w = 0.0, ac_stalled_w = 0.0, fth_w = 0.0, th_w = 0.0;
            double m3_w = 0.0, slip_w = 0.0;
            for (const auto& nb : nodes) {
                if (nb.area_index != static_cast<int>(a)) continue;
                const Complex vb = v(nb.bus_index);
                BusInjection bi = nb.block.injection(vb);
                i_sum += bi.admittance * vb + std::conj(bi.power * sol.power_scale / vb);
                const double kw = nb.block.params().comp.p_total;
                v_agg += kw * vb;
                kw_sum += kw;
                const double ac = nb.block.ac_base_kw();
                ac_w += ac;
                const auto& st = nb.block.state();
                if (st.motor1_mode == Motor1Mode::stalled) {
                    ac_stalled_w += ac;
                    fth_w += st.f_th * ac;
                    th_w += st.theta * ac;
                }
                const double m3 = nb.block.params().comp.f_m3 * kw;
                m3_w += m3;
                slip_w += st.slip3 * m3;
            }
            const Complex v_root = v(index.at(series.root_bus));
            const Complex s = v_root * std::conj(i_sum);
            series.v_root.push_back(v_root);
            series.i_area.push_back(i_sum);
            series.v_agg.push_back(kw_sum > 0.0 ? v_agg / kw_sum : v_root);
            series.p.push_back(s.real());
            series.q.push_back(s.imag());
            series.stalled_frac.push_back(ac_w > 0.0 ? ac_stalled_w / ac_w : 0.0);
            series.f_th.push_back(ac_stalled_w > 0.0 ? fth_w / ac_stalled_w : 1.0);
            series.theta.push_back(ac_stalled_w > 0.0 ? th_w / ac_stalled_w : 0.0);
            series.slip.push_back(m3_w > 0.0 ? slip_w / m3_w : 0.0);
        }

        // --- advance dynamics ------------------------------------------------
        for (auto& nb : nodes) nb.block.advance(std::abs(v(nb.bus_index)), cfg.dt);
    }
    return res;
}

}  // namespace fidvr
