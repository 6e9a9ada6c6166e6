#include "dhn/controllers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <spdlog/spdlog.h>

namespace dhn {

using Eigen::VectorXd;

ControllerConfig make_controller_config(Variant v, const Scenario& sc, const SystemModel& model) {
    ControllerConfig cfg;
    cfg.variant = v;
    const Unit* primary = model.spec.find_unit(sc.primary_producer);
    if (!primary || primary->kind != UnitKind::Producer)
        throw ConfigError("primary producer '" + sc.primary_producer + "' not found");
    cfg.controllable.push_back(sc.primary_producer);
    cfg.storage = v == Variant::SPS || v == Variant::MPS;
    if (cfg.storage && model.storage_unit().empty()) throw ConfigError("storage variant on a network without storage");
    const bool multi = v == Variant::MP || v == Variant::MPS;
    if (multi) {
        if (sc.fixed_prosumer.enabled) {
            cfg.prosumer_produces = true;
            cfg.fixed_prosumer = true;
        } else if (sc.surplus.enabled) {
            cfg.prosumer_produces = true;
            cfg.controllable.push_back(sc.surplus.unit);
        }
        if (model.units_of_kind(UnitKind::Prosumer).empty() && model.units_of_kind(UnitKind::Producer).size() < 2)
            throw ConfigError("multi-producer variant needs a second producer");
    }
    return cfg;
}

std::vector<char> cycle_mask(const ControllerConfig& cfg, const Scenario& sc, const SystemModel& model) {
    std::vector<char> mask(static_cast<std::size_t>(model.num_cycles()), 1);
    auto drop = [&](int e_plus) {
        if (e_plus < 0) return;
        for (int i : model.cycles_using(e_plus)) mask[static_cast<std::size_t>(i)] = 0;
    };
    std::string sto = model.storage_unit();
    if (!cfg.storage && !sto.empty()) {
        drop(model.forward_plus(sto));
        drop(model.reverse_plus(sto));
    }
    if (!cfg.prosumer_produces) {
        for (const auto& p : model.units_of_kind(UnitKind::Prosumer)) drop(model.reverse_plus(p));
    }
    (void)sc;
    return mask;
}

namespace {

double hours_at(const Scenario& sc, int k) { return sc.start_hour + k * sc.tau / 3600.0; }

int steps_to_midnight(const Scenario& sc, int k) {
    double h = hours_at(sc, k);
    double next = (std::floor(h / 24.0 + 1e-9) + 1.0) * 24.0;
    return static_cast<int>(std::lround((next - h) * 3600.0 / sc.tau));
}

double storage_volume(const SystemModel& model, const std::string& unit) {
    double v = 0.0;
    for (int c : model.tg.chain[static_cast<std::size_t>(model.edge_of(unit))]) v += model.tg.V[c];
    return v;
}

}  // namespace

HorizonData make_horizon(const ControllerConfig& cfg, const Scenario& sc, const SystemModel& model, int k,
                         const StorageLedger& ledger) {
    HorizonData d;
    const int N = sc.ocp.N;
    d.N = N;
    d.tau = sc.tau;
    if (static_cast<int>(sc.price.size()) < k + N || static_cast<int>(sc.total_demand_kW.size()) < k + N)
        throw ConfigError("forecast too short at step " + std::to_string(k));
    d.demand_units = model.demand_units();
    d.demand_kW.resize(static_cast<int>(d.demand_units.size()), N);
    for (int c = 0; c < static_cast<int>(d.demand_units.size()); ++c)
        for (int t = 0; t < N; ++t) d.demand_kW(c, t) = sc.demand_kW(d.demand_units[static_cast<std::size_t>(c)], k + t);
    d.price.assign(sc.price.begin() + k, sc.price.begin() + k + N);
    for (const auto& u : cfg.controllable) {
        ProducerInput p;
        p.unit = u;
        const Unit* unit = model.spec.find_unit(u);
        if (unit->kind == UnitKind::Producer) {
            p.lo_kW.assign(static_cast<std::size_t>(N), 0.0);
            p.hi_kW.assign(static_cast<std::size_t>(N), sc.P_max_kW);
            p.price_weight = 1.0;
        } else {
            // surplus heat of the prosumer costs nothing
            p.lo_kW.assign(static_cast<std::size_t>(N), 0.0);
            p.hi_kW.resize(static_cast<std::size_t>(N));
            for (int t = 0; t < N; ++t) p.hi_kW[static_cast<std::size_t>(t)] = sc.surplus_kW(k + t);
            p.price_weight = 0.0;
        }
        d.producers.push_back(std::move(p));
    }
    if (cfg.fixed_prosumer)
        d.fixed_injection_kW.push_back(
            {sc.fixed_prosumer.unit, std::vector<double>(static_cast<std::size_t>(N), sc.fixed_prosumer.power_kW)});
    d.cycle_enabled = cycle_mask(cfg, sc, model);
    d.T_sup_min = sc.T_sup_min;
    d.T_max = sc.T_max;
    d.T_ret_min = sc.T_ret_min;
    if (cfg.storage) {
        d.storage_active = true;
        d.storage_unit = model.storage_unit();
        d.storage_target = sc.storage_target_C - sc.fluid.T_a;
        d.past_net_m3 = ledger.net_m3;
        d.past_charge_m3 = ledger.charge_m3;
        d.steps_to_day_end = steps_to_midnight(sc, k);
        d.storage_volume_m3 = storage_volume(model, d.storage_unit);
    }
    return d;
}

double rbc_supply_setpoint(const RbcParams& p, double T_outdoor_C) {
    return std::clamp(p.a - p.b * (T_outdoor_C - p.T_ref), p.T_min, p.T_max);
}

Control rbc_step(const ControllerConfig& cfg, const Scenario& sc, const SystemModel& model, int k, const VectorXd& x) {
    const auto& hm = model.hm;
    const int m_r = model.num_cycles();
    const double rc = model.fluid.rho_cp();
    auto mask = cycle_mask(cfg, sc, model);
    const std::string& prod = sc.primary_producer;
    const int p_fwd = model.forward_plus(prod);

    Control u;
    u.q_r = VectorXd::Zero(m_r);
    for (const auto& c : model.demand_units()) {
        double dem = std::max(0.0, sc.demand_kW(c, k));
        double q_lps = std::max(sc.rbc.min_flow, dem * 1e3 / (rc * sc.rbc.dT_design) * 1e3);
        int c_fwd = model.forward_plus(c);
        int best = -1;
        double best_len = 1e300;
        for (int i = 0; i < m_r; ++i) {
            if (!mask[static_cast<std::size_t>(i)]) continue;
            if (hm.F_r(i, p_fwd) == 0.0 || hm.F_r(i, c_fwd) == 0.0) continue;
            double len = 0.0;
            for (int e = 0; e < hm.F_r.cols(); ++e)
                if (hm.F_r(i, e) != 0.0) len += model.spec.edges[static_cast<std::size_t>(model.g.edges[e].original)].length;
            if (len < best_len) {
                best_len = len;
                best = i;
            }
        }
        if (best < 0) {
            spdlog::warn("rbc: no producer cycle reaches {}", c);
            continue;
        }
        u.q_r[best] += q_lps;
    }
    // uniform scaling into the loop inequalities
    VectorXd feas = loop_feasibility(hm, 1e-3 * u.q_r);
    double worst = 0.0;
    for (int i = 0; i < m_r; ++i) {
        double cap = hm.loop_capacity[i];
        double use = feas[i] + cap;
        if (use <= 0) continue;
        worst = std::max(worst, cap > 0 ? use / cap : 1e300);
    }
    if (worst > 1.0) {
        double s = std::sqrt(0.999 / worst);
        spdlog::debug("rbc: flows scaled by {:.3f} at step {}", s, k);
        u.q_r *= s;
    }

    // proportional law on the producer outlet cell
    VectorXd q = model.edge_flows(u.q_r);
    double T_sp = rbc_supply_setpoint(sc.rbc, sc.T_outdoor.at(static_cast<std::size_t>(k)));
    double x_sp = T_sp - sc.fluid.T_a;
    int cell = model.cell_of(prod);
    double x_in = x[model.inlet_of(prod)];
    double qp = std::max(0.0, q[p_fwd]);
    double P = rc * (qp * (x_sp - x_in) + model.tg.alpha[cell] * x_sp) +
               sc.rbc.gain * rc * model.tg.V[cell] / sc.tau * (x_sp - x[cell]);
    u.power_kW[prod] = std::clamp(P / 1e3, 0.0, sc.P_max_kW);
    if (cfg.fixed_prosumer) u.power_kW[sc.fixed_prosumer.unit] = sc.fixed_prosumer.power_kW;
    return u;
}

Controller::Controller(ControllerConfig cfg, std::shared_ptr<const SystemModel> model, const Scenario& sc)
    : cfg_(std::move(cfg)), model_(std::move(model)), sc_(sc) {}

ControllerStep Controller::step(int k, const VectorXd& x, const StorageLedger& ledger) {
    ControllerStep out;
    if (cfg_.variant == Variant::RBC) {
        out.control = rbc_step(cfg_, sc_, *model_, k, x);
        return out;
    }
    out.used_mpc = true;
    HorizonData data = make_horizon(cfg_, sc_, *model_, k, ledger);
    auto t0 = std::chrono::steady_clock::now();
    MpcResult r = mpc_step(*model_, data, x, cache_, sc_.ocp, sc_.solver);
    out.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.status = to_string(r.solution.status);
    out.iterations = r.solution.iterations;
    out.objective = r.solution.objective;
    out.breakdown = r.breakdown;
    out.solver_ok = r.success;
    if (r.success) {
        out.control = r.control;
    } else {
        spdlog::warn("step {}: solver returned {}; falling back to the rule-based law", k, out.status);
        out.control = rbc_step(cfg_, sc_, *model_, k, x);
        out.control.fallback = true;
    }
    return out;
}

std::unique_ptr<Controller> make_controller(Variant v, std::shared_ptr<const SystemModel> model, const Scenario& sc) {
    auto cfg = make_controller_config(v, sc, *model);
    return std::make_unique<Controller>(std::move(cfg), std::move(model), sc);
}

}  // namespace dhn
