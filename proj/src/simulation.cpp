#include "dhn/simulation.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

namespace dhn {

using Eigen::VectorXd;

HighFidelityModel make_plant(const Scenario& sc, const NetworkSpec& spec) {
    HighFidelityModel p;
    p.beta = sc.beta;
    p.substeps = sc.beta * sc.plant_safety;
    p.model = make_system_model(spec, sc.l_x, sc.fluid, sc.beta);
    return p;
}

namespace {

// Side of a physical edge for initialisation: 0 supply, 1 return, 2 storage.
int edge_side(const SystemModel& m, int e) {
    const auto& edge = m.spec.edges[static_cast<std::size_t>(e)];
    if (edge.kind == EdgeKind::Exchanger) {
        for (const auto& u : m.spec.units) {
            if (u.edge != edge.id) continue;
            if (u.kind == UnitKind::Storage) return 2;
            if (u.kind == UnitKind::Producer) return 0;
            return 1;
        }
        return 1;
    }
    return m.spec.nodes[static_cast<std::size_t>(m.spec.node_index(edge.tail))].supply ? 0 : 1;
}

}  // namespace

VectorXd initial_state(const SystemModel& m, const Scenario& sc) {
    const double Ta = sc.fluid.T_a;
    const double side_T[3] = {sc.initial_supply_C - Ta, sc.initial_return_C - Ta, sc.initial_storage_C - Ta};
    VectorXd x(m.num_states());
    for (int i = 0; i < m.tg.num_junctions; ++i) {
        const auto& id = m.g.node_ids[static_cast<std::size_t>(i)];
        x[i] = m.spec.nodes[static_cast<std::size_t>(m.spec.node_index(id))].supply ? side_T[0] : side_T[1];
    }
    for (std::size_t e = 0; e < m.tg.chain.size(); ++e)
        for (int c : m.tg.chain[e]) x[c] = side_T[edge_side(m, static_cast<int>(e))];
    return x;
}

VectorXd downsample_state(const SystemModel& plant, const SystemModel& ctrl, const VectorXd& x_hf) {
    if (plant.tg.num_junctions != ctrl.tg.num_junctions || plant.tg.chain.size() != ctrl.tg.chain.size())
        throw std::invalid_argument("plant and controller meshes do not correspond");
    VectorXd x(ctrl.num_states());
    x.head(ctrl.tg.num_junctions) = x_hf.head(plant.tg.num_junctions);
    for (std::size_t e = 0; e < ctrl.tg.chain.size(); ++e) {
        const auto& hc = plant.tg.chain[e];
        const auto& cc = ctrl.tg.chain[e];
        if (cc.empty()) continue;
        if (hc.size() % cc.size() != 0) throw std::invalid_argument("sub-cell counts are not a multiple");
        std::size_t b = hc.size() / cc.size();
        for (std::size_t j = 0; j < cc.size(); ++j) {
            double vs = 0.0, s = 0.0;
            for (std::size_t i = j * b; i < (j + 1) * b; ++i) {
                double v = plant.tg.V[hc[i]];
                vs += v * x_hf[hc[i]];
                s += v;
            }
            x[cc[j]] = s > 0 ? vs / s : x_hf[hc[j * b]];
        }
    }
    return x;
}

IntervalResult simulate_interval(const HighFidelityModel& plant, const Scenario& sc, const VectorXd& x_hf,
                                 const Control& u, int k) {
    const SystemModel& m = *plant.model;
    const double rc = m.fluid.rho_cp();
    const double ts = sc.tau / plant.substeps;
    const double x_floor = sc.T_ret_min - sc.fluid.T_a;
    const double x_cap = plant.T_cap_C - sc.fluid.T_a;
    const auto dem_units = m.demand_units();

    VectorXd q = m.edge_flows(u.q_r).cwiseMax(0.0);
    ImplicitEulerStepper stepper(m.tg, m.inj);
    const int nw = static_cast<int>(m.inj.units.size());

    struct Unitinfo {
        int col, cell, inlet, fwd;
        double demand_kW;
        double power_kW;
    };
    std::vector<Unitinfo> info;
    for (int j = 0; j < nw; ++j) {
        const std::string& name = m.inj.units[static_cast<std::size_t>(j)];
        Unitinfo ui{j, m.cell_of(name), m.inlet_of(name), m.forward_plus(name), 0.0, 0.0};
        const Unit* unit = m.spec.find_unit(name);
        if (unit->kind == UnitKind::Consumer || unit->kind == UnitKind::Prosumer)
            ui.demand_kW = std::max(0.0, sc.demand_kW(name, k));
        auto it = u.power_kW.find(name);
        if (it != u.power_kW.end()) ui.power_kW = std::max(0.0, it->second);
        info.push_back(ui);
    }

    IntervalResult res;
    std::vector<double> extracted(static_cast<std::size_t>(nw), 0.0), injected(static_cast<std::size_t>(nw), 0.0);
    VectorXd x = x_hf;
    const double eps = 1e-9;
    for (int s = 0; s < plant.substeps; ++s) {
        VectorXd w = VectorXd::Zero(nw);
        for (const auto& ui : info) {
            double qi = q[ui.fwd];
            if (ui.power_kW > 0.0) {
                // the cell may not be driven beyond the high limit within a substep
                double V = m.tg.V[ui.cell];
                double inflow = 0.0, qin = 0.0;
                for (int p = m.tg.incoming_offsets[ui.cell]; p < m.tg.incoming_offsets[ui.cell + 1]; ++p) {
                    const auto& re = m.tg.edges[static_cast<std::size_t>(m.tg.incoming[p])];
                    double f = q[re.source];
                    inflow += f * x[re.tail];
                    qin += f;
                }
                double cap = rc * (V / ts * (x_cap - x[ui.cell]) + (qin + m.tg.alpha[ui.cell]) * x_cap - inflow);
                double P = std::min(ui.power_kW * 1e3, std::max(0.0, cap));
                w[ui.col] += P;
                injected[static_cast<std::size_t>(ui.col)] += P / 1e3 / plant.substeps;
            }
            if (ui.demand_kW > 0.0) {
                double avail = std::max(0.0, rc * qi * (x[ui.inlet] - x_floor));
                double served = std::min(ui.demand_kW * 1e3, avail);
                w[ui.col] -= served;
                extracted[static_cast<std::size_t>(ui.col)] += served / 1e3 / plant.substeps;
            }
        }
        VectorXd xn = stepper.step(x, q, w, ts);
        if (!xn.allFinite()) throw IntegratorError("plant integration produced non-finite values", k * sc.tau + s * ts);
        double ein = w.sum() * ts;
        double loss = rc * (m.tg.alpha.array() * xn.array()).sum() * ts;
        double jun = rc * eps * (xn.head(m.tg.num_junctions) - x.head(m.tg.num_junctions)).sum() * ts;
        double dst = rc * (m.tg.V.array() * (xn - x).array()).sum();
        res.energy_in_J += ein;
        res.losses_J += loss + jun;
        res.stored_J += dst;
        x = xn;
    }
    double scale = std::max({std::abs(res.energy_in_J), std::abs(res.losses_J), std::abs(res.stored_J), 1.0});
    res.energy_residual = std::abs(res.energy_in_J - res.losses_J - res.stored_J) / scale;
    res.x = x;
    for (const auto& name : dem_units) {
        ConsumerSample cs;
        cs.demand_kW = std::max(0.0, sc.demand_kW(name, k));
        cs.q = q[m.forward_plus(name)];
        cs.T_in = x[m.supply_node_of(name)] + sc.fluid.T_a;
        cs.T_out = x[m.cell_of(name)] + sc.fluid.T_a;
        cs.extracted_kW = extracted[static_cast<std::size_t>(m.inj.column_of(name))];
        res.consumers.push_back(cs);
    }
    for (const auto& ui : info)
        if (ui.power_kW > 0.0) res.injected_kW[m.inj.units[static_cast<std::size_t>(ui.col)]] = injected[static_cast<std::size_t>(ui.col)];
    return res;
}

double compute_atv(const ClosedLoopRecord& rec, double T_sup_min) {
    if (rec.steps.empty() || rec.consumers.empty()) return 0.0;
    double s = 0.0;
    for (const auto& st : rec.steps)
        for (const auto& c : st.consumers) s += std::max(0.0, T_sup_min - c.T_in);
    return s / (static_cast<double>(rec.steps.size()) * static_cast<double>(rec.consumers.size()));
}

DvResult compute_dv(const ClosedLoopRecord& rec) {
    double shortfall = 0.0, total = 0.0;
    for (const auto& st : rec.steps)
        for (const auto& c : st.consumers) {
            double delivered = rec.rho_cp * c.q * (c.T_in - c.T_out) / 1e3;
            shortfall += std::max(0.0, c.demand_kW - delivered);
            total += c.demand_kW;
        }
    DvResult r;
    if (total <= 0.0) {
        r.defined = false;
        return r;
    }
    r.value = 100.0 * shortfall / total;
    return r;
}

double median(std::vector<double> v) { return percentile(std::move(v), 0.5); }

double percentile(std::vector<double> v, double p) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    double pos = p * static_cast<double>(v.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    auto hi = std::min(lo + 1, v.size() - 1);
    double f = pos - static_cast<double>(lo);
    return (1.0 - f) * v[lo] + f * v[hi];
}

Metrics compute_metrics(const ClosedLoopRecord& rec, double T_sup_min) {
    Metrics m;
    m.steps = static_cast<int>(rec.steps.size());
    std::vector<double> times;
    for (const auto& st : rec.steps) {
        m.cost += st.cost;
        if (st.used_mpc) times.push_back(st.solve_seconds);
        if (st.fallback) ++m.fallbacks;
        m.max_energy_residual = std::max(m.max_energy_residual, st.energy_residual);
    }
    m.atv = compute_atv(rec, T_sup_min);
    auto dv = compute_dv(rec);
    m.dv = dv.value;
    m.dv_defined = dv.defined;
    m.median_solve = median(times);
    m.p90_solve = percentile(times, 0.9);
    if (!times.empty()) {
        double s = 0.0;
        for (double t : times) s += t;
        m.mean_solve = s / static_cast<double>(times.size());
    }
    for (double d : rec.daily_imbalance) m.max_storage_imbalance = std::max(m.max_storage_imbalance, d);
    return m;
}

std::vector<std::string> state_names(const SystemModel& model) {
    std::vector<std::string> names;
    for (int i = 0; i < model.tg.num_junctions; ++i) names.push_back(model.g.node_ids[static_cast<std::size_t>(i)]);
    for (std::size_t e = 0; e < model.tg.chain.size(); ++e)
        for (std::size_t j = 0; j < model.tg.chain[e].size(); ++j)
            names.push_back(model.spec.edges[e].id + "#" + std::to_string(j));
    return names;
}

ClosedLoopRecord run_closed_loop(Controller& controller, const HighFidelityModel& plant, const Scenario& sc, int t_f,
                                 const ProgressFn& progress) {
    const SystemModel& cm = controller.model();
    const SystemModel& pm = *plant.model;
    ClosedLoopRecord rec;
    rec.scenario = sc.name;
    rec.variant = controller.config().variant;
    rec.consumers = cm.demand_units();
    rec.rho_cp = sc.fluid.rho_cp();
    rec.T_a = sc.fluid.T_a;
    for (const auto& c : cm.loops.cycles) {
        std::string name;
        for (int n : c.nodes) name += (name.empty() ? "" : ">") + cm.g.node_ids[static_cast<std::size_t>(n)];
        rec.cycle_names.push_back(name);
    }
    rec.state_names = state_names(cm);
    if (t_f > static_cast<int>(sc.price.size())) throw ConfigError("scenario series shorter than t_f");

    VectorXd x_hf = initial_state(pm, sc);
    StorageLedger ledger;
    const std::string sto = cm.storage_unit();
    for (int k = 0; k < t_f; ++k) {
        VectorXd x = downsample_state(pm, cm, x_hf);
        ControllerStep cs = controller.step(k, x, ledger);
        IntervalResult ir;
        try {
            ir = simulate_interval(plant, sc, x_hf, cs.control, k);
        } catch (const IntegratorError& e) {
            rec.aborted = true;
            rec.abort_reason = std::string(e.what()) + " at t = " + std::to_string(e.last_good_time) + " s";
            spdlog::error("{}", rec.abort_reason);
            break;
        }
        x_hf = ir.x;

        StepRecord sr;
        sr.k = k;
        sr.hour = sc.start_hour + k * sc.tau / 3600.0;
        sr.price = sc.price[static_cast<std::size_t>(k)];
        sr.q_r = cs.control.q_r;
        sr.power_kW = cs.control.power_kW;
        for (const auto& [name, v] : ir.injected_kW) sr.power_kW[name] = v;
        sr.consumers = ir.consumers;
        sr.x = downsample_state(pm, cm, x_hf);
        VectorXd feas = loop_feasibility(cm.hm, 1e-3 * cs.control.q_r);
        sr.loop_usage.resize(feas.size());
        for (int i = 0; i < feas.size(); ++i) {
            double cap = cm.hm.loop_capacity[i];
            sr.loop_usage[i] = cap > 0 ? (feas[i] + cap) / cap : 0.0;
        }
        auto p1 = sr.power_kW.find(sc.primary_producer);
        sr.cost = p1 == sr.power_kW.end() ? 0.0 : sr.price * p1->second * sc.tau / 3.6e6;
        sr.status = cs.status;
        sr.iterations = cs.iterations;
        sr.solve_seconds = cs.solve_seconds;
        sr.used_mpc = cs.used_mpc;
        sr.fallback = cs.control.fallback;
        sr.energy_residual = ir.energy_residual;
        if (!sto.empty()) {
            VectorXd q = cm.edge_flows(cs.control.q_r).cwiseMax(0.0);
            double qf = q[cm.forward_plus(sto)];
            int rv = cm.reverse_plus(sto);
            double qb = rv >= 0 ? q[rv] : 0.0;
            sr.storage_flow = qf - qb;
            ledger.net_m3 += (qf - qb) * sc.tau;
            ledger.charge_m3 += qf * sc.tau;
        }
        if (progress) progress(sr);
        rec.steps.push_back(std::move(sr));

        // a new day starts: close the storage balance
        double h_next = sc.start_hour + (k + 1) * sc.tau / 3600.0;
        if (std::abs(h_next / 24.0 - std::round(h_next / 24.0)) < 1e-9) {
            if (ledger.charge_m3 > 1e-9) rec.daily_imbalance.push_back(std::abs(ledger.net_m3) / ledger.charge_m3);
            ledger = StorageLedger{};
        }
    }
    rec.metrics = compute_metrics(rec, sc.T_sup_min);
    return rec;
}

ClosedLoopRecord run_variant(const Scenario& sc, Variant v, int t_f, const ProgressFn& progress) {
    NetworkSpec spec = sc.effective_network();
    std::shared_ptr<const SystemModel> cm = make_system_model(spec, sc.l_x, sc.fluid);
    HighFidelityModel plant = make_plant(sc, spec);
    auto ctrl = make_controller(v, cm, sc);
    return run_closed_loop(*ctrl, plant, sc, t_f, progress);
}

}  // namespace dhn
