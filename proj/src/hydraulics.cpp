#include "dhn/hydraulics.hpp"

#include <cmath>
#include <numbers>
#include <queue>
#include <sstream>

#include "dhn/linalg.hpp"

namespace dhn {

double friction_resistance(double rho, double length, double friction, double diameter) {
    const double pi = std::numbers::pi;
    return 8.0 * rho * length * friction / (pi * pi * std::pow(diameter, 5));
}

double friction_resistance(const Edge& e, double rho) {
    return friction_resistance(rho, e.length, e.friction, e.diameter);
}

double edge_pressure_change(double R_mu, double pump, double R_nu, double q, double nu, double r) {
    if (nu < 0) throw std::domain_error("negative valve opening");
    return (R_mu + R_nu * nu) * q * q - pump * r;
}

HydraulicModel make_hydraulic_model(const NetworkSpec& spec, const ExpandedGraph& g,
                                    const LoopStructure& loops, double rho) {
    HydraulicModel hm;
    const int m = static_cast<int>(g.num_edges());
    hm.R_mu.resize(m);
    hm.c.resize(m);
    hm.R_nu = Eigen::VectorXd::Zero(m);
    hm.partner = g.partner;
    for (int j = 0; j < m; ++j) {
        const Edge& e = spec.edges[g.edges[j].original];
        hm.R_mu(j) = friction_resistance(e, rho);
        hm.c(j) = g.edges[j].pump;
        if (hm.c(j) > 0) hm.pump_edges.push_back(j);
        if (e.has_valve) hm.R_nu(j) = e.valve_coeff;
    }
    hm.valve_edges = valve_columns(spec, g);
    hm.valve_of_edge.assign(m, -1);
    for (std::size_t k = 0; k < hm.valve_edges.size(); ++k) hm.valve_of_edge[hm.valve_edges[k]] = static_cast<int>(k);
    hm.F_r = loops.F_r;
    hm.F = loops.F;
    hm.valves = check_valve_assumption(hm.F, hm.valve_edges);
    const int mr = static_cast<int>(hm.F_r.rows());
    hm.Z.reserve(mr);
    for (int i = 0; i < mr; ++i) {
        Eigen::VectorXd w = hm.F_r.row(i).transpose().cwiseProduct(hm.R_mu);
        hm.Z.push_back(hm.F_r * w.asDiagonal() * hm.F_r.transpose());
    }
    hm.loop_capacity = hm.F_r * hm.c;
    return hm;
}

Eigen::VectorXd loop_feasibility(const HydraulicModel& hm, const Eigen::VectorXd& q_r) {
    if (q_r.size() != hm.F_r.rows()) throw std::invalid_argument("q_r has wrong dimension");
    Eigen::VectorXd out(hm.F_r.rows());
    for (Eigen::Index i = 0; i < out.size(); ++i)
        out(i) = q_r.dot(hm.Z[static_cast<std::size_t>(i)] * q_r) - hm.loop_capacity(i);
    return out;
}

Eigen::VectorXd effective_flows(const HydraulicModel& hm, const Eigen::VectorXd& q) {
    Eigen::VectorXd qe = q;
    const int m = hm.num_edges();
    for (int j = 0; j < m; ++j) {
        int p = hm.partner[j];
        if (p < 0) {
            if (qe(j) <= hm.q_tol) qe(j) = 0.0;
            continue;
        }
        if (p < j) continue;
        double net = q(j) - q(p);
        qe(j) = net > hm.q_tol ? net : 0.0;
        qe(p) = -net > hm.q_tol ? -net : 0.0;
    }
    return qe;
}

namespace {

Eigen::VectorXd pump_speeds_for(const HydraulicModel& hm, const Eigen::VectorXd& qe) {
    Eigen::VectorXd r(hm.pump_edges.size());
    for (std::size_t k = 0; k < hm.pump_edges.size(); ++k) {
        int j = hm.pump_edges[k];
        int p = hm.partner[j];
        bool moving = qe(j) > 0 || (p >= 0 && qe(p) > 0);
        r(static_cast<Eigen::Index>(k)) = moving ? 1.0 : 0.0;
    }
    return r;
}

Eigen::VectorXd speeds_per_edge(const HydraulicModel& hm, const Eigen::VectorXd& r) {
    Eigen::VectorXd re = Eigen::VectorXd::Zero(hm.num_edges());
    for (std::size_t k = 0; k < hm.pump_edges.size(); ++k) re(hm.pump_edges[k]) = r(static_cast<Eigen::Index>(k));
    return re;
}

int worst_loop(const HydraulicModel& hm, const Eigen::VectorXd& dp) {
    Eigen::VectorXd res = (hm.F * dp).cwiseAbs();
    Eigen::Index i = 0;
    if (res.size()) res.maxCoeff(&i);
    return static_cast<int>(i);
}

}  // namespace

Eigen::VectorXd pressure_changes(const HydraulicModel& hm, const Eigen::VectorXd& q,
                                 const ActuatorState& act) {
    const int m = hm.num_edges();
    Eigen::VectorXd qe = effective_flows(hm, q);
    Eigen::VectorXd re = speeds_per_edge(hm, act.r);
    Eigen::VectorXd dp = Eigen::VectorXd::Zero(m);
    auto held = [&](int j) {
        int k = hm.valve_of_edge[j];
        return (k >= 0 && act.closed[static_cast<std::size_t>(k)]) ? act.held(k) : 0.0;
    };
    for (int j = 0; j < m; ++j) {
        if (qe(j) <= 0) continue;
        int k = hm.valve_of_edge[j];
        double nu = k >= 0 ? act.nu(k) : 0.0;
        dp(j) = edge_pressure_change(hm.R_mu(j), hm.c(j), hm.R_nu(j), qe(j), nu, re(j));
    }
    for (int j = 0; j < m; ++j) {
        if (qe(j) > 0) continue;
        int p = hm.partner[j];
        if (p >= 0 && qe(p) > 0) {
            dp(j) = -dp(p);
        } else if (p >= 0) {
            dp(j) = -hm.c(j) * re(j) + hm.c(p) * re(p) + held(j) - held(p);
        } else {
            dp(j) = -hm.c(j) * re(j) + held(j);
        }
    }
    return dp;
}

double loop_equality_residual(const HydraulicModel& hm, const Eigen::VectorXd& dp) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < hm.F.rows(); ++i) {
        double s = hm.F.row(i).dot(dp);
        double scale = hm.F.row(i).cwiseAbs().dot(dp.cwiseAbs());
        if (scale > 0) worst = std::max(worst, std::abs(s) / scale);
    }
    return worst;
}

ActuatorState recover_actuators(const HydraulicModel& hm, const Eigen::VectorXd& q) {
    const int m = hm.num_edges();
    if (q.size() != m) throw std::invalid_argument("flow vector has wrong dimension");
    const auto nv = static_cast<Eigen::Index>(hm.valve_edges.size());
    Eigen::VectorXd qe = effective_flows(hm, q);

    ActuatorState act;
    act.nu = Eigen::VectorXd::Zero(nv);
    act.closed.assign(static_cast<std::size_t>(nv), 0);
    act.held = Eigen::VectorXd::Zero(nv);
    act.r = pump_speeds_for(hm, qe);

    // Closed-form candidate with pumps at full speed.
    if (hm.valves.assumption_satisfied && nv > 0) {
        Eigen::VectorXd b = hm.c - hm.R_mu.cwiseProduct(qe.cwiseProduct(qe));
        Eigen::VectorXd y = (hm.valves.Psi + hm.valves.Theta * hm.valves.Z2) * b;
        bool ok = y.minCoeff() >= -1e-9 * std::max(1.0, hm.c.maxCoeff());
        ActuatorState cf = act;
        for (Eigen::Index k = 0; k < nv && ok; ++k) {
            int j = hm.valve_edges[static_cast<std::size_t>(k)];
            if (qe(j) > 0) {
                cf.nu(k) = std::max(0.0, y(k)) / (hm.R_nu(j) * qe(j) * qe(j));
            } else if (y(k) > 1e-9 * std::max(1.0, hm.c.maxCoeff())) {
                ok = false;
            }
        }
        if (ok && loop_equality_residual(hm, pressure_changes(hm, q, cf)) <= 1e-10) {
            cf.closed_form = true;
            return cf;
        }
    }

    // dp = dp0 + M y with y >= 0.
    Eigen::VectorXd re = speeds_per_edge(hm, act.r);
    Eigen::VectorXd dp0 = Eigen::VectorXd::Zero(m);
    for (int j = 0; j < m; ++j)
        if (qe(j) > 0) dp0(j) = hm.R_mu(j) * qe(j) * qe(j) - hm.c(j) * re(j);
    for (int j = 0; j < m; ++j) {
        if (qe(j) > 0) continue;
        int p = hm.partner[j];
        if (p >= 0 && qe(p) > 0)
            dp0(j) = -dp0(p);
        else if (p >= 0)
            dp0(j) = -hm.c(j) * re(j) + hm.c(p) * re(p);
        else
            dp0(j) = -hm.c(j) * re(j);
    }
    struct Col {
        Eigen::Index valve;
        double sign;
    };
    std::vector<Col> cols;
    std::vector<Eigen::VectorXd> mcols;
    for (Eigen::Index k = 0; k < nv; ++k) {
        int j = hm.valve_edges[static_cast<std::size_t>(k)];
        int p = hm.partner[j];
        Eigen::VectorXd col = Eigen::VectorXd::Zero(m);
        col(j) = 1.0;
        if (p >= 0) col(p) = -1.0;
        if (qe(j) > 0) {
            cols.push_back({k, 1.0});
            mcols.push_back(col);
        } else if (p >= 0 && qe(p) > 0) {
            continue;
        } else {
            if (p >= 0 && hm.valve_of_edge[p] >= 0 && hm.valve_of_edge[p] < k) continue;
            act.closed[static_cast<std::size_t>(k)] = 1;
            cols.push_back({k, 1.0});
            mcols.push_back(col);
            cols.push_back({k, -1.0});
            mcols.push_back(-col);
        }
    }
    Eigen::MatrixXd M(m, static_cast<Eigen::Index>(mcols.size()));
    for (std::size_t c = 0; c < mcols.size(); ++c) M.col(static_cast<Eigen::Index>(c)) = mcols[c];
    Eigen::MatrixXd A = hm.F * M;
    Eigen::VectorXd rhs = -(hm.F * dp0);
    NnlsResult sol = nnls(A, rhs);
    Eigen::VectorXd y = sol.x;
    for (std::size_t c = 0; c < cols.size(); ++c) {
        Eigen::Index k = cols[c].valve;
        int j = hm.valve_edges[static_cast<std::size_t>(k)];
        double v = y(static_cast<Eigen::Index>(c));
        if (act.closed[static_cast<std::size_t>(k)])
            act.held(k) += cols[c].sign * v;
        else
            act.nu(k) = v / (hm.R_nu(j) * qe(j) * qe(j));
    }
    Eigen::VectorXd dp = pressure_changes(hm, q, act);
    double res = loop_equality_residual(hm, dp);
    if (res > 1e-8) {
        int i = worst_loop(hm, dp);
        std::ostringstream os;
        os << "no nonnegative valve setting satisfies loop " << i << " (relative residual " << res << ")";
        throw AssumptionViolation(os.str(), i);
    }
    return act;
}

KirchhoffReport verify_kirchhoff(const Eigen::VectorXd& dp, const std::vector<SignedCycle>& cycles) {
    KirchhoffReport rep;
    for (std::size_t c = 0; c < cycles.size(); ++c) {
        double s = 0.0, scale = 0.0;
        for (std::size_t i = 0; i < cycles[c].edges.size(); ++i) {
            double v = cycles[c].signs[i] * dp(cycles[c].edges[i]);
            s += v;
            scale += std::abs(v);
        }
        double rel = scale > 0 ? std::abs(s) / scale : 0.0;
        if (std::abs(s) > rep.max_abs) {
            rep.max_abs = std::abs(s);
            rep.worst = static_cast<int>(c);
        }
        rep.max_rel = std::max(rep.max_rel, rel);
    }
    return rep;
}

KirchhoffReport verify_kirchhoff_all_cycles(const HydraulicModel& hm, const Eigen::VectorXd& q,
                                            const ActuatorState& act,
                                            const std::vector<SignedCycle>& cycles) {
    return verify_kirchhoff(pressure_changes(hm, q, act), cycles);
}

Eigen::VectorXd nodal_pressures(const ExpandedGraph& g, const HydraulicModel& hm,
                                const Eigen::VectorXd& q, const ActuatorState& act,
                                int reference_node, double reference_pressure) {
    const int n = static_cast<int>(g.num_nodes());
    Eigen::VectorXd dp = pressure_changes(hm, q, act);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::queue<int> todo;
    p(reference_node) = reference_pressure;
    seen[static_cast<std::size_t>(reference_node)] = 1;
    todo.push(reference_node);
    while (!todo.empty()) {
        int v = todo.front();
        todo.pop();
        for (std::size_t j = 0; j < g.edges.size(); ++j) {
            const auto& e = g.edges[j];
            if (e.tail == v && !seen[static_cast<std::size_t>(e.head)]) {
                p(e.head) = p(v) - dp(static_cast<Eigen::Index>(j));
                seen[static_cast<std::size_t>(e.head)] = 1;
                todo.push(e.head);
            } else if (e.head == v && !seen[static_cast<std::size_t>(e.tail)]) {
                p(e.tail) = p(v) + dp(static_cast<Eigen::Index>(j));
                seen[static_cast<std::size_t>(e.tail)] = 1;
                todo.push(e.tail);
            }
        }
    }
    const double scale = std::max(1.0, dp.cwiseAbs().maxCoeff());
    double worst = 0.0;
    for (std::size_t j = 0; j < g.edges.size(); ++j) {
        const auto& e = g.edges[j];
        worst = std::max(worst, std::abs(p(e.tail) - p(e.head) - dp(static_cast<Eigen::Index>(j))));
    }
    if (worst > 1e-8 * scale)
        throw PathDependenceError("nodal pressures are path dependent", worst);
    return p;
}

}  // namespace dhn
