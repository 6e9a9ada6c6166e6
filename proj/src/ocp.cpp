#include "dhn/ocp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace dhn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kJunctionEps = 1e-6;  // L/s, matches 1e-9 m^3/s in the stepper

struct TermList {
    std::vector<std::pair<int, double>> f;  // (cycle, F_r entry)
};

double price_weight_per_kw(double price, double tau) { return price * tau / 3.6e6; }

double mean_price_weight(const HorizonData& d) {
    double s = 0.0;
    for (int t = 0; t < d.N; ++t) s += price_weight_per_kw(d.price[static_cast<std::size_t>(t)], d.tau);
    return std::max(s / std::max(1, d.N), 1e-9);
}

struct SoftRow {
    int t;      // state time 1..N
    int node;
    double bound;
    bool lower;  // x + sigma >= bound, otherwise x - sigma <= bound
};

}  // namespace

void OcpOptions::validate() const {
    if (N < 1) throw ConfigError("horizon N must be >= 1");
    if (N_c < 1 || N_c > N) throw ConfigError("control horizon must satisfy 1 <= N_c <= N");
    if (block < 1) throw ConfigError("block length must be >= 1");
    if (R_diff < 0 || R_sto < 0 || R_slack < 0 || R_slack_linear < 0)
        throw ConfigError("objective weights must be >= 0");
    if (temp_power != 1 && temp_power != 2) throw ConfigError("temperature power must be 1 or 2");
    if (q_r_max <= 0) throw ConfigError("q_r_max must be positive");
}

std::vector<int> apply_move_blocking(int N, int N_c, int block_len) {
    if (block_len < 1) throw std::invalid_argument("block length must be >= 1");
    if (N < 1) return {};
    N_c = std::clamp(N_c, 1, N);
    std::vector<char> free(static_cast<std::size_t>(N), 0);
    free[0] = 1;
    for (int t = 0; t < N; ++t)
        if (t % block_len == 0 && t < N - (block_len - 1) && t < N_c) free[static_cast<std::size_t>(t)] = 1;
    if (N_c < N) free[static_cast<std::size_t>(N_c)] = 1;
    std::vector<int> map(static_cast<std::size_t>(N));
    int cur = 0;
    for (int t = 0; t < N; ++t) {
        if (free[static_cast<std::size_t>(t)] && (t <= N_c)) cur = t;
        map[static_cast<std::size_t>(t)] = cur;
    }
    return map;
}

OcpProblem build_ocp(const SystemModel& model, const HorizonData& data, const VectorXd& x0,
                     const OcpOptions& opt) {
    opt.validate();
    const int N = data.N;
    if (N != opt.N) throw ConfigError("horizon data length differs from N");
    const int nx = model.num_states();
    if (x0.size() != nx) throw std::invalid_argument("x0 does not match the model dimension");
    if (data.demand_kW.cols() < N || static_cast<int>(data.price.size()) < N)
        throw ConfigError("forecast shorter than the horizon");
    const int m_r = model.num_cycles();
    const double tau = data.tau;
    const double rc = model.fluid.rho_cp();
    const double T_a = model.fluid.T_a;
    const auto& tg = model.tg;
    const auto& hm = model.hm;

    OcpProblem P;
    P.data = data;
    P.options = opt;
    P.x0 = x0;
    OcpLayout& L = P.lay;
    L.N = N;
    L.nx = nx;
    L.m_r = m_r;
    L.n_prod = static_cast<int>(data.producers.size());
    L.n_dem = static_cast<int>(data.demand_units.size());
    auto map = apply_move_blocking(N, opt.N_c, opt.block);
    L.block_of.assign(static_cast<std::size_t>(N), 0);
    for (int t = 0; t < N; ++t) {
        int s = map[static_cast<std::size_t>(t)];
        if (L.block_start.empty() || L.block_start.back() != s) L.block_start.push_back(s);
        L.block_of[static_cast<std::size_t>(t)] = static_cast<int>(L.block_start.size()) - 1;
    }
    L.n_blocks = static_cast<int>(L.block_start.size());

    std::vector<char> enabled(static_cast<std::size_t>(m_r), 1);
    if (!data.cycle_enabled.empty()) {
        if (static_cast<int>(data.cycle_enabled.size()) != m_r) throw ConfigError("cycle mask size mismatch");
        enabled = data.cycle_enabled;
    }

    // unit bookkeeping
    std::vector<int> prod_cell;
    for (const auto& p : data.producers) prod_cell.push_back(model.cell_of(p.unit));
    std::vector<int> dem_cell, dem_supply;
    for (const auto& u : data.demand_units) {
        dem_cell.push_back(model.cell_of(u));
        dem_supply.push_back(model.supply_node_of(u));
    }
    std::vector<std::pair<int, std::vector<double>>> fixed;
    for (const auto& [u, v] : data.fixed_injection_kW) fixed.push_back({model.cell_of(u), v});

    // soft rows
    std::vector<SoftRow> soft;
    for (int t = 1; t <= N; ++t) {
        for (int c = 0; c < L.n_dem; ++c)
            soft.push_back({t, dem_supply[static_cast<std::size_t>(c)], data.T_sup_min - T_a, true});
        for (int c = 0; c < L.n_dem; ++c)
            if (data.demand_kW(c, t - 1) > 0.0)
                soft.push_back({t, dem_cell[static_cast<std::size_t>(c)], data.T_ret_min - T_a, true});
        for (int j = 0; j < L.n_prod; ++j)
            soft.push_back({t, prod_cell[static_cast<std::size_t>(j)], data.T_max - T_a, false});
        for (const auto& f : fixed) soft.push_back({t, f.first, data.T_max - T_a, false});
    }
    const bool storage_rows = data.storage_active && opt.storage_balance && !data.storage_unit.empty();

    L.x_off = 0;
    L.q_off = N * nx;
    L.p_off = L.q_off + L.n_blocks * m_r;
    L.dem_off = L.p_off + L.n_blocks * L.n_prod;
    L.sig_off = L.dem_off + N * L.n_dem;
    L.n_sig = static_cast<int>(soft.size()) + (storage_rows ? 1 : 0);
    L.n = L.sig_off + L.n_sig;

    // bidirectional E+ pairs for complementarity
    std::vector<std::pair<int, int>> pairs;
    for (int e = 0; e < hm.num_edges(); ++e) {
        int pe = hm.partner[static_cast<std::size_t>(e)];
        if (pe > e) pairs.emplace_back(e, pe);
    }
    const auto& Fr = hm.F_r;
    auto column_terms = [&](int e) {
        std::vector<std::pair<int, double>> out;
        for (int l = 0; l < m_r; ++l)
            if (enabled[static_cast<std::size_t>(l)] && Fr(l, e) != 0.0) out.emplace_back(l, Fr(l, e));
        return out;
    };
    std::vector<std::vector<std::pair<int, double>>> edge_terms(static_cast<std::size_t>(hm.num_edges()));
    for (int e = 0; e < hm.num_edges(); ++e) edge_terms[static_cast<std::size_t>(e)] = column_terms(e);

    const bool nonneg = opt.nonnegativity_rows && hm.valves.valve_edges.size() > 0;
    const int n_valve = nonneg ? static_cast<int>(hm.valves.valve_edges.size()) : 0;
    const bool strict = opt.complementarity == ComplementarityMode::Strict;

    int m = N * nx + L.n_blocks * m_r + L.n_blocks * n_valve + static_cast<int>(soft.size()) +
            (storage_rows ? 2 : 0) + (strict ? L.n_blocks * static_cast<int>(pairs.size()) : 0);
    P.nlp = std::make_shared<QuadraticNlp>(L.n, m);
    QuadraticNlp& nlp = *P.nlp;
    P.dyn_rows = N * nx;
    P.row_scale.assign(static_cast<std::size_t>(m), 1.0);
    P.cell_rows.assign(static_cast<std::size_t>(nx), 0);

    // ------------------------------------------------------------ dynamics
    std::vector<int> unit_prod(static_cast<std::size_t>(nx), -1), unit_dem(static_cast<std::size_t>(nx), -1);
    for (int j = 0; j < L.n_prod; ++j) unit_prod[static_cast<std::size_t>(prod_cell[static_cast<std::size_t>(j)])] = j;
    for (int c = 0; c < L.n_dem; ++c) unit_dem[static_cast<std::size_t>(dem_cell[static_cast<std::size_t>(c)])] = c;
    std::vector<char> junction_active(static_cast<std::size_t>(nx), 0);
    for (const auto& re : tg.edges) {
        if (!edge_terms[static_cast<std::size_t>(re.source)].empty()) {
            junction_active[static_cast<std::size_t>(re.tail)] = 1;
            junction_active[static_cast<std::size_t>(re.head)] = 1;
        }
    }

    int row = 0;
    for (int t = 1; t <= N; ++t) {
        const int s = t - 1;
        const int b = L.block_of[static_cast<std::size_t>(s)];
        for (int i = 0; i < nx; ++i, ++row) {
            const bool junction = tg.is_junction(i);
            auto prev = [&](double coef) {
                if (t == 1)
                    nlp.add_con_const(row, coef * x0[i]);
                else
                    nlp.add_con_linear(row, L.x(t - 1, i), coef);
            };
            if (junction && !junction_active[static_cast<std::size_t>(i)]) {
                nlp.add_con_linear(row, L.x(t, i), 1.0);
                prev(-1.0);
                nlp.set_con_bounds(row, 0.0, 0.0);
                continue;
            }
            const double sc = junction ? 1.0 : 1.0 / (tg.V[i] + tau * 1e-3 * opt.q_nominal);
            const double flow_coef = junction ? 1.0 : tau * 1e-3;
            P.row_scale[static_cast<std::size_t>(row)] = sc;
            if (junction) {
                nlp.add_con_linear(row, L.x(t, i), sc * kJunctionEps);
                prev(-sc * kJunctionEps);
            } else {
                P.cell_rows[static_cast<std::size_t>(i)] = 1;
                nlp.add_con_linear(row, L.x(t, i), sc * (tg.V[i] + tau * tg.alpha[i]));
                prev(-sc * tg.V[i]);
            }
            for (int p = tg.outgoing_offsets[static_cast<std::size_t>(i)];
                 p < tg.outgoing_offsets[static_cast<std::size_t>(i) + 1]; ++p) {
                const auto& re = tg.edges[static_cast<std::size_t>(tg.outgoing[static_cast<std::size_t>(p)])];
                if (re.head == re.tail) continue;
                for (const auto& [l, f] : edge_terms[static_cast<std::size_t>(re.source)])
                    nlp.add_con_quad(row, L.q(b, l), L.x(t, i), sc * flow_coef * f);
            }
            for (int p = tg.incoming_offsets[static_cast<std::size_t>(i)];
                 p < tg.incoming_offsets[static_cast<std::size_t>(i) + 1]; ++p) {
                const auto& re = tg.edges[static_cast<std::size_t>(tg.incoming[static_cast<std::size_t>(p)])];
                if (re.head == re.tail) continue;
                for (const auto& [l, f] : edge_terms[static_cast<std::size_t>(re.source)])
                    nlp.add_con_quad(row, L.q(b, l), L.x(t, re.tail), -sc * flow_coef * f);
            }
            if (!junction) {
                const double inj = sc * tau * 1e3 / rc;  // per kW
                int j = unit_prod[static_cast<std::size_t>(i)];
                if (j >= 0) nlp.add_con_linear(row, L.p(b, j), -inj);
                int c = unit_dem[static_cast<std::size_t>(i)];
                if (c >= 0) {
                    nlp.add_con_const(row, inj * data.demand_kW(c, s));
                    nlp.add_con_linear(row, L.dem(s, c), -inj);
                }
                for (const auto& f : fixed)
                    if (f.first == i) nlp.add_con_const(row, -inj * f.second[static_cast<std::size_t>(s)]);
            }
            nlp.set_con_bounds(row, 0.0, 0.0);
        }
    }

    // ------------------------------------------------------------ loop inequalities
    for (int b = 0; b < L.n_blocks; ++b) {
        for (int i = 0; i < m_r; ++i, ++row) {
            const MatrixXd& Z = hm.Z[static_cast<std::size_t>(i)];
            double cap = hm.loop_capacity[i];
            double sc = cap > 0 ? 1e-6 / cap : 1e-6;
            for (int l = 0; l < m_r; ++l) {
                if (!enabled[static_cast<std::size_t>(l)]) continue;
                for (int k = l; k < m_r; ++k) {
                    if (!enabled[static_cast<std::size_t>(k)] || Z(l, k) == 0.0) continue;
                    nlp.add_con_quad(row, L.q(b, l), L.q(b, k), sc * (l == k ? Z(l, l) : 2.0 * Z(l, k)));
                }
            }
            nlp.set_con_bounds(row, -kInf, cap > 0 ? 1.0 : 0.0);
        }
    }

    // ------------------------------------------------------------ optional valve nonnegativity
    if (nonneg) {
        MatrixXd M = hm.valves.Psi + hm.valves.Theta * hm.valves.Z2;
        for (int b = 0; b < L.n_blocks; ++b) {
            for (int v = 0; v < n_valve; ++v, ++row) {
                double scale = 0.0;
                for (int e = 0; e < hm.num_edges(); ++e) scale += std::abs(M(v, e)) * hm.c[e];
                scale = scale > 0 ? 1.0 / scale : 1e-5;
                double cst = 0.0;
                for (int e = 0; e < hm.num_edges(); ++e) {
                    if (M(v, e) == 0.0) continue;
                    cst += M(v, e) * hm.c[e];
                    const auto& te = edge_terms[static_cast<std::size_t>(e)];
                    for (const auto& [l, fl] : te)
                        for (const auto& [k, fk] : te)
                            nlp.add_con_quad(row, L.q(b, l), L.q(b, k), -scale * M(v, e) * hm.R_mu[e] * 1e-6 * fl * fk);
                }
                nlp.add_con_const(row, scale * cst);
                nlp.set_con_bounds(row, 0.0, kInf);
            }
        }
    }

    // ------------------------------------------------------------ softened bounds
    for (std::size_t k = 0; k < soft.size(); ++k, ++row) {
        const auto& sr = soft[k];
        nlp.add_con_linear(row, L.x(sr.t, sr.node), 1.0);
        if (sr.lower) {
            nlp.add_con_linear(row, L.sig(static_cast<int>(k)), 1.0);
            nlp.set_con_bounds(row, sr.bound, kInf);
        } else {
            nlp.add_con_linear(row, L.sig(static_cast<int>(k)), -1.0);
            nlp.set_con_bounds(row, -kInf, sr.bound);
        }
    }

    // ------------------------------------------------------------ storage volume balance
    if (storage_rows) {
        int fwd = model.forward_plus(data.storage_unit);
        int rev = model.reverse_plus(data.storage_unit);
        const bool closes = data.steps_to_day_end <= N;
        const int T_end = closes ? std::max(0, data.steps_to_day_end) : N;
        const double f = opt.balance_fraction;
        const double vt = std::max(data.storage_volume_m3, 1.0);
        const double sc = 1.0 / vt;
        const int sig = L.sig(static_cast<int>(soft.size()));
        for (int sgn : {1, -1}) {
            for (int t = 0; t < T_end; ++t) {
                int b = L.block_of[static_cast<std::size_t>(t)];
                for (int l = 0; l < m_r; ++l) {
                    if (!enabled[static_cast<std::size_t>(l)]) continue;
                    double net = Fr(l, fwd) - (rev >= 0 ? Fr(l, rev) : 0.0);
                    double coef = sgn * net;
                    if (closes) coef -= f * Fr(l, fwd);
                    if (coef != 0.0) nlp.add_con_linear(row, L.q(b, l), sc * tau * 1e-3 * coef);
                }
            }
            nlp.add_con_linear(row, sig, -sc);
            double rhs = closes ? f * data.past_charge_m3 - sgn * data.past_net_m3 : vt - sgn * data.past_net_m3;
            nlp.set_con_bounds(row, -kInf, sc * rhs);
            ++row;
        }
    }

    // ------------------------------------------------------------ strict complementarity
    if (strict) {
        for (int b = 0; b < L.n_blocks; ++b) {
            for (const auto& [e, pe] : pairs) {
                for (const auto& [l, fl] : edge_terms[static_cast<std::size_t>(e)])
                    for (const auto& [k, fk] : edge_terms[static_cast<std::size_t>(pe)])
                        nlp.add_con_quad(row, L.q(b, l), L.q(b, k), fl * fk);
                nlp.set_con_bounds(row, -kInf, opt.comp_bound);
                ++row;
            }
        }
    }
    if (row != m) throw std::logic_error("OCP row count mismatch");

    // ------------------------------------------------------------ bounds
    for (int t = 1; t <= N; ++t)
        for (int i = 0; i < nx; ++i) nlp.set_var_bounds(L.x(t, i), opt.x_min, opt.x_max);
    for (int b = 0; b < L.n_blocks; ++b) {
        for (int l = 0; l < m_r; ++l)
            nlp.set_var_bounds(L.q(b, l), 0.0, enabled[static_cast<std::size_t>(l)] ? opt.q_r_max : 0.0);
        int t0 = L.block_start[static_cast<std::size_t>(b)];
        int t1 = b + 1 < L.n_blocks ? L.block_start[static_cast<std::size_t>(b) + 1] : N;
        for (int j = 0; j < L.n_prod; ++j) {
            const auto& pr = data.producers[static_cast<std::size_t>(j)];
            double lo = -kInf, hi = kInf;
            for (int t = t0; t < t1; ++t) {
                lo = std::max(lo, pr.lo_kW[static_cast<std::size_t>(t)]);
                hi = std::min(hi, pr.hi_kW[static_cast<std::size_t>(t)]);
            }
            if (hi < lo) hi = lo;
            nlp.set_var_bounds(L.p(b, j), lo, hi);
        }
    }
    for (int t = 0; t < N; ++t)
        for (int c = 0; c < L.n_dem; ++c) nlp.set_var_bounds(L.dem(t, c), 0.0, std::max(0.0, data.demand_kW(c, t)));
    for (int k = 0; k < L.n_sig; ++k) nlp.set_var_bounds(L.sig(k), 0.0, kInf);

    // ------------------------------------------------------------ objective
    const double pw = mean_price_weight(data);
    const double R_temp = opt.R_temp >= 0 ? opt.R_temp : 1e-4 * pw;
    const double eps_c = opt.eps_comp >= 0 ? opt.eps_comp : 1e-3 * pw;
    nlp.set_tag("price");
    for (int t = 0; t < N; ++t) {
        double w = price_weight_per_kw(data.price[static_cast<std::size_t>(t)], tau);
        for (int j = 0; j < L.n_prod; ++j)
            nlp.add_obj_linear(L.p(L.block_of[static_cast<std::size_t>(t)], j),
                               w * data.producers[static_cast<std::size_t>(j)].price_weight);
    }
    nlp.set_tag("temp");
    for (int t = 1; t <= N; ++t)
        for (int i = 0; i < nx; ++i) {
            if (opt.temp_power == 1)
                nlp.add_obj_linear(L.x(t, i), R_temp);
            else
                nlp.add_obj_quad(L.x(t, i), L.x(t, i), R_temp);
        }
    nlp.set_tag("diff");
    for (int b = 0; b + 1 < L.n_blocks; ++b)
        for (int j = 0; j < L.n_prod; ++j) {
            nlp.add_obj_quad(L.p(b + 1, j), L.p(b + 1, j), opt.R_diff);
            nlp.add_obj_quad(L.p(b, j), L.p(b, j), opt.R_diff);
            nlp.add_obj_quad(L.p(b, j), L.p(b + 1, j), -2.0 * opt.R_diff);
        }
    nlp.set_tag("storage");
    if (data.storage_active && !data.storage_unit.empty()) {
        for (int c : tg.chain[static_cast<std::size_t>(model.edge_of(data.storage_unit))]) {
            nlp.add_obj_quad(L.x(N, c), L.x(N, c), opt.R_sto);
            nlp.add_obj_linear(L.x(N, c), -2.0 * opt.R_sto * data.storage_target);
            nlp.add_obj_const(opt.R_sto * data.storage_target * data.storage_target);
        }
    }
    nlp.set_tag("slack");
    for (int k = 0; k < L.n_sig; ++k) {
        nlp.add_obj_quad(L.sig(k), L.sig(k), opt.R_slack);
        nlp.add_obj_linear(L.sig(k), opt.R_slack_linear);
    }
    for (int t = 0; t < N; ++t)
        for (int c = 0; c < L.n_dem; ++c) {
            nlp.add_obj_quad(L.dem(t, c), L.dem(t, c), opt.R_slack);
            nlp.add_obj_linear(L.dem(t, c), opt.R_slack_linear);
        }
    nlp.set_tag("complementarity");
    if (!strict && eps_c > 0) {
        for (int b = 0; b < L.n_blocks; ++b)
            for (const auto& [e, pe] : pairs)
                for (const auto& [l, fl] : edge_terms[static_cast<std::size_t>(e)])
                    for (const auto& [k, fk] : edge_terms[static_cast<std::size_t>(pe)])
                        nlp.add_obj_quad(L.q(b, l), L.q(b, k), eps_c * fl * fk);
    }
    nlp.set_tag("");
    nlp.finalize();
    return P;
}

ObjectiveBreakdown eval_objective(const OcpProblem& P, const VectorXd& z) {
    ObjectiveBreakdown br;
    const QuadraticNlp& nlp = *P.nlp;
    br.price = nlp.objective_part(z, "price");
    br.temp = nlp.objective_part(z, "temp");
    br.diff = nlp.objective_part(z, "diff");
    br.slack = nlp.objective_part(z, "slack");
    br.complementarity = nlp.objective_part(z, "complementarity");
    br.total = nlp.objective(z);
    br.storage = br.total - br.price - br.temp - br.diff - br.slack - br.complementarity;
    return br;
}

namespace {

// Smallest slacks that satisfy the softened rows at z.
void fit_slacks(const OcpProblem& P, VectorXd& z) {
    const auto& L = P.lay;
    for (int k = 0; k < L.n_sig; ++k) z[L.sig(k)] = 0.0;
    VectorXd g;
    P.nlp->constraints(z, g);
    // soft and storage rows follow the dynamics, loop and valve rows; each
    // carries its own slack with coefficient +-1 (storage: -1/V).
    auto J = P.nlp->jacobian(z);
    Eigen::SparseMatrix<double, Eigen::RowMajor> Jr = J;
    std::vector<double> need(static_cast<std::size_t>(L.n_sig), 0.0);
    for (int r = P.dyn_rows; r < g.size(); ++r) {
        double lo = P.nlp->g_lower()[r], hi = P.nlp->g_upper()[r];
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(Jr, r); it; ++it) {
            int c = static_cast<int>(it.col());
            if (c < L.sig_off) continue;
            double a = it.value();
            int k = c - L.sig_off;
            double s = 0.0;
            if (g[r] < lo && a > 0) s = (lo - g[r]) / a;
            if (g[r] > hi && a < 0) s = (g[r] - hi) / (-a);
            need[static_cast<std::size_t>(k)] = std::max(need[static_cast<std::size_t>(k)], s);
        }
    }
    for (int k = 0; k < L.n_sig; ++k) z[L.sig(k)] = need[static_cast<std::size_t>(k)];
}

// Propagates the model under blocked inputs in z and writes the states;
// demand slacks follow the plant's extraction limit.
void propagate_states(const SystemModel& model, const OcpProblem& P, VectorXd& z) {
    const auto& L = P.lay;
    const auto& d = P.data;
    ImplicitEulerStepper stepper(model.tg, model.inj);
    const double rc = model.fluid.rho_cp();
    const double floor = d.T_ret_min - model.fluid.T_a;
    VectorXd x = P.x0;
    for (int s = 0; s < L.N; ++s) {
        int b = L.block_of[static_cast<std::size_t>(s)];
        VectorXd qr(L.m_r);
        for (int l = 0; l < L.m_r; ++l) qr[l] = z[L.q(b, l)];
        VectorXd q = model.edge_flows(qr).cwiseMax(0.0);
        VectorXd w = VectorXd::Zero(static_cast<int>(model.inj.units.size()));
        for (int j = 0; j < L.n_prod; ++j) {
            int col = model.inj.column_of(d.producers[static_cast<std::size_t>(j)].unit);
            if (col >= 0) w[col] += 1e3 * z[L.p(b, j)];
        }
        for (const auto& [u, v] : d.fixed_injection_kW) {
            int col = model.inj.column_of(u);
            if (col >= 0) w[col] += 1e3 * v[static_cast<std::size_t>(s)];
        }
        for (int c = 0; c < L.n_dem; ++c) {
            const std::string& u = d.demand_units[static_cast<std::size_t>(c)];
            double dem = d.demand_kW(c, s);
            double qc = q[model.forward_plus(u)];
            double avail = std::max(0.0, rc * qc * (x[model.inlet_of(u)] - floor)) / 1e3;
            double served = std::min(dem, avail);
            z[L.dem(s, c)] = dem - served;
            int col = model.inj.column_of(u);
            if (col >= 0) w[col] -= 1e3 * served;
        }
        x = stepper.step(x, q, w, d.tau);
        for (int i = 0; i < L.nx; ++i)
            z[L.x(s + 1, i)] = std::clamp(x[i], P.options.x_min + 1.0, P.options.x_max - 1.0);
    }
}

}  // namespace

void complete_guess(const SystemModel& model, const OcpProblem& P, VectorXd& z) {
    propagate_states(model, P, z);
    fit_slacks(P, z);
}

VectorXd cold_start(const SystemModel& model, const OcpProblem& P) {
    const auto& L = P.lay;
    const auto& d = P.data;
    const auto& xl = P.nlp->x_lower();
    const auto& xu = P.nlp->x_upper();
    VectorXd z = VectorXd::Zero(L.n);

    // flows: midpoint of the bounds scaled into the loop inequalities
    VectorXd qr(L.m_r);
    for (int l = 0; l < L.m_r; ++l) qr[l] = 0.5 * (xl[L.q(0, l)] + xu[L.q(0, l)]);
    VectorXd feas = loop_feasibility(model.hm, 1e-3 * qr);
    double worst = 0.0;
    for (int i = 0; i < L.m_r; ++i) {
        double cap = model.hm.loop_capacity[i];
        if (cap > 0) worst = std::max(worst, (feas[i] + cap) / cap);
    }
    if (worst > 0.5) qr *= std::sqrt(0.5 / worst);
    for (int b = 0; b < L.n_blocks; ++b)
        for (int l = 0; l < L.m_r; ++l) z[L.q(b, l)] = qr[l];

    // powers: free producers at their upper bound, the rest sized to demand
    double mean_dem = 0.0;
    for (int t = 0; t < L.N; ++t) mean_dem += d.demand_kW.col(t).sum();
    mean_dem /= std::max(1, L.N);
    double fixed_mean = 0.0;
    for (const auto& [u, v] : d.fixed_injection_kW) {
        for (int t = 0; t < L.N; ++t) fixed_mean += v[static_cast<std::size_t>(t)];
    }
    fixed_mean /= std::max(1, L.N);
    double need = 1.15 * mean_dem - fixed_mean;
    for (int b = 0; b < L.n_blocks; ++b) {
        double rest = need;
        for (int j = 0; j < L.n_prod; ++j)
            if (d.producers[static_cast<std::size_t>(j)].price_weight == 0.0) rest -= xu[L.p(b, j)];
        int priced = 0;
        for (int j = 0; j < L.n_prod; ++j)
            if (d.producers[static_cast<std::size_t>(j)].price_weight != 0.0) ++priced;
        for (int j = 0; j < L.n_prod; ++j) {
            int v = L.p(b, j);
            double val = d.producers[static_cast<std::size_t>(j)].price_weight == 0.0 ? xu[v]
                                                                                       : rest / std::max(1, priced);
            z[v] = std::clamp(val, xl[v], xu[v]);
        }
    }
    propagate_states(model, P, z);
    fit_slacks(P, z);
    return z;
}

WarmStart warm_start(const SystemModel& model, const OcpProblem& P, const OcpProblem& prev,
                     const NlpSolution& prev_sol) {
    WarmStart ws;
    const auto& L = P.lay;
    const auto& Lp = prev.lay;
    if (L.n != Lp.n || L.N != Lp.N || L.nx != Lp.nx || L.n_blocks != Lp.n_blocks ||
        P.nlp->num_cons() != prev.nlp->num_cons() || prev_sol.x.size() != Lp.n) {
        ws.z = cold_start(model, P);
        return ws;
    }
    const VectorXd& zp = prev_sol.x;
    const auto& xl = P.nlp->x_lower();
    const auto& xu = P.nlp->x_upper();
    VectorXd z = VectorXd::Zero(L.n);
    auto shift_vars = [&](const VectorXd& src, VectorXd& dst) {
        dst = VectorXd::Zero(L.n);
        for (int t = 1; t <= L.N; ++t) {
            int tp = std::min(t + 1, L.N);
            for (int i = 0; i < L.nx; ++i) dst[L.x(t, i)] = src[Lp.x(tp, i)];
        }
        for (int b = 0; b < L.n_blocks; ++b) {
            int told = std::min(L.block_start[static_cast<std::size_t>(b)] + 1, L.N - 1);
            int bp = Lp.block_of[static_cast<std::size_t>(told)];
            for (int l = 0; l < L.m_r; ++l) dst[L.q(b, l)] = src[Lp.q(bp, l)];
            for (int j = 0; j < L.n_prod; ++j) dst[L.p(b, j)] = src[Lp.p(bp, j)];
        }
    };
    shift_vars(zp, z);
    for (int i = 0; i < L.n; ++i) z[i] = std::clamp(z[i], xl[i], xu[i]);
    // slacks restart from the smallest values consistent with the guess
    fit_slacks(P, z);
    ws.z = z;

    NlpSolution& du = ws.duals;
    du.x = z;
    if (prev_sol.z_lower.size() == Lp.n && prev_sol.z_upper.size() == Lp.n && prev_sol.lambda.size() == prev.nlp->num_cons()) {
        shift_vars(prev_sol.z_lower, du.z_lower);
        shift_vars(prev_sol.z_upper, du.z_upper);
        du.lambda = prev_sol.lambda;
        for (int t = 1; t <= L.N; ++t) {
            int tp = std::min(t + 1, L.N);
            for (int i = 0; i < L.nx; ++i)
                du.lambda[(t - 1) * L.nx + i] = prev_sol.lambda[(tp - 1) * L.nx + i];
        }
        ws.valid = true;
    }
    return ws;
}

Control first_control(const OcpProblem& P, const VectorXd& z) {
    Control c;
    const auto& L = P.lay;
    c.q_r.resize(L.m_r);
    for (int l = 0; l < L.m_r; ++l) c.q_r[l] = std::max(0.0, z[L.q(0, l)]);
    for (int j = 0; j < L.n_prod; ++j) c.power_kW[P.data.producers[static_cast<std::size_t>(j)].unit] = z[L.p(0, j)];
    for (const auto& [u, v] : P.data.fixed_injection_kW) c.power_kW[u] = v.front();
    return c;
}

MatrixXd state_trajectory(const OcpProblem& P, const VectorXd& z) {
    const auto& L = P.lay;
    MatrixXd X(L.N + 1, L.nx);
    X.row(0) = P.x0.transpose();
    for (int t = 1; t <= L.N; ++t)
        for (int i = 0; i < L.nx; ++i) X(t, i) = z[L.x(t, i)];
    return X;
}

MpcResult mpc_step(const SystemModel& model, const HorizonData& data, const VectorXd& x_k, MpcCache& cache,
                   const OcpOptions& options, const NlpLimits& limits) {
    auto problem = std::make_unique<OcpProblem>(build_ocp(model, data, x_k, options));
    MpcResult res;
    VectorXd guess;
    const NlpSolution* duals = nullptr;
    WarmStart ws;
    if (cache.has_solution && cache.problem) {
        ws = warm_start(model, *problem, *cache.problem, cache.solution);
        guess = ws.z;
        if (ws.valid) duals = &ws.duals;
    } else {
        guess = cold_start(model, *problem);
    }
    res.solution = solve_nlp(*problem->nlp, guess, limits, duals);
    res.breakdown = eval_objective(*problem, res.solution.x);
    res.solution.breakdown = {{"price", res.breakdown.price},     {"temp", res.breakdown.temp},
                              {"diff", res.breakdown.diff},       {"storage", res.breakdown.storage},
                              {"slack", res.breakdown.slack},     {"complementarity", res.breakdown.complementarity}};
    res.success = res.solution.usable(1e-4);
    spdlog::debug("mpc solve: status={} iter={} time={:.2f}s obj={:.4f} price={:.4f} slack={:.4f} viol={:.2e}",
                  to_string(res.solution.status), res.solution.iterations, res.solution.wall_time,
                  res.breakdown.total, res.breakdown.price, res.breakdown.slack, res.solution.max_violation);
    if (res.success) {
        res.control = first_control(*problem, res.solution.x);
        cache.problem = std::move(problem);
        cache.solution = res.solution;
        cache.has_solution = true;
    } else {
        cache.has_solution = false;
        cache.problem.reset();
    }
    return res;
}

}  // namespace dhn
