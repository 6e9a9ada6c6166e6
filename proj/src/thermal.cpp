#include "dhn/thermal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dhn {

namespace {

void build_adjacency(ThermalGraph& tg) {
    const int n = tg.num_nodes();
    tg.incoming_offsets.assign(static_cast<std::size_t>(n) + 1, 0);
    tg.outgoing_offsets.assign(static_cast<std::size_t>(n) + 1, 0);
    for (const auto& e : tg.edges) {
        ++tg.incoming_offsets[static_cast<std::size_t>(e.head) + 1];
        ++tg.outgoing_offsets[static_cast<std::size_t>(e.tail) + 1];
    }
    for (int i = 0; i < n; ++i) {
        tg.incoming_offsets[i + 1] += tg.incoming_offsets[i];
        tg.outgoing_offsets[i + 1] += tg.outgoing_offsets[i];
    }
    tg.incoming.assign(tg.edges.size(), -1);
    tg.outgoing.assign(tg.edges.size(), -1);
    std::vector<int> fi(tg.incoming_offsets.begin(), tg.incoming_offsets.end() - 1);
    std::vector<int> fo(tg.outgoing_offsets.begin(), tg.outgoing_offsets.end() - 1);
    for (std::size_t k = 0; k < tg.edges.size(); ++k) {
        tg.incoming[fi[tg.edges[k].head]++] = static_cast<int>(k);
        tg.outgoing[fo[tg.edges[k].tail]++] = static_cast<int>(k);
    }
}

}  // namespace

ThermalGraph thermal_graph_from_edges(int num_junctions, const Eigen::VectorXd& V,
                                      const Eigen::VectorXd& alpha, std::vector<RefinedEdge> edges) {
    ThermalGraph tg;
    tg.num_junctions = num_junctions;
    tg.num_cells = static_cast<int>(V.size()) - num_junctions;
    tg.V = V;
    tg.alpha = alpha;
    tg.edges = std::move(edges);
    tg.cell_edge.assign(static_cast<std::size_t>(tg.num_cells), -1);
    for (int i = 0; i < num_junctions; ++i)
        if (V(i) != 0.0) throw std::invalid_argument("junction nodes must have zero volume");
    build_adjacency(tg);
    return tg;
}

ThermalGraph refine_mesh(const NetworkSpec& spec, const ExpandedGraph& g, const std::vector<int>& l_x,
                         const Fluid& fluid) {
    const int ne = static_cast<int>(spec.edges.size());
    if (static_cast<int>(l_x.size()) != ne) throw std::invalid_argument("l_x needs one entry per edge");
    ThermalGraph tg;
    tg.num_junctions = static_cast<int>(g.num_nodes());
    tg.cells_per_edge = l_x;
    tg.chain.resize(static_cast<std::size_t>(ne));
    int next = tg.num_junctions;
    for (int i = 0; i < ne; ++i) {
        if (l_x[i] < 0) throw std::invalid_argument("negative cell count");
        for (int k = 0; k < l_x[i]; ++k) tg.chain[i].push_back(next++);
    }
    tg.num_cells = next - tg.num_junctions;
    const int n = next;
    tg.V = Eigen::VectorXd::Zero(n);
    tg.alpha = Eigen::VectorXd::Zero(n);
    tg.cell_edge.assign(static_cast<std::size_t>(tg.num_cells), -1);
    const double pi = std::numbers::pi;
    for (int i = 0; i < ne; ++i) {
        const Edge& e = spec.edges[i];
        for (int c : tg.chain[i]) {
            double vol = pi * e.diameter * e.diameter / 4.0 * e.length / l_x[i];
            tg.V(c) = vol;
            tg.alpha(c) = 4.0 * e.heat_transfer * vol / (fluid.rho_cp() * e.diameter);
            tg.cell_edge[static_cast<std::size_t>(c - tg.num_junctions)] = i;
        }
    }
    for (std::size_t j = 0; j < g.edges.size(); ++j) {
        const auto& de = g.edges[j];
        std::vector<int> path;
        path.push_back(de.tail);
        const auto& ch = tg.chain[static_cast<std::size_t>(de.original)];
        if (!de.reverse)
            path.insert(path.end(), ch.begin(), ch.end());
        else
            path.insert(path.end(), ch.rbegin(), ch.rend());
        path.push_back(de.head);
        for (std::size_t k = 0; k + 1 < path.size(); ++k)
            tg.edges.push_back({path[k], path[k + 1], static_cast<int>(j)});
    }
    build_adjacency(tg);
    return tg;
}

Eigen::VectorXd refined_flows(const ThermalGraph& tg, const Eigen::VectorXd& q) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(tg.edges.size()));
    for (std::size_t k = 0; k < tg.edges.size(); ++k) out(static_cast<Eigen::Index>(k)) = q(tg.edges[k].source);
    return out;
}

Eigen::SparseMatrix<double> assemble_A(const ThermalGraph& tg, const Eigen::VectorXd& q) {
    const int n = tg.num_nodes();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(tg.edges.size() * 2 + static_cast<std::size_t>(n));
    for (const auto& e : tg.edges) {
        double qe = q(e.source);
        if (qe < 0) throw std::domain_error("negative flow on a directed edge");
        trip.emplace_back(e.head, e.tail, qe);
        trip.emplace_back(e.tail, e.tail, -qe);
    }
    for (int i = 0; i < n; ++i) trip.emplace_back(i, i, -tg.alpha(i));
    Eigen::SparseMatrix<double> A(n, n);
    A.setFromTriplets(trip.begin(), trip.end());
    return A;
}

int InjectionLayout::column_of(const std::string& unit) const {
    for (std::size_t k = 0; k < units.size(); ++k)
        if (units[k] == unit) return static_cast<int>(k);
    return -1;
}

int unit_cell(const NetworkSpec& spec, const ThermalGraph& tg, const std::string& unit) {
    const Unit* u = spec.find_unit(unit);
    if (!u) throw ConfigError("unknown unit '" + unit + "'");
    const auto& ch = tg.chain[static_cast<std::size_t>(spec.edge_index(u->edge))];
    if (ch.empty()) throw ConfigError("unit '" + unit + "' has no exchanger cell");
    return ch.back();
}

InjectionLayout make_injection_layout(const NetworkSpec& spec, const ThermalGraph& tg, const Fluid& fluid) {
    InjectionLayout inj;
    std::vector<std::pair<int, std::string>> cols;
    for (const auto& u : spec.units) {
        if (u.kind == UnitKind::Storage) continue;
        cols.push_back({unit_cell(spec, tg, u.name), u.name});
    }
    std::sort(cols.begin(), cols.end());
    std::vector<Eigen::Triplet<double>> trip;
    for (std::size_t k = 0; k < cols.size(); ++k) {
        inj.rows.push_back(cols[k].first);
        inj.units.push_back(cols[k].second);
        trip.emplace_back(cols[k].first, static_cast<int>(k), 1.0 / fluid.rho_cp());
    }
    inj.B.resize(tg.num_nodes(), static_cast<Eigen::Index>(cols.size()));
    inj.B.setFromTriplets(trip.begin(), trip.end());
    return inj;
}

ImplicitEulerStepper::ImplicitEulerStepper(const ThermalGraph& tg, const InjectionLayout& inj,
                                           double eps_junction)
    : tg_(tg), inj_(inj), eps_(eps_junction) {
    const int n = tg.num_nodes();
    std::vector<Eigen::Triplet<double>> trip;
    for (int i = 0; i < n; ++i) trip.emplace_back(i, i, 1.0);
    for (const auto& e : tg.edges)
        if (e.head != e.tail) trip.emplace_back(e.head, e.tail, 1.0);
    M_.resize(n, n);
    M_.setFromTriplets(trip.begin(), trip.end());
    M_.makeCompressed();
    auto pos = [&](int r, int c) {
        for (int p = M_.outerIndexPtr()[c]; p < M_.outerIndexPtr()[c + 1]; ++p)
            if (M_.innerIndexPtr()[p] == r) return p;
        return -1;
    };
    diag_pos_.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) diag_pos_[static_cast<std::size_t>(i)] = pos(i, i);
    for (const auto& e : tg.edges) edge_pos_.push_back(e.head != e.tail ? pos(e.head, e.tail) : -1);
}

Eigen::VectorXd ImplicitEulerStepper::step(const Eigen::VectorXd& x, const Eigen::VectorXd& q,
                                           const Eigen::VectorXd& w, double tau) {
    const int n = tg_.num_nodes();
    double* val = M_.valuePtr();
    std::fill(val, val + M_.nonZeros(), 0.0);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd out_flow = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < tg_.edges.size(); ++k) {
        const auto& e = tg_.edges[k];
        double qe = q(e.source);
        if (qe < 0) throw std::domain_error("negative flow on a directed edge");
        out_flow(e.tail) += qe;
        if (edge_pos_[k] >= 0) {
            double s = tg_.is_junction(e.head) ? 1.0 : tau;
            val[edge_pos_[k]] -= s * qe;
        } else {
            out_flow(e.tail) -= qe;
        }
    }
    Eigen::VectorXd bw = inj_.B * w;
    for (int i = 0; i < n; ++i) {
        if (tg_.is_junction(i)) {
            double d = out_flow(i) + eps_;
            if (d <= 0) throw DegenerateJunction("junction " + std::to_string(i) + " has no inflow");
            val[diag_pos_[static_cast<std::size_t>(i)]] += d;
            rhs(i) = eps_ * x(i);
        } else {
            val[diag_pos_[static_cast<std::size_t>(i)]] += tg_.V(i) + tau * (out_flow(i) + tg_.alpha(i));
            rhs(i) = tg_.V(i) * x(i) + tau * bw(i);
        }
    }
    if (!analyzed_) {
        lu_.analyzePattern(M_);
        analyzed_ = true;
    }
    lu_.factorize(M_);
    if (lu_.info() != Eigen::Success) throw DegenerateJunction("implicit Euler system is singular");
    return lu_.solve(rhs);
}

Eigen::VectorXd step_implicit_euler(const ThermalGraph& tg, const InjectionLayout& inj, const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& q, const Eigen::VectorXd& w, double tau,
                                    double eps_junction) {
    ImplicitEulerStepper s(tg, inj, eps_junction);
    return s.step(x, q, w, tau);
}

std::vector<CflEntry> check_cfl(const ThermalGraph& tg, const Eigen::VectorXd& q, double tau) {
    Eigen::VectorXd inflow = Eigen::VectorXd::Zero(tg.num_nodes());
    for (const auto& e : tg.edges) inflow(e.head) += q(e.source);
    std::vector<CflEntry> out;
    for (int i = tg.num_junctions; i < tg.num_nodes(); ++i) {
        CflEntry c;
        c.cell = i;
        c.ratio = inflow(i) * tau / tg.V(i);
        c.flagged = c.ratio > 1.0 + 1e-12;
        out.push_back(c);
    }
    return out;
}

FgResidual evaluate_f_g(const ThermalGraph& tg, const InjectionLayout& inj, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& x_next, const Eigen::VectorXd& q, const Eigen::VectorXd& w,
                        double tau, double eps_junction) {
    const int n = tg.num_nodes();
    Eigen::VectorXd adv = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd out_flow = Eigen::VectorXd::Zero(n);
    for (const auto& e : tg.edges) {
        double qe = q(e.source);
        adv(e.head) += qe * x_next(e.tail);
        out_flow(e.tail) += qe;
    }
    Eigen::VectorXd bw = inj.B * w;
    FgResidual r;
    r.f.resize(tg.num_cells);
    r.g.resize(tg.num_junctions);
    for (int i = 0; i < n; ++i) {
        if (tg.is_junction(i)) {
            r.g(i) = adv(i) - (out_flow(i) + eps_junction) * x_next(i) + eps_junction * x(i);
        } else {
            double rate = adv(i) - (out_flow(i) + tg.alpha(i)) * x_next(i) + bw(i);
            r.f(i - tg.num_junctions) = tg.V(i) * (x_next(i) - x(i)) - tau * rate;
        }
    }
    return r;
}

double junction_mix(const std::vector<double>& flows, const std::vector<double>& temps) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < flows.size(); ++i) {
        num += flows[i] * temps[i];
        den += flows[i];
    }
    if (den <= 0) throw DegenerateJunction("junction has no inflow");
    return num / den;
}

}  // namespace dhn
