#include "dhn/network.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

namespace dhn {

const char* to_string(UnitKind kind) {
    switch (kind) {
    case UnitKind::Producer: return "producer";
    case UnitKind::Consumer: return "consumer";
    case UnitKind::Prosumer: return "prosumer";
    case UnitKind::Storage: return "storage";
    }
    return "?";
}

UnitKind unit_kind_from_string(const std::string& s) {
    if (s == "producer") return UnitKind::Producer;
    if (s == "consumer") return UnitKind::Consumer;
    if (s == "prosumer") return UnitKind::Prosumer;
    if (s == "storage") return UnitKind::Storage;
    throw ConfigError("unknown unit kind '" + s + "'");
}

int NetworkSpec::edge_index(const std::string& id) const {
    for (std::size_t i = 0; i < edges.size(); ++i)
        if (edges[i].id == id) return static_cast<int>(i);
    return -1;
}

int NetworkSpec::node_index(const std::string& id) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i].id == id) return static_cast<int>(i);
    return -1;
}

const Unit* NetworkSpec::find_unit(const std::string& name) const {
    for (const auto& u : units)
        if (u.name == name) return &u;
    return nullptr;
}

std::vector<const Unit*> NetworkSpec::units_of(UnitKind kind) const {
    std::vector<const Unit*> out;
    for (const auto& u : units)
        if (u.kind == kind) out.push_back(&u);
    return out;
}

void NetworkSpec::validate() const {
    std::set<std::string> ids;
    for (const auto& n : nodes) {
        if (!ids.insert(n.id).second) throw ConfigError("duplicate node '" + n.id + "'");
    }
    std::set<std::string> eids;
    std::set<std::pair<std::string, std::string>> pairs;
    for (const auto& e : edges) {
        if (!eids.insert(e.id).second) throw ConfigError("duplicate edge '" + e.id + "'");
        if (!ids.count(e.tail) || !ids.count(e.head))
            throw ConfigError("edge '" + e.id + "' references an unknown node");
        if (e.tail == e.head) throw ConfigError("edge '" + e.id + "' is a self loop");
        if (!(e.length > 0 && e.diameter > 0 && e.friction > 0 && e.heat_transfer >= 0))
            throw ConfigError("edge '" + e.id + "' has non-positive geometry");
        if (e.q_min > e.q_max || !(e.q_max > 0))
            throw ConfigError("edge '" + e.id + "' has invalid flow bounds");
        if (e.pump_capacity < 0 || e.pump_capacity_reverse < 0)
            throw ConfigError("edge '" + e.id + "' has negative pump capacity");
        if (e.has_valve && !(e.valve_coeff > 0))
            throw ConfigError("edge '" + e.id + "' has a valve without coefficient");
        auto key = std::make_pair(std::min(e.tail, e.head), std::max(e.tail, e.head));
        if (!pairs.insert(key).second)
            throw ConfigError("parallel edges between '" + e.tail + "' and '" + e.head + "'");
    }
    for (const auto& n : nodes) {
        auto it = mirror.find(n.id);
        if (it == mirror.end()) throw ConfigError("missing mirror entry for node '" + n.id + "'");
        auto back = mirror.find(it->second);
        if (back == mirror.end() || back->second != n.id)
            throw ConfigError("mirror map is not an involution at '" + n.id + "'");
    }
    for (const auto& e : edges) {
        const std::string mt = mirror.at(e.head);
        const std::string mh = mirror.at(e.tail);
        bool found = false;
        for (const auto& f : edges) {
            if (f.tail == mt && f.head == mh && f.bidirectional() == e.bidirectional()) {
                found = true;
                break;
            }
        }
        if (!found) throw ConfigError("edge '" + e.id + "' has no mirrored counterpart");
    }
    std::set<std::string> unames;
    for (const auto& u : units) {
        if (!unames.insert(u.name).second) throw ConfigError("duplicate unit '" + u.name + "'");
        int k = edge_index(u.edge);
        if (k < 0) throw ConfigError("unit '" + u.name + "' references unknown edge '" + u.edge + "'");
        if (edges[k].kind != EdgeKind::Exchanger)
            throw ConfigError("unit '" + u.name + "' is not attached to an exchanger edge");
        bool bidir_needed = u.kind == UnitKind::Prosumer || u.kind == UnitKind::Storage;
        if (bidir_needed && !edges[k].bidirectional())
            throw ConfigError("unit '" + u.name + "' needs a bidirectional exchanger edge");
    }
}

int ExpandedGraph::find_edge(int tail, int head) const {
    for (std::size_t j = 0; j < edges.size(); ++j)
        if (edges[j].tail == tail && edges[j].head == head) return static_cast<int>(j);
    return -1;
}

namespace {

bool strongly_connected(const ExpandedGraph& g) {
    const int n = static_cast<int>(g.num_nodes());
    if (n == 0) return false;
    auto reach = [&](bool forward) {
        std::vector<char> seen(n, 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            for (const auto& e : g.edges) {
                int from = forward ? e.tail : e.head;
                int to = forward ? e.head : e.tail;
                if (from == v && !seen[to]) {
                    seen[to] = 1;
                    stack.push_back(to);
                }
            }
        }
        return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
    };
    return reach(true) && reach(false);
}

}  // namespace

ExpandedGraph expand_bidirectional(const NetworkSpec& spec) {
    spec.validate();
    ExpandedGraph g;
    for (const auto& n : spec.nodes) {
        g.node_index[n.id] = static_cast<int>(g.node_ids.size());
        g.node_ids.push_back(n.id);
    }
    const int ne = static_cast<int>(spec.edges.size());
    g.forward_of.assign(ne, -1);
    g.reverse_of.assign(ne, -1);
    for (int i = 0; i < ne; ++i) {
        const auto& e = spec.edges[i];
        g.forward_of[i] = static_cast<int>(g.edges.size());
        g.edges.push_back({g.node_index.at(e.tail), g.node_index.at(e.head), i, false, e.pump_capacity});
    }
    for (int i = 0; i < ne; ++i) {
        const auto& e = spec.edges[i];
        if (!e.bidirectional()) continue;
        g.reverse_of[i] = static_cast<int>(g.edges.size());
        g.edges.push_back({g.node_index.at(e.head), g.node_index.at(e.tail), i, true, e.pump_capacity_reverse});
    }
    const int m = static_cast<int>(g.edges.size());
    const int n = static_cast<int>(g.node_ids.size());
    g.partner.assign(m, -1);
    for (int i = 0; i < ne; ++i) {
        if (g.reverse_of[i] >= 0) {
            g.partner[g.forward_of[i]] = g.reverse_of[i];
            g.partner[g.reverse_of[i]] = g.forward_of[i];
        }
    }
    g.incidence = Eigen::MatrixXd::Zero(n, m);
    g.adjacency = Eigen::MatrixXi::Zero(n, n);
    for (int j = 0; j < m; ++j) {
        g.incidence(g.edges[j].tail, j) = -1.0;
        g.incidence(g.edges[j].head, j) = 1.0;
        g.adjacency(g.edges[j].tail, g.edges[j].head) = 1;
    }
    g.mirror_node.assign(n, -1);
    for (int v = 0; v < n; ++v) g.mirror_node[v] = g.node_index.at(spec.mirror.at(g.node_ids[v]));
    g.mirror_edge.assign(m, -1);
    for (int j = 0; j < m; ++j) {
        int k = g.find_edge(g.mirror_node[g.edges[j].head], g.mirror_node[g.edges[j].tail]);
        if (k < 0) throw StructuralError("expanded edge without mirror image");
        g.mirror_edge[j] = k;
    }
    if (!strongly_connected(g)) throw StructuralError("network graph is not strongly connected");
    return g;
}

std::vector<Cycle> enumerate_directed_cycles(const ExpandedGraph& g, std::size_t cap) {
    const int n = static_cast<int>(g.num_nodes());
    std::vector<std::vector<int>> out_edges(n);
    for (std::size_t j = 0; j < g.edges.size(); ++j) out_edges[g.edges[j].tail].push_back(static_cast<int>(j));

    std::vector<Cycle> result;
    std::vector<char> on_path(n, 0);
    std::vector<int> path_nodes;
    std::vector<int> path_edges;

    // Cycles are rooted at their smallest node, so each is found once.
    std::function<void(int, int)> dfs = [&](int start, int v) {
        for (int j : out_edges[v]) {
            int w = g.edges[j].head;
            if (w == start) {
                if (result.size() >= cap)
                    throw CycleOverflow("directed cycle count exceeds cap " + std::to_string(cap));
                Cycle c;
                c.nodes = path_nodes;
                c.edges = path_edges;
                c.edges.push_back(j);
                result.push_back(std::move(c));
            } else if (w > start && !on_path[w]) {
                on_path[w] = 1;
                path_nodes.push_back(w);
                path_edges.push_back(j);
                dfs(start, w);
                path_nodes.pop_back();
                path_edges.pop_back();
                on_path[w] = 0;
            }
        }
    };
    for (int s = 0; s < n; ++s) {
        on_path[s] = 1;
        path_nodes = {s};
        path_edges.clear();
        dfs(s, s);
        on_path[s] = 0;
    }
    return result;
}

std::vector<Cycle> filter_cycles(const ExpandedGraph& g, const std::vector<Cycle>& cycles) {
    if (g.mirror_edge.size() != g.edges.size()) throw ConfigError("mirror pairing unavailable");
    std::vector<Cycle> kept;
    for (const auto& c : cycles) {
        if (c.nodes.size() <= 2) continue;
        std::set<int> es(c.edges.begin(), c.edges.end());
        bool symmetric = true;
        for (int j : c.edges) {
            if (!es.count(g.mirror_edge[j])) {
                symmetric = false;
                break;
            }
        }
        if (symmetric) kept.push_back(c);
    }
    return kept;
}

Eigen::MatrixXd reduced_loop_matrix(const ExpandedGraph& g, const std::vector<Cycle>& cycles) {
    Eigen::MatrixXd F_r = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cycles.size()),
                                                static_cast<Eigen::Index>(g.num_edges()));
    for (std::size_t i = 0; i < cycles.size(); ++i)
        for (int j : cycles[i].edges) F_r(static_cast<Eigen::Index>(i), j) = 1.0;
    return F_r;
}

FundamentalLoops fundamental_loop_matrix(const Eigen::MatrixXd& F_r) {
    FundamentalLoops out;
    if (F_r.rows() == 0) return out;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(F_r.transpose());
    const Eigen::MatrixXd& R = qr.matrixR();
    const Eigen::Index k = std::min(R.rows(), R.cols());
    const double r11 = std::abs(R(0, 0));
    int rank = 0, loose = 0, strict = 0;
    for (Eigen::Index i = 0; i < k; ++i) {
        double v = std::abs(R(i, i));
        if (v > 1e-10 * r11) ++rank;
        if (v > 1e-12 * r11) ++loose;
        if (v > 1e-8 * r11) ++strict;
    }
    if (loose != strict) {
        out.rank_ambiguous = true;
        out.rank_upper = loose;
        spdlog::warn("loop matrix rank is ambiguous: candidates {} and {}", strict, loose);
    }
    out.m_f = rank;
    const auto& perm = qr.colsPermutation().indices();
    out.F.resize(rank, F_r.cols());
    for (int i = 0; i < rank; ++i) {
        out.rows.push_back(perm(i));
        out.F.row(i) = F_r.row(perm(i));
    }
    return out;
}

LoopStructure build_loop_structure(const ExpandedGraph& g, std::size_t cap) {
    LoopStructure ls;
    ls.cycles = filter_cycles(g, enumerate_directed_cycles(g, cap));
    if (ls.cycles.empty()) throw StructuralError("network has no symmetric supply/return cycle");
    ls.F_r = reduced_loop_matrix(g, ls.cycles);
    auto fl = fundamental_loop_matrix(ls.F_r);
    ls.F = fl.F;
    ls.m_r = static_cast<int>(ls.cycles.size());
    ls.m_f = fl.m_f;
    ls.pivot_rows = fl.rows;
    return ls;
}

namespace {

// Alternating projection between {psi + range(Theta)} and the nonnegative
// orthant shifted by `margin`. Returns z with psi + Theta z >= 0 if found.
bool nonneg_in_affine(const Eigen::VectorXd& psi, const Eigen::MatrixXd& Theta, double margin,
                      Eigen::VectorXd& z) {
    const double scale = std::max(1.0, psi.cwiseAbs().maxCoeff());
    Eigen::VectorXd v = psi.cwiseMax(margin * scale);
    for (int it = 0; it < 20000; ++it) {
        Eigen::VectorXd a = psi + Theta * v;
        if (a.minCoeff() >= -1e-13 * scale) {
            z = Theta * v;
            return true;
        }
        v = a.cwiseMax(margin * scale);
    }
    return false;
}

}  // namespace

ValveReport check_valve_assumption(const Eigen::MatrixXd& F, const std::vector<int>& valve_edges) {
    ValveReport rep;
    rep.valve_edges = valve_edges;
    const Eigen::Index m_f = F.rows();
    const Eigen::Index ne = F.cols();
    const Eigen::Index nv = static_cast<Eigen::Index>(valve_edges.size());
    rep.Pi = Eigen::MatrixXd::Zero(ne, nv);
    for (Eigen::Index k = 0; k < nv; ++k) {
        if (valve_edges[k] < 0 || valve_edges[k] >= ne) throw ConfigError("valve column out of range");
        rep.Pi(valve_edges[k], k) = 1.0;
    }
    if (nv == 0) {
        rep.rank = 0;
        rep.Psi = Eigen::MatrixXd::Zero(0, ne);
        rep.Theta = Eigen::MatrixXd::Zero(0, 0);
        for (Eigen::Index i = 0; i < m_f; ++i) rep.deficient_loops.push_back(static_cast<int>(i));
        rep.assumption_satisfied = m_f == 0;
        return rep;
    }
    Eigen::MatrixXd FP = F * rep.Pi;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(FP, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    const double tol = 1e-10 * std::max(1.0, s.size() ? s(0) : 0.0);
    int rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > tol) ++rank;
    rep.rank = rank;
    Eigen::MatrixXd pinv = Eigen::MatrixXd::Zero(nv, m_f);
    for (int i = 0; i < rank; ++i)
        pinv += svd.matrixV().col(i) * (1.0 / s(i)) * svd.matrixU().col(i).transpose();
    rep.Psi = pinv * F;
    rep.Theta = Eigen::MatrixXd::Identity(nv, nv) - pinv * FP;
    rep.m_theta = static_cast<int>(nv) - rank;
    for (Eigen::Index i = 0; i < m_f; ++i) {
        for (Eigen::Index k = rank; k < m_f; ++k) {
            if (std::abs(svd.matrixU()(i, k)) > 1e-8) {
                rep.deficient_loops.push_back(static_cast<int>(i));
                break;
            }
        }
    }
    rep.Z2 = Eigen::MatrixXd::Zero(nv, ne);
    bool all_found = true;
    for (Eigen::Index j = 0; j < ne; ++j) {
        Eigen::VectorXd psi = rep.Psi.col(j);
        if (psi.minCoeff() >= -1e-14) continue;
        Eigen::VectorXd z;
        if (nonneg_in_affine(psi, rep.Theta, 1e-6, z) || nonneg_in_affine(psi, rep.Theta, 0.0, z)) {
            rep.Z2.col(j) = z;
        } else {
            all_found = false;
        }
    }
    Eigen::MatrixXd M = rep.Psi + rep.Theta * rep.Z2;
    rep.z2_min_entry = M.size() ? M.minCoeff() : 0.0;
    rep.z2_nonnegative = all_found && rep.z2_min_entry >= -1e-10;
    rep.assumption_satisfied = rank == m_f && rep.z2_nonnegative;
    return rep;
}

std::vector<int> valve_columns(const NetworkSpec& spec, const ExpandedGraph& g) {
    std::vector<int> cols;
    for (std::size_t i = 0; i < spec.edges.size(); ++i) {
        if (!spec.edges[i].has_valve) continue;
        cols.push_back(g.forward_of[i]);
        if (g.reverse_of[i] >= 0) cols.push_back(g.reverse_of[i]);
    }
    std::sort(cols.begin(), cols.end());
    return cols;
}

std::vector<std::string> suggest_valve_placement(const NetworkSpec& spec) {
    spec.validate();
    std::map<std::string, bool> supply;
    for (const auto& n : spec.nodes) supply[n.id] = n.supply;
    std::set<std::string> unit_nodes;
    std::set<std::string> producer_nodes;
    for (const auto& u : spec.units) {
        const auto& e = spec.edges[spec.edge_index(u.edge)];
        const std::string& sn = supply[e.head] ? e.head : e.tail;
        unit_nodes.insert(sn);
        if (u.kind == UnitKind::Producer) producer_nodes.insert(sn);
    }
    // Possible inflow/outflow pipes of each supply node.
    std::map<std::string, std::vector<std::pair<int, std::string>>> ins, outs;
    std::map<std::string, std::set<int>> incident;
    for (std::size_t i = 0; i < spec.edges.size(); ++i) {
        const auto& e = spec.edges[i];
        if (e.kind != EdgeKind::Pipe || !supply[e.tail] || !supply[e.head]) continue;
        int k = static_cast<int>(i);
        outs[e.tail].push_back({k, e.head});
        ins[e.head].push_back({k, e.tail});
        if (e.bidirectional()) {
            outs[e.head].push_back({k, e.tail});
            ins[e.tail].push_back({k, e.head});
        }
        incident[e.tail].insert(k);
        incident[e.head].insert(k);
    }
    auto is_junction = [&](const std::string& v) { return supply[v] && !unit_nodes.count(v); };
    auto splitting = [&](const std::string& v) { return is_junction(v) && outs[v].size() >= 2; };
    auto merging = [&](const std::string& v) { return is_junction(v) && ins[v].size() >= 2; };

    std::set<int> valved;
    for (const auto& n : spec.nodes) {
        const std::string& v = n.id;
        if (!is_junction(v)) continue;
        if (incident[v].size() > 3)
            throw StructuralError("junction '" + v + "' has degree > 3; valve rule unsupported");
    }
    for (const auto& n : spec.nodes) {
        const std::string& v = n.id;
        if (!is_junction(v)) continue;
        if (splitting(v)) {
            for (const auto& [k, w] : outs[v]) {
                if (splitting(w) && !merging(w)) continue;
                valved.insert(k);
            }
        }
        if (merging(v)) {
            for (const auto& [k, w] : ins[v]) valved.insert(k);
        }
    }
    for (const auto& p : producer_nodes)
        for (const auto& [k, w] : outs[p]) valved.insert(k);

    std::vector<std::string> out;
    for (int k : valved) out.push_back(spec.edges[k].id);
    return out;
}

AllCycles enumerate_all_cycles(const ExpandedGraph& g, const Eigen::MatrixXd& F, std::size_t cap) {
    const int n = static_cast<int>(g.num_nodes());
    const int m = static_cast<int>(g.num_edges());
    std::vector<std::vector<std::pair<int, int>>> nbr(n);  // (edge, sign)
    for (int j = 0; j < m; ++j) {
        nbr[g.edges[j].tail].push_back({j, +1});
        nbr[g.edges[j].head].push_back({j, -1});
    }
    AllCycles out;
    std::set<std::vector<int>> seen;
    std::vector<char> on_path(n, 0);
    std::vector<char> used(m, 0);
    std::vector<int> pe, ps;

    Eigen::MatrixXd Ft = F.transpose();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Ft);
    auto in_rowspace = [&](const Eigen::VectorXd& v) {
        if (F.rows() == 0) return v.norm() == 0.0;
        Eigen::VectorXd coef = qr.solve(v);
        return (Ft * coef - v).norm() <= 1e-9 * std::max(1.0, v.norm());
    };

    std::size_t total = 0;
    std::function<void(int, int)> dfs = [&](int start, int v) {
        for (auto [j, s] : nbr[v]) {
            if (used[j]) continue;
            int w = s > 0 ? g.edges[j].head : g.edges[j].tail;
            if (w == start) {
                std::vector<int> key = pe;
                key.push_back(j);
                std::sort(key.begin(), key.end());
                if (!seen.insert(key).second) continue;
                if (++total > cap) throw CycleOverflow("undirected cycle count exceeds cap");
                SignedCycle c;
                c.edges = pe;
                c.signs = ps;
                c.edges.push_back(j);
                c.signs.push_back(s);
                Eigen::VectorXd vec = Eigen::VectorXd::Zero(m);
                for (std::size_t i = 0; i < c.edges.size(); ++i) vec(c.edges[i]) += c.signs[i];
                if (in_rowspace(vec))
                    out.cycles.push_back(std::move(c));
                else
                    ++out.excluded;
            } else if (w > start && !on_path[w]) {
                on_path[w] = 1;
                used[j] = 1;
                pe.push_back(j);
                ps.push_back(s);
                dfs(start, w);
                pe.pop_back();
                ps.pop_back();
                used[j] = 0;
                on_path[w] = 0;
            }
        }
    };
    for (int s = 0; s < n; ++s) {
        on_path[s] = 1;
        dfs(s, s);
        on_path[s] = 0;
    }
    return out;
}

}  // namespace dhn
