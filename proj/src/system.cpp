#include "dhn/system.hpp"

#include <stdexcept>

namespace dhn {

int SystemModel::edge_of(const std::string& unit) const {
    const Unit* u = spec.find_unit(unit);
    if (!u) throw ConfigError("unknown unit '" + unit + "'");
    return spec.edge_index(u->edge);
}

int SystemModel::cell_of(const std::string& unit) const { return unit_cell(spec, tg, unit); }

int SystemModel::inlet_of(const std::string& unit) const {
    int e = edge_of(unit);
    const auto& ch = tg.chain[static_cast<std::size_t>(e)];
    if (ch.size() >= 2) return ch[ch.size() - 2];
    return g.edges[static_cast<std::size_t>(g.forward_of[static_cast<std::size_t>(e)])].tail;
}

int SystemModel::supply_node_of(const std::string& unit) const {
    int e = edge_of(unit);
    return g.edges[static_cast<std::size_t>(g.forward_of[static_cast<std::size_t>(e)])].tail;
}

int SystemModel::forward_plus(const std::string& unit) const {
    return g.forward_of[static_cast<std::size_t>(edge_of(unit))];
}

int SystemModel::reverse_plus(const std::string& unit) const {
    return g.reverse_of[static_cast<std::size_t>(edge_of(unit))];
}

std::vector<std::string> SystemModel::demand_units() const {
    std::vector<std::string> out;
    for (const auto& u : spec.units)
        if (u.kind == UnitKind::Consumer || u.kind == UnitKind::Prosumer) out.push_back(u.name);
    return out;
}

std::vector<std::string> SystemModel::units_of_kind(UnitKind kind) const {
    std::vector<std::string> out;
    for (const auto& u : spec.units)
        if (u.kind == kind) out.push_back(u.name);
    return out;
}

std::string SystemModel::storage_unit() const {
    auto s = units_of_kind(UnitKind::Storage);
    return s.empty() ? std::string() : s.front();
}

std::vector<int> SystemModel::cycles_using(int e_plus) const {
    std::vector<int> out;
    for (int i = 0; i < hm.F_r.rows(); ++i)
        if (hm.F_r(i, e_plus) != 0.0) out.push_back(i);
    return out;
}

Eigen::VectorXd SystemModel::edge_flows(const Eigen::VectorXd& q_r_lps) const {
    return 1e-3 * (hm.F_r.transpose() * q_r_lps);
}

std::shared_ptr<SystemModel> make_system_model(const NetworkSpec& spec, const std::vector<int>& l_x,
                                               const Fluid& fluid, int cells_scale) {
    if (cells_scale < 1) throw std::invalid_argument("cells_scale must be >= 1");
    spec.validate();
    auto m = std::make_shared<SystemModel>();
    m->spec = spec;
    m->fluid = fluid;
    m->l_x = l_x;
    for (auto& v : m->l_x) v *= cells_scale;
    m->g = expand_bidirectional(m->spec);
    m->loops = build_loop_structure(m->g);
    m->hm = make_hydraulic_model(m->spec, m->g, m->loops, fluid.rho);
    m->tg = refine_mesh(m->spec, m->g, m->l_x, fluid);
    m->inj = make_injection_layout(m->spec, m->tg, fluid);
    return m;
}

}  // namespace dhn
