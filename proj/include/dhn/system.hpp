#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dhn/hydraulics.hpp"
#include "dhn/network.hpp"
#include "dhn/thermal.hpp"

namespace dhn {

// Actuation applied over one control interval.
struct Control {
    Eigen::VectorXd q_r;                     // cycle flows, L/s
    std::map<std::string, double> power_kW;  // producer injections
    bool fallback = false;
};

// Network, loops, hydraulics and a refined thermal mesh built together.
struct SystemModel {
    NetworkSpec spec;
    Fluid fluid;
    std::vector<int> l_x;  // cells per physical edge
    ExpandedGraph g;
    LoopStructure loops;
    HydraulicModel hm;
    ThermalGraph tg;
    InjectionLayout inj;

    int num_states() const { return tg.num_nodes(); }
    int num_cycles() const { return hm.m_r(); }

    int edge_of(const std::string& unit) const;          // physical edge index
    int cell_of(const std::string& unit) const;          // exchanger cell (last in chain)
    int inlet_of(const std::string& unit) const;         // node feeding the exchanger cell
    int supply_node_of(const std::string& unit) const;   // tail junction of the exchanger edge
    int forward_plus(const std::string& unit) const;     // E+ index of the forward direction
    int reverse_plus(const std::string& unit) const;     // E+ index of the reverse direction or -1

    // Units carrying a demand: consumers and prosumers, in network order.
    std::vector<std::string> demand_units() const;
    std::vector<std::string> units_of_kind(UnitKind kind) const;
    std::string storage_unit() const;  // empty if none

    // Rows of F_r whose cycle uses E+ edge e.
    std::vector<int> cycles_using(int e_plus) const;

    // E+ flows (m^3/s) from cycle flows in L/s.
    Eigen::VectorXd edge_flows(const Eigen::VectorXd& q_r_lps) const;
};

// Builds the model; `cells_scale` multiplies every entry of l_x (plant
// oversampling).
std::shared_ptr<SystemModel> make_system_model(const NetworkSpec& spec, const std::vector<int>& l_x,
                                               const Fluid& fluid, int cells_scale = 1);

}  // namespace dhn
