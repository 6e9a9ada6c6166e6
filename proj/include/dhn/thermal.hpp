#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "dhn/network.hpp"

namespace dhn {

struct DegenerateJunction : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Fluid {
    double rho = 981.0;   // kg/m^3
    double cp = 4182.0;   // J/(kg K)
    double T_a = 10.0;    // ambient, degC
    double rho_cp() const { return rho * cp; }
};

struct RefinedEdge {
    int tail = -1;
    int head = -1;
    int source = -1;  // E+ edge that supplies the flow
};

// Junctions occupy indices [0, num_junctions), cells follow.
struct ThermalGraph {
    int num_junctions = 0;
    int num_cells = 0;
    std::vector<RefinedEdge> edges;
    std::vector<std::vector<int>> chain;     // physical edge -> cells in forward order
    std::vector<int> cells_per_edge;         // l_x
    std::vector<int> cell_edge;              // cell (offset by junctions) -> physical edge
    Eigen::VectorXd V;                       // per node, 0 for junctions
    Eigen::VectorXd alpha;                   // per node, m^3/s
    std::vector<int> incoming_offsets;       // CSR of incoming refined edges per node
    std::vector<int> incoming;
    std::vector<int> outgoing_offsets;
    std::vector<int> outgoing;

    int num_nodes() const { return num_junctions + num_cells; }
    bool is_junction(int i) const { return i < num_junctions; }
};

ThermalGraph refine_mesh(const NetworkSpec& spec, const ExpandedGraph& g,
                         const std::vector<int>& l_x, const Fluid& fluid);

// Thermal graph on explicit nodes and edges; nodes with V = 0 are junctions
// and must come first.
ThermalGraph thermal_graph_from_edges(int num_junctions, const Eigen::VectorXd& V,
                                      const Eigen::VectorXd& alpha, std::vector<RefinedEdge> edges);

// Per refined edge flow from the E+ flow vector.
Eigen::VectorXd refined_flows(const ThermalGraph& tg, const Eigen::VectorXd& q);

Eigen::SparseMatrix<double> assemble_A(const ThermalGraph& tg, const Eigen::VectorXd& q);

struct InjectionLayout {
    std::vector<int> rows;          // exchanger cell per column, increasing
    std::vector<std::string> units; // unit name per column
    Eigen::SparseMatrix<double> B;  // |N~| x |W|, entries 1/(rho cp)
    int column_of(const std::string& unit) const;
};

// Exchanger cell of a unit: last cell of its edge chain in forward order.
int unit_cell(const NetworkSpec& spec, const ThermalGraph& tg, const std::string& unit);

InjectionLayout make_injection_layout(const NetworkSpec& spec, const ThermalGraph& tg,
                                      const Fluid& fluid);

class ImplicitEulerStepper {
public:
    ImplicitEulerStepper(const ThermalGraph& tg, const InjectionLayout& inj, double eps_junction = 1e-9);

    // Solves V x+ = V x + tau (A(q) x+ + B w) with algebraic junction rows.
    Eigen::VectorXd step(const Eigen::VectorXd& x, const Eigen::VectorXd& q, const Eigen::VectorXd& w,
                         double tau);

private:
    const ThermalGraph& tg_;
    const InjectionLayout& inj_;
    double eps_;
    Eigen::SparseMatrix<double> M_;
    std::vector<int> diag_pos_;
    std::vector<int> edge_pos_;  // value index of (head, tail) per refined edge, -1 for self
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
    bool analyzed_ = false;
};

Eigen::VectorXd step_implicit_euler(const ThermalGraph& tg, const InjectionLayout& inj,
                                    const Eigen::VectorXd& x, const Eigen::VectorXd& q,
                                    const Eigen::VectorXd& w, double tau, double eps_junction = 1e-9);

struct CflEntry {
    int cell = -1;
    double ratio = 0.0;
    bool flagged = false;
};

std::vector<CflEntry> check_cfl(const ThermalGraph& tg, const Eigen::VectorXd& q, double tau);

struct FgResidual {
    Eigen::VectorXd f;  // cell rows
    Eigen::VectorXd g;  // junction rows
};

// Residuals of the implicit-Euler relation between x (time t) and x_next.
FgResidual evaluate_f_g(const ThermalGraph& tg, const InjectionLayout& inj, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& x_next, const Eigen::VectorXd& q,
                        const Eigen::VectorXd& w, double tau, double eps_junction = 1e-9);

// Flow-weighted mixing temperature of a junction.
double junction_mix(const std::vector<double>& flows, const std::vector<double>& temps);

}  // namespace dhn
