#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace dhn {

struct StructuralError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class EdgeKind { Pipe, Exchanger };
enum class UnitKind { Producer, Consumer, Prosumer, Storage };

const char* to_string(UnitKind kind);
UnitKind unit_kind_from_string(const std::string& s);

struct Node {
    std::string id;
    bool supply = true;
};

// Physical edge. The forward direction is tail -> head; a negative q_min
// allows flow against it, which adds a reverse edge to the expanded graph.
struct Edge {
    std::string id;
    std::string tail;
    std::string head;
    EdgeKind kind = EdgeKind::Pipe;
    double length = 1.0;          // m
    double diameter = 0.1;        // m
    double friction = 0.02;       // K, dimensionless
    double heat_transfer = 0.4;   // U, W/(m^2 K)
    double q_min = 0.0;           // m^3/s
    double q_max = 0.05;          // m^3/s
    double pump_capacity = 0.0;          // Pa, forward direction
    double pump_capacity_reverse = 0.0;  // Pa, reverse direction
    bool has_valve = false;
    double valve_coeff = 1e8;     // Pa s^2 m^-6 per unit opening

    bool bidirectional() const { return q_min < 0.0; }
};

// Producer, consumer, prosumer or storage attached to an exchanger edge.
struct Unit {
    std::string name;
    UnitKind kind = UnitKind::Consumer;
    std::string edge;
};

struct NetworkSpec {
    std::vector<Node> nodes;
    std::vector<Edge> edges;
    std::vector<Unit> units;
    std::map<std::string, std::string> mirror;  // supply <-> return, both ways

    void validate() const;
    int edge_index(const std::string& id) const;
    int node_index(const std::string& id) const;
    const Unit* find_unit(const std::string& name) const;
    std::vector<const Unit*> units_of(UnitKind kind) const;
};

struct DirectedEdge {
    int tail = -1;
    int head = -1;
    int original = -1;
    bool reverse = false;
    double pump = 0.0;  // Pa
};

struct ExpandedGraph {
    std::vector<std::string> node_ids;
    std::unordered_map<std::string, int> node_index;
    std::vector<DirectedEdge> edges;   // E+ : originals first, then reverses
    std::vector<int> partner;          // opposite direction in E+, or -1
    std::vector<int> forward_of;       // original edge -> E+ index
    std::vector<int> reverse_of;       // original edge -> E+ index, or -1
    std::vector<int> mirror_node;      // node -> mirrored node
    std::vector<int> mirror_edge;      // E+ edge -> mirrored E+ edge
    Eigen::MatrixXd incidence;         // |N| x |E+|, -1 tail / +1 head
    Eigen::MatrixXi adjacency;         // |N| x |N|

    std::size_t num_nodes() const { return node_ids.size(); }
    std::size_t num_edges() const { return edges.size(); }
    int find_edge(int tail, int head) const;
};

ExpandedGraph expand_bidirectional(const NetworkSpec& spec);

struct Cycle {
    std::vector<int> nodes;  // n0 .. n_{k-1}, closing back to n0
    std::vector<int> edges;  // edges[i] goes nodes[i] -> nodes[i+1 mod k]
};

struct CycleOverflow : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<Cycle> enumerate_directed_cycles(const ExpandedGraph& g,
                                             std::size_t cap = 1000000);

// Keeps cycles with more than two nodes whose edge set is closed under
// the supply/return mirror.
std::vector<Cycle> filter_cycles(const ExpandedGraph& g,
                                 const std::vector<Cycle>& cycles);

Eigen::MatrixXd reduced_loop_matrix(const ExpandedGraph& g,
                                    const std::vector<Cycle>& cycles);

struct FundamentalLoops {
    Eigen::MatrixXd F;
    int m_f = 0;
    std::vector<int> rows;  // pivot order: F.row(i) == F_r.row(rows[i])
    bool rank_ambiguous = false;
    int rank_upper = 0;     // candidate rank when ambiguous
};

FundamentalLoops fundamental_loop_matrix(const Eigen::MatrixXd& F_r);

struct LoopStructure {
    std::vector<Cycle> cycles;  // S_r
    Eigen::MatrixXd F_r;
    Eigen::MatrixXd F;
    int m_r = 0;
    int m_f = 0;
    std::vector<int> pivot_rows;
};

LoopStructure build_loop_structure(const ExpandedGraph& g,
                                   std::size_t cap = 1000000);

struct ValveReport {
    std::vector<int> valve_edges;  // E+ indices, one column of Pi each
    Eigen::MatrixXd Pi;
    int rank = 0;
    Eigen::MatrixXd Psi;
    Eigen::MatrixXd Theta;
    int m_theta = 0;
    Eigen::MatrixXd Z2;
    bool z2_nonnegative = false;
    double z2_min_entry = 0.0;
    bool assumption_satisfied = false;
    std::vector<int> deficient_loops;
};

ValveReport check_valve_assumption(const Eigen::MatrixXd& F,
                                   const std::vector<int>& valve_edges);

// E+ columns for the valved physical edges of the spec.
std::vector<int> valve_columns(const NetworkSpec& spec, const ExpandedGraph& g);

// Physical edge ids that should carry a valve.
std::vector<std::string> suggest_valve_placement(const NetworkSpec& spec);

// Undirected simple cycles of G+ whose signed incidence lies in the row
// space of F. Entries of `signs` are +1 (traversed along the edge) or -1.
struct SignedCycle {
    std::vector<int> edges;
    std::vector<int> signs;
};

struct AllCycles {
    std::vector<SignedCycle> cycles;
    std::size_t excluded = 0;  // undirected cycles outside rowspace(F)
};

AllCycles enumerate_all_cycles(const ExpandedGraph& g, const Eigen::MatrixXd& F,
                               std::size_t cap = 1000000);

}  // namespace dhn
