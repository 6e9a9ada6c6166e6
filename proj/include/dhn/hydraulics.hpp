#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dhn/network.hpp"

namespace dhn {

struct AssumptionViolation : std::runtime_error {
    int loop = -1;
    AssumptionViolation(const std::string& msg, int loop_index)
        : std::runtime_error(msg), loop(loop_index) {}
};

struct PathDependenceError : std::runtime_error {
    double residual = 0.0;
    PathDependenceError(const std::string& msg, double r) : std::runtime_error(msg), residual(r) {}
};

double friction_resistance(double rho, double length, double friction, double diameter);
double friction_resistance(const Edge& e, double rho);

struct HydraulicModel {
    Eigen::VectorXd R_mu;   // per E+ edge
    Eigen::VectorXd c;      // pump capacity per E+ edge
    Eigen::VectorXd R_nu;   // valve coefficient per E+ edge, 0 if unvalved
    std::vector<int> partner;
    std::vector<int> pump_edges;
    std::vector<int> valve_edges;  // E+ columns of Pi
    std::vector<int> valve_of_edge;  // E+ edge -> valve column or -1
    Eigen::MatrixXd F_r;
    Eigen::MatrixXd F;
    std::vector<Eigen::MatrixXd> Z;   // one per row of F_r
    Eigen::VectorXd loop_capacity;    // sum of c over each F_r cycle
    ValveReport valves;
    double q_tol = 1e-12;             // m^3/s, flows at or below count as zero

    int m_r() const { return static_cast<int>(F_r.rows()); }
    int num_edges() const { return static_cast<int>(R_mu.size()); }
};

HydraulicModel make_hydraulic_model(const NetworkSpec& spec, const ExpandedGraph& g,
                                    const LoopStructure& loops, double rho);

// Pressure change along a directed edge with fixed flow direction (q >= 0).
// Positive values mean pressure falls from tail to head.
double edge_pressure_change(double R_mu, double pump, double R_nu, double q, double nu, double r);

struct ActuatorState {
    Eigen::VectorXd nu;       // per valve column
    std::vector<char> closed; // valve column without flow holding pressure
    Eigen::VectorXd held;     // pressure held by closed valves (Pa)
    Eigen::VectorXd r;        // per pump edge, in [0, 1]
    bool closed_form = false; // recovered by the (Psi + Theta Z) H formula
};

// Per-loop q_r' Z^i q_r - sum c over the F_r cycles.
Eigen::VectorXd loop_feasibility(const HydraulicModel& hm, const Eigen::VectorXd& q_r);

// Nets opposing flows on bidirectional pairs; returns effective E+ flows.
Eigen::VectorXd effective_flows(const HydraulicModel& hm, const Eigen::VectorXd& q);

ActuatorState recover_actuators(const HydraulicModel& hm, const Eigen::VectorXd& q);

// Pressure change of every E+ edge under (q, actuators).
Eigen::VectorXd pressure_changes(const HydraulicModel& hm, const Eigen::VectorXd& q,
                                 const ActuatorState& act);

struct KirchhoffReport {
    double max_abs = 0.0;   // Pa
    double max_rel = 0.0;   // relative to the sum of |dp| along the cycle
    int worst = -1;
};

KirchhoffReport verify_kirchhoff(const Eigen::VectorXd& dp, const std::vector<SignedCycle>& cycles);

KirchhoffReport verify_kirchhoff_all_cycles(const HydraulicModel& hm, const Eigen::VectorXd& q,
                                            const ActuatorState& act,
                                            const std::vector<SignedCycle>& cycles);

// Residual of F dp = 0 relative to the sum of |F||dp|.
double loop_equality_residual(const HydraulicModel& hm, const Eigen::VectorXd& dp);

Eigen::VectorXd nodal_pressures(const ExpandedGraph& g, const HydraulicModel& hm,
                                const Eigen::VectorXd& q, const ActuatorState& act,
                                int reference_node, double reference_pressure);

}  // namespace dhn
