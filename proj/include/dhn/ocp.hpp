#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dhn/nlp.hpp"
#include "dhn/system.hpp"

namespace dhn {

enum class ComplementarityMode { Penalty, Strict };

struct OcpOptions {
    int N = 32;
    int N_c = 32;
    int block = 4;
    double R_temp = -1.0;        // < 0: 1e-4 times the mean price weight
    int temp_power = 1;
    double R_diff = 1e-4;        // per kW^2
    double R_sto = 0.1;          // per K^2
    double R_slack = 1e4;
    double R_slack_linear = 1e2;
    double eps_comp = 1.0;       // < 0: 1e-3 times the mean price weight
    ComplementarityMode complementarity = ComplementarityMode::Penalty;
    double comp_bound = 1e-2;    // (L/s)^2 in strict mode
    bool nonnegativity_rows = false;
    bool storage_balance = true;
    double balance_fraction = 0.008;  // margin under the 1 % closed-loop target
    double q_r_max = 20.0;       // L/s per cycle
    double x_min = -20.0;        // K above ambient, hard box on all states
    double x_max = 120.0;
    double q_nominal = 2.0;      // L/s, used for row scaling only

    void validate() const;
};

struct ProducerInput {
    std::string unit;
    std::vector<double> lo_kW;  // per step
    std::vector<double> hi_kW;
    double price_weight = 1.0;  // 0 for heat that costs nothing
};

// Everything the OCP needs for one horizon starting at step k.
struct HorizonData {
    int N = 0;
    double tau = 900.0;
    std::vector<std::string> demand_units;
    Eigen::MatrixXd demand_kW;                 // units x N
    std::vector<double> price;                 // EUR/MWh per step
    std::vector<ProducerInput> producers;      // decision inputs
    std::vector<std::pair<std::string, std::vector<double>>> fixed_injection_kW;
    std::vector<char> cycle_enabled;           // per F_r row
    double T_sup_min = 65.0;                   // degC at consumer supply junctions
    double T_max = 95.0;                       // degC at producer cells
    double T_ret_min = 40.0;                   // degC at consumer exchanger outlets
    bool storage_active = false;
    std::string storage_unit;
    double storage_target = 55.0;              // K above ambient
    double past_net_m3 = 0.0;                  // charged minus discharged so far today
    double past_charge_m3 = 0.0;
    int steps_to_day_end = 1 << 30;            // balance row applies when <= N
    double storage_volume_m3 = 0.0;
};

// Move blocking: maps every step t < N to the step whose input it repeats.
std::vector<int> apply_move_blocking(int N, int N_c, int block_len);

struct OcpLayout {
    int N = 0, nx = 0, m_r = 0, n_prod = 0, n_dem = 0, n_blocks = 0;
    std::vector<int> block_start;  // step of each free input
    std::vector<int> block_of;     // step -> block
    int x_off = 0, q_off = 0, p_off = 0, dem_off = 0, sig_off = 0, n_sig = 0, n = 0;
    int x(int t, int i) const { return x_off + (t - 1) * nx + i; }  // t = 1..N
    int q(int b, int l) const { return q_off + b * m_r + l; }
    int p(int b, int j) const { return p_off + b * n_prod + j; }
    int dem(int t, int c) const { return dem_off + t * n_dem + c; }  // t = 0..N-1
    int sig(int k) const { return sig_off + k; }
};

struct ObjectiveBreakdown {
    double total = 0.0;
    double price = 0.0;
    double temp = 0.0;
    double diff = 0.0;
    double storage = 0.0;
    double slack = 0.0;
    double complementarity = 0.0;
};

struct OcpProblem {
    std::shared_ptr<QuadraticNlp> nlp;
    OcpLayout lay;
    HorizonData data;
    OcpOptions options;
    Eigen::VectorXd x0;
    int dyn_rows = 0;            // dynamics rows come first, N * nx of them
    std::vector<int> cell_rows;  // per state: 1 if its dynamics row is a cell row
    std::vector<double> row_scale;
};

OcpProblem build_ocp(const SystemModel& model, const HorizonData& data, const Eigen::VectorXd& x0,
                     const OcpOptions& options);

ObjectiveBreakdown eval_objective(const OcpProblem& problem, const Eigen::VectorXd& z);

// Flat-profile initial guess: inputs sized from demand, states propagated.
Eigen::VectorXd cold_start(const SystemModel& model, const OcpProblem& problem);

// Keeps the inputs in z, propagates the states through the model and fits
// the smallest slacks.
void complete_guess(const SystemModel& model, const OcpProblem& problem, Eigen::VectorXd& z);

// Shifted guess from the previous horizon; multipliers shifted alongside.
struct WarmStart {
    Eigen::VectorXd z;
    NlpSolution duals;
    bool valid = false;
};
WarmStart warm_start(const SystemModel& model, const OcpProblem& problem, const OcpProblem& previous,
                     const NlpSolution& previous_solution);

// First input of a solved horizon.
Control first_control(const OcpProblem& problem, const Eigen::VectorXd& z);

// State trajectory t = 0..N (row t) of a solution.
Eigen::MatrixXd state_trajectory(const OcpProblem& problem, const Eigen::VectorXd& z);

struct MpcCache {
    std::unique_ptr<OcpProblem> problem;
    NlpSolution solution;
    bool has_solution = false;
};

struct MpcResult {
    Control control;
    NlpSolution solution;
    ObjectiveBreakdown breakdown;
    bool success = false;
};

MpcResult mpc_step(const SystemModel& model, const HorizonData& data, const Eigen::VectorXd& x_k, MpcCache& cache,
                   const OcpOptions& options, const NlpLimits& limits);

}  // namespace dhn
