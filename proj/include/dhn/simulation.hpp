#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dhn/controllers.hpp"
#include "dhn/scenario.hpp"
#include "dhn/system.hpp"

namespace dhn {

struct IntegratorError : std::runtime_error {
    double last_good_time = 0.0;  // s since the start of the run
    IntegratorError(const std::string& msg, double t) : std::runtime_error(msg), last_good_time(t) {}
};

// Plant: the controller network refined by beta, stepped with substeps.
struct HighFidelityModel {
    std::shared_ptr<SystemModel> model;
    int beta = 4;
    int substeps = 16;       // per control interval
    double T_cap_C = 120.0;  // injections stop heating a cell beyond this
};

HighFidelityModel make_plant(const Scenario& sc, const NetworkSpec& spec);

// Uniform initial temperatures by side: supply, return, storage. K above ambient.
Eigen::VectorXd initial_state(const SystemModel& model, const Scenario& sc);

// Controller cells take the volume-weighted mean of their sub-cells;
// junction values are copied.
Eigen::VectorXd downsample_state(const SystemModel& plant, const SystemModel& controller, const Eigen::VectorXd& x_hf);

struct ConsumerSample {
    double demand_kW = 0.0;
    double q = 0.0;         // m^3/s through the exchanger in the consuming direction
    double T_in = 0.0;      // degC, supply junction of the exchanger
    double T_out = 0.0;     // degC, exchanger outlet
    double extracted_kW = 0.0;  // substep mean of the heat actually removed
};

struct IntervalResult {
    Eigen::VectorXd x;                     // plant state at the end
    std::vector<ConsumerSample> consumers; // model.demand_units() order
    std::map<std::string, double> injected_kW;  // substep mean per producer
    double energy_in_J = 0.0;              // producers minus consumers
    double losses_J = 0.0;
    double stored_J = 0.0;                 // change of rho cp sum V x
    double energy_residual = 0.0;          // relative audit mismatch
};

// Holds u constant over one interval of length sc.tau starting at step k.
IntervalResult simulate_interval(const HighFidelityModel& plant, const Scenario& sc, const Eigen::VectorXd& x_hf,
                                 const Control& u, int k);

struct StepRecord {
    int k = 0;
    double hour = 0.0;
    double price = 0.0;
    Eigen::VectorXd q_r;                  // L/s
    std::map<std::string, double> power_kW;
    std::vector<ConsumerSample> consumers;
    Eigen::VectorXd x;                    // controller-resolution state after the interval, K above ambient
    Eigen::VectorXd loop_usage;           // q'Zq / capacity per cycle
    double cost = 0.0;                    // EUR
    double storage_flow = 0.0;            // m^3/s, positive charges
    std::string status;
    int iterations = 0;
    double solve_seconds = 0.0;
    bool used_mpc = false;
    bool fallback = false;
    double energy_residual = 0.0;
};

struct Metrics {
    double cost = 0.0;
    double atv = 0.0;
    double dv = 0.0;
    bool dv_defined = true;
    double median_solve = 0.0;
    double p90_solve = 0.0;
    double mean_solve = 0.0;
    int fallbacks = 0;
    int steps = 0;
    double max_energy_residual = 0.0;
    double max_storage_imbalance = 0.0;  // |net| / charge over completed days
};

struct ClosedLoopRecord {
    std::string scenario;
    Variant variant = Variant::RBC;
    std::vector<std::string> consumers;
    std::vector<std::string> cycle_names;
    std::vector<std::string> state_names;  // controller states, junctions then cells
    double rho_cp = 981.0 * 4182.0;
    double T_a = 10.0;
    std::vector<StepRecord> steps;
    std::vector<double> daily_imbalance;  // per completed day
    Metrics metrics;
    bool aborted = false;
    std::string abort_reason;
};

// (1/(t_f |W_C|)) sum_k sum_c max(0, T_sup_min - T_in).
double compute_atv(const ClosedLoopRecord& rec, double T_sup_min);

struct DvResult {
    double value = 0.0;  // percent
    bool defined = true; // false when the total demand is zero
};
// 100 sum max(0, d - rho cp q (T_in - T_out)) / sum d.
DvResult compute_dv(const ClosedLoopRecord& rec);

double median(std::vector<double> v);
double percentile(std::vector<double> v, double p);

Metrics compute_metrics(const ClosedLoopRecord& rec, double T_sup_min);

// Junction ids, then "<edge>#<cell>" in chain order.
std::vector<std::string> state_names(const SystemModel& model);

using ProgressFn = std::function<void(const StepRecord&)>;

ClosedLoopRecord run_closed_loop(Controller& controller, const HighFidelityModel& plant, const Scenario& sc, int t_f,
                                 const ProgressFn& progress = {});

// Builds controller model, plant and controller for a variant and runs it.
ClosedLoopRecord run_variant(const Scenario& sc, Variant v, int t_f, const ProgressFn& progress = {});

}  // namespace dhn
