#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dhn/ocp.hpp"
#include "dhn/scenario.hpp"
#include "dhn/system.hpp"

namespace dhn {

// Storage volumes moved since the last midnight, m^3. Forward flow through
// the storage exchanger charges the tank.
struct StorageLedger {
    double net_m3 = 0.0;
    double charge_m3 = 0.0;
};

struct ControllerConfig {
    Variant variant = Variant::MPS;
    std::vector<std::string> controllable;  // producers with a decision input
    bool storage = false;
    bool prosumer_produces = false;         // C1 may inject (surplus or fixed)
    bool fixed_prosumer = false;            // injection is a constant disturbance
};

ControllerConfig make_controller_config(Variant v, const Scenario& sc, const SystemModel& model);

// Cycles allowed for a configuration: storage cycles drop without storage,
// prosumer-producing cycles drop when the prosumer cannot inject.
std::vector<char> cycle_mask(const ControllerConfig& cfg, const Scenario& sc, const SystemModel& model);

HorizonData make_horizon(const ControllerConfig& cfg, const Scenario& sc, const SystemModel& model, int k,
                         const StorageLedger& ledger);

// Heating-curve setpoint, degC.
double rbc_supply_setpoint(const RbcParams& p, double T_outdoor_C);

// Rule-based baseline on the controller-resolution state x (K above ambient).
Control rbc_step(const ControllerConfig& cfg, const Scenario& sc, const SystemModel& model, int k,
                 const Eigen::VectorXd& x);

struct ControllerStep {
    Control control;
    bool used_mpc = false;
    bool solver_ok = true;
    std::string status = "rbc";
    int iterations = 0;
    double solve_seconds = 0.0;
    double objective = 0.0;
    ObjectiveBreakdown breakdown;
};

class Controller {
public:
    Controller(ControllerConfig cfg, std::shared_ptr<const SystemModel> model, const Scenario& sc);

    ControllerStep step(int k, const Eigen::VectorXd& x, const StorageLedger& ledger);
    const ControllerConfig& config() const { return cfg_; }
    const SystemModel& model() const { return *model_; }

private:
    ControllerConfig cfg_;
    std::shared_ptr<const SystemModel> model_;
    const Scenario& sc_;
    MpcCache cache_;
};

std::unique_ptr<Controller> make_controller(Variant v, std::shared_ptr<const SystemModel> model,
                                            const Scenario& sc);

}  // namespace dhn
