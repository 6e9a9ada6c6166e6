#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dhn/network.hpp"
#include "dhn/nlp.hpp"
#include "dhn/ocp.hpp"
#include "dhn/thermal.hpp"

namespace dhn {

enum class Variant { RBC, SP, SPS, MP, MPS };

const char* to_string(Variant v);
Variant variant_from_string(const std::string& s);

// Heating curve and flow sizing of the rule-based baseline.
struct RbcParams {
    double a = 85.0;          // degC at the reference outdoor temperature
    double b = 1.0;           // K per K
    double T_ref = 10.0;      // degC
    double T_min = 70.0;
    double T_max = 90.0;
    double dT_design = 30.0;  // K
    double min_flow = 0.1;    // L/s per consumer
    double gain = 1.0;        // proportional correction on the producer outlet
};

// Prosumer surplus window: the prosumer covers its own load and can export
// heat; a second consumer takes an extra load in the same window.
struct SurplusEvent {
    bool enabled = false;
    std::string unit = "C1";
    double start_h = 12.0;
    double end_h = 17.0;
    double power_kW = 100.0;
    std::string extra_unit = "C4";
    double extra_kW = 80.0;
};

// Prosumer acting as a constant producer for the whole run.
struct FixedProsumer {
    bool enabled = false;
    std::string unit = "C1";
    double power_kW = 100.0;
};

struct Scenario {
    std::string name = "scenario";
    NetworkSpec network;
    Fluid fluid;
    std::map<std::string, double> demand_fractions;
    std::vector<double> total_demand_kW;  // per control step
    std::vector<double> price;            // EUR/MWh per control step
    std::vector<double> T_outdoor;        // degC per control step
    std::string demand_csv, price_csv, outdoor_csv;

    double tau = 900.0;  // s
    int t_f = 96;
    double start_hour = 0.0;
    int beta = 4;
    int plant_safety = 4;
    std::vector<int> l_x;  // controller cells per physical edge

    double T_sup_min = 65.0;
    double T_max = 95.0;
    double T_ret_min = 40.0;
    double P_max_kW = 1500.0;
    std::string primary_producer = "P1";
    double pump_scale = 1.0;
    double storage_target_C = 85.0;
    double initial_supply_C = 80.0;
    double initial_return_C = 50.0;
    double initial_storage_C = 65.0;

    SurplusEvent surplus;
    FixedProsumer fixed_prosumer;
    RbcParams rbc;
    OcpOptions ocp;
    NlpLimits solver;
    Variant variant = Variant::MPS;

    void validate() const;
    // Network with the pump scaling applied.
    NetworkSpec effective_network() const;
    double hour_of_step(int k) const;
    // Heat demand of a unit at step k, kW, after surplus/prosumer rules.
    double demand_kW(const std::string& unit, int k) const;
    // Heat the prosumer may export at step k, kW.
    double surplus_kW(int k) const;
};

// Demand series are linearly interpolated, prices zero-order held.
enum class SeriesKind { Price, Demand };

struct TimeSeries {
    std::vector<double> t_hours;
    std::vector<double> values;
};

TimeSeries read_series_csv(const std::string& path);
std::vector<double> resample(const TimeSeries& s, SeriesKind kind, double tau, int steps);
std::vector<double> ingest_series(const std::string& csv_path, SeriesKind kind, double tau, int steps);

NetworkSpec aroma_network();
std::vector<int> aroma_cells(const NetworkSpec& spec, int pipe = 2, int exchanger = 1, int storage = 4);
// Hourly profiles for one day, repeated to cover the horizon.
const std::vector<double>& aroma_hourly_demand_kW();
const std::vector<double>& aroma_hourly_price();
const std::vector<double>& aroma_hourly_outdoor_C();

Scenario build_aroma();
// Fixed 100 kW prosumer, scaled-down pumps, 70..90 degC bounds.
Scenario build_aroma_relief();

Scenario load_scenario(const std::string& path);
void save_scenario(const Scenario& s, const std::string& path);
std::string scenario_to_yaml(const Scenario& s);
Scenario scenario_from_yaml(const std::string& text, const std::string& base_dir = ".");
bool scenarios_equal(const Scenario& a, const Scenario& b);

std::uint64_t fnv1a64(const std::string& data);

}  // namespace dhn
