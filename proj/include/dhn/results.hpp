#pragma once

#include <string>
#include <vector>

#include "dhn/scenario.hpp"
#include "dhn/simulation.hpp"

namespace dhn {

// Hex digest of the canonical scenario text.
std::string config_hash(const Scenario& sc);

// "<YYYYmmdd-HHMMSS>-<hash>" under `root`; created on demand.
std::string make_run_dir(const std::string& root, const Scenario& sc);

// Metrics of one record as a JSON object (pretty printed).
std::string metrics_json(const ClosedLoopRecord& rec);

// metrics.json, states.csv, inputs.csv, loops.csv, manifest.json and
// config.yaml for one closed loop.
void write_bundle(const std::string& dir, const Scenario& sc, const ClosedLoopRecord& rec);

struct LongRow {
    double time_h = 0.0;
    std::string series;
    double value = 0.0;
};

// Wide CSV (first column time_h or step) to long (time, series, value) rows.
// Non-numeric cells are skipped.
std::vector<LongRow> wide_to_long(const std::string& csv_text);

// Writes plots.csv next to the bundle's states.csv and inputs.csv; returns its path.
std::string export_plots(const std::string& run_dir);

}  // namespace dhn
