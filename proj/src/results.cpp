#include "dhn/results.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

namespace dhn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
    out << text;
}

std::string num(double v) { return fmt::format("{:.10g}", v); }

json metrics_object(const ClosedLoopRecord& rec) {
    const Metrics& m = rec.metrics;
    json j;
    j["scenario"] = rec.scenario;
    j["variant"] = to_string(rec.variant);
    j["steps"] = m.steps;
    j["cost_eur"] = m.cost;
    j["atv_C"] = m.atv;
    j["dv_percent"] = m.dv;
    j["dv_defined"] = m.dv_defined;
    j["solve_seconds"] = {{"median", m.median_solve}, {"p90", m.p90_solve}, {"mean", m.mean_solve}};
    j["fallbacks"] = m.fallbacks;
    j["max_energy_residual"] = m.max_energy_residual;
    j["max_storage_imbalance"] = m.max_storage_imbalance;
    j["daily_storage_imbalance"] = rec.daily_imbalance;
    j["aborted"] = rec.aborted;
    if (rec.aborted) j["abort_reason"] = rec.abort_reason;
    return j;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

}  // namespace

std::string config_hash(const Scenario& sc) { return fmt::format("{:016x}", fnv1a64(scenario_to_yaml(sc))); }

std::string make_run_dir(const std::string& root, const Scenario& sc) {
    std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
    fs::path dir = fs::path(root) / (std::string(stamp) + "-" + config_hash(sc).substr(0, 12));
    fs::create_directories(dir);
    return dir.string();
}

std::string metrics_json(const ClosedLoopRecord& rec) { return metrics_object(rec).dump(2) + "\n"; }

void write_bundle(const std::string& dir, const Scenario& sc, const ClosedLoopRecord& rec) {
    fs::path d(dir);
    fs::create_directories(d);
    write_text(d / "metrics.json", metrics_json(rec));
    write_text(d / "config.yaml", scenario_to_yaml(sc));

    const double T_a = rec.T_a;
    {
        std::ostringstream os;
        os << "step,time_h";
        for (const auto& n : rec.state_names) os << ",T_" << n;
        os << "\n";
        for (const auto& st : rec.steps) {
            // states at the end of the interval
            os << st.k << "," << num(st.hour + sc.tau / 3600.0);
            for (int i = 0; i < st.x.size(); ++i) os << "," << num(st.x[i] + T_a);
            os << "\n";
        }
        write_text(d / "states.csv", os.str());
    }
    {
        std::vector<std::string> producers;
        for (const auto& st : rec.steps)
            for (const auto& [name, v] : st.power_kW)
                if (std::find(producers.begin(), producers.end(), name) == producers.end()) producers.push_back(name);
        std::ostringstream os;
        os << "step,time_h,price,cost,status,iterations,solve_s,fallback,storage_flow_Lps";
        for (const auto& p : producers) os << ",P_" << p << "_kW";
        for (std::size_t i = 0; i < rec.cycle_names.size(); ++i) os << ",q_r" << i << "_Lps";
        for (const auto& c : rec.consumers)
            os << ",demand_" << c << "_kW,q_" << c << "_Lps,Tin_" << c << ",Tout_" << c << ",delivered_" << c
               << "_kW";
        os << "\n";
        for (const auto& st : rec.steps) {
            os << st.k << "," << num(st.hour) << "," << num(st.price) << "," << num(st.cost) << "," << st.status << ","
               << st.iterations << "," << num(st.solve_seconds) << "," << (st.fallback ? 1 : 0) << ","
               << num(st.storage_flow * 1e3);
            for (const auto& p : producers) {
                auto it = st.power_kW.find(p);
                os << "," << num(it == st.power_kW.end() ? 0.0 : it->second);
            }
            for (int i = 0; i < st.q_r.size(); ++i) os << "," << num(st.q_r[i]);
            for (const auto& c : st.consumers) {
                double delivered = rec.rho_cp * c.q * (c.T_in - c.T_out) / 1e3;
                os << "," << num(c.demand_kW) << "," << num(c.q * 1e3) << "," << num(c.T_in) << "," << num(c.T_out)
                   << "," << num(delivered);
            }
            os << "\n";
        }
        write_text(d / "inputs.csv", os.str());
    }
    {
        std::ostringstream os;
        os << "step,time_h,energy_residual";
        for (const auto& n : rec.cycle_names) os << ",usage_" << n;
        os << "\n";
        for (const auto& st : rec.steps) {
            os << st.k << "," << num(st.hour) << "," << num(st.energy_residual);
            for (int i = 0; i < st.loop_usage.size(); ++i) os << "," << num(st.loop_usage[i]);
            os << "\n";
        }
        write_text(d / "loops.csv", os.str());
    }
    json man;
    man["version"] = kVersion;
    man["config_hash"] = config_hash(sc);
    man["config"] = "config.yaml";
    man["scenario"] = sc.name;
    man["variant"] = to_string(rec.variant);
    man["steps"] = rec.steps.size();
    man["compiler"] = __VERSION__;
    man["files"] = {"metrics.json", "states.csv", "inputs.csv", "loops.csv", "config.yaml"};
    write_text(d / "manifest.json", man.dump(2) + "\n");
}

std::vector<LongRow> wide_to_long(const std::string& csv_text) {
    std::vector<LongRow> rows;
    std::istringstream in(csv_text);
    std::string line;
    if (!std::getline(in, line)) return rows;
    auto header = split(line);
    int tcol = -1;
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == "time_h") tcol = static_cast<int>(i);
    if (tcol < 0) throw std::runtime_error("wide_to_long: no time_h column");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = split(line);
        double t = std::stod(cells.at(static_cast<std::size_t>(tcol)));
        for (std::size_t i = 0; i < cells.size() && i < header.size(); ++i) {
            if (static_cast<int>(i) == tcol || header[i] == "step") continue;
            try {
                std::size_t used = 0;
                double v = std::stod(cells[i], &used);
                if (used != cells[i].size()) continue;
                rows.push_back({t, header[i], v});
            } catch (const std::exception&) {
                continue;
            }
        }
    }
    return rows;
}

std::string export_plots(const std::string& run_dir) {
    fs::path d(run_dir);
    std::ostringstream out;
    out << "time_h,series,value\n";
    for (const char* name : {"inputs.csv", "states.csv"}) {
        fs::path p = d / name;
        std::ifstream in(p);
        if (!in) throw std::runtime_error("export-plots: missing '" + p.string() + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        for (const auto& r : wide_to_long(ss.str())) out << num(r.time_h) << "," << r.series << "," << num(r.value) << "\n";
    }
    fs::path target = d / "plots.csv";
    write_text(target, out.str());
    return target.string();
}

}  // namespace dhn
