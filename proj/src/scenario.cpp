#include "dhn/scenario.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>
#include <yaml-cpp/yaml.h>

namespace dhn {

namespace fs = std::filesystem;

const char* to_string(Variant v) {
    switch (v) {
        case Variant::RBC: return "rbc";
        case Variant::SP: return "sp";
        case Variant::SPS: return "sps";
        case Variant::MP: return "mp";
        case Variant::MPS: return "mps";
    }
    return "?";
}

Variant variant_from_string(const std::string& s0) {
    std::string s;
    for (char c : s0) s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (s.size() > 4 && s.substr(s.size() - 4) == "-mpc") s = s.substr(0, s.size() - 4);
    if (s == "rbc") return Variant::RBC;
    if (s == "sp") return Variant::SP;
    if (s == "sps") return Variant::SPS;
    if (s == "mp") return Variant::MP;
    if (s == "mps") return Variant::MPS;
    throw ConfigError("unknown controller variant '" + s0 + "'");
}

// ---------------------------------------------------------------- series

TimeSeries read_series_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open series file '" + path + "'");
    TimeSeries s;
    std::string line;
    int lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;
            if (line.find("time") != std::string::npos) continue;
        }
        std::stringstream ss(line);
        std::string a, b;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b, ','))
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'time,value'");
        double t, v;
        try {
            t = std::stod(a);
            v = std::stod(b);
        } catch (const std::exception&) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": not a number");
        }
        if (!std::isfinite(t) || !std::isfinite(v))
            throw ConfigError(path + ":" + std::to_string(lineno) + ": NaN or infinite entry");
        if (!s.t_hours.empty() && t <= s.t_hours.back())
            throw ConfigError(path + ":" + std::to_string(lineno) + ": timestamps not increasing");
        s.t_hours.push_back(t);
        s.values.push_back(v);
    }
    if (s.t_hours.empty()) throw ConfigError("series file '" + path + "' is empty");
    return s;
}

std::vector<double> resample(const TimeSeries& s, SeriesKind kind, double tau, int steps) {
    if (s.t_hours.empty()) throw ConfigError("empty series");
    for (std::size_t i = 0; i < s.values.size(); ++i)
        if (!std::isfinite(s.values[i]) || !std::isfinite(s.t_hours[i])) throw ConfigError("series contains NaN");
    for (std::size_t i = 1; i < s.t_hours.size(); ++i)
        if (s.t_hours[i] <= s.t_hours[i - 1]) throw ConfigError("series timestamps not increasing");
    const double t0 = s.t_hours.front();
    const double last = s.t_hours.back();
    const double spacing = s.t_hours.size() > 1 ? last - s.t_hours[s.t_hours.size() - 2] : 0.0;
    std::vector<double> out(static_cast<std::size_t>(std::max(0, steps)));
    std::size_t j = 0;
    for (int k = 0; k < steps; ++k) {
        double t = t0 + k * tau / 3600.0;
        while (j + 1 < s.t_hours.size() && s.t_hours[j + 1] <= t + 1e-12) ++j;
        if (kind == SeriesKind::Price) {
            if (t >= last + spacing - 1e-12 && s.t_hours.size() > 1)
                throw ConfigError("price series too short for the requested horizon");
            out[static_cast<std::size_t>(k)] = s.values[j];
        } else {
            if (t > last + 1e-12) throw ConfigError("demand series too short for the requested horizon");
            if (j + 1 >= s.t_hours.size()) {
                out[static_cast<std::size_t>(k)] = s.values.back();
            } else {
                double w = (t - s.t_hours[j]) / (s.t_hours[j + 1] - s.t_hours[j]);
                out[static_cast<std::size_t>(k)] = (1.0 - w) * s.values[j] + w * s.values[j + 1];
            }
        }
    }
    return out;
}

std::vector<double> ingest_series(const std::string& csv_path, SeriesKind kind, double tau, int steps) {
    return resample(read_series_csv(csv_path), kind, tau, steps);
}

// ---------------------------------------------------------------- AROMA preset

const std::vector<double>& aroma_hourly_demand_kW() {
    static const std::vector<double> v{420, 400, 390, 390, 400, 450, 560, 680, 700, 640, 570, 520,
                                       490, 470, 460, 470, 510, 590, 660, 680, 620, 560, 500, 450};
    return v;
}

const std::vector<double>& aroma_hourly_price() {
    static const std::vector<double> v{78, 74, 71, 69, 70, 76, 92, 110, 112, 98, 84, 72,
                                       63, 58, 60, 68, 82, 100, 121, 125, 109, 96, 88, 80};
    return v;
}

const std::vector<double>& aroma_hourly_outdoor_C() {
    static const std::vector<double> v{4.0, 3.6, 3.2, 3.0, 2.8, 2.9, 3.3, 4.0, 5.0, 6.2, 7.4, 8.5,
                                       9.3, 9.8, 10.0, 9.7, 9.0, 8.0, 7.0, 6.2, 5.5, 5.0, 4.6, 4.3};
    return v;
}

namespace {

std::string mirror_name(const std::string& n) { return "r" + n; }

TimeSeries periodic_hourly(const std::vector<double>& day, int days) {
    TimeSeries s;
    for (int h = 0; h <= 24 * days; ++h) {
        s.t_hours.push_back(h);
        s.values.push_back(day[static_cast<std::size_t>(h % 24)]);
    }
    return s;
}

}  // namespace

NetworkSpec aroma_network() {
    struct Pipe {
        const char* u;
        const char* v;
        bool bidirectional;
        double length;
        double diameter;
    };
    // Supply side; the return side mirrors every pipe.
    const std::vector<Pipe> pipes{
        {"a", "bp", false, 500, 0.107}, {"bp", "b", false, 300, 0.107}, {"bp", "S", true, 350, 0.100},
        {"b", "c", false, 450, 0.100},  {"b", "d", false, 400, 0.100},  {"c", "C5", false, 550, 0.090},
        {"c", "e", false, 600, 0.080},  {"d", "C3", false, 420, 0.070}, {"d", "f", false, 380, 0.090},
        {"e", "C4", false, 480, 0.070}, {"f", "e", false, 300, 0.080},  {"f", "g", true, 330, 0.080},
        {"g", "C1", true, 360, 0.070},  {"g", "C2", false, 520, 0.090},
    };
    const std::vector<std::string> valved{"a-bp", "bp-S", "c-C5", "d-C3", "g-C2",
                                          "g-C1", "c-e",  "f-e",  "d-f",  "f-g"};
    const double qmax = 0.05;
    NetworkSpec spec;
    const std::vector<std::string> supply{"a", "bp", "b", "c", "d", "e", "f", "g", "S", "C1", "C2", "C3", "C4", "C5"};
    for (const auto& n : supply) spec.nodes.push_back({n, true});
    for (const auto& n : supply) spec.nodes.push_back({mirror_name(n), false});
    for (const auto& n : supply) {
        spec.mirror[n] = mirror_name(n);
        spec.mirror[mirror_name(n)] = n;
    }
    for (const auto& p : pipes) {
        Edge e;
        e.id = std::string(p.u) + "-" + p.v;
        e.tail = p.u;
        e.head = p.v;
        e.length = p.length;
        e.diameter = p.diameter;
        e.q_min = p.bidirectional ? -qmax : 0.0;
        e.q_max = qmax;
        e.has_valve = std::find(valved.begin(), valved.end(), e.id) != valved.end();
        spec.edges.push_back(e);
    }
    for (const auto& p : pipes) {
        Edge e;
        e.tail = mirror_name(p.v);
        e.head = mirror_name(p.u);
        e.id = e.tail + "-" + e.head;
        e.length = p.length;
        e.diameter = p.diameter;
        e.q_min = p.bidirectional ? -qmax : 0.0;
        e.q_max = qmax;
        spec.edges.push_back(e);
    }
    auto exchanger = [&](const std::string& id, const std::string& tail, const std::string& head, bool bidir,
                         double pump, double pump_rev, double length, double diameter) {
        Edge e;
        e.id = id;
        e.tail = tail;
        e.head = head;
        e.kind = EdgeKind::Exchanger;
        e.length = length;
        e.diameter = diameter;
        e.q_min = bidir ? -qmax : 0.0;
        e.q_max = qmax;
        e.pump_capacity = pump;
        e.pump_capacity_reverse = pump_rev;
        spec.edges.push_back(e);
    };
    exchanger("hx-P1", "ra", "a", false, 5e5, 0.0, 10.0, 0.107);
    spec.units.push_back({"P1", UnitKind::Producer, "hx-P1"});
    exchanger("hx-C1", "C1", "rC1", true, 0.0, 2e5, 10.0, 0.107);
    spec.units.push_back({"C1", UnitKind::Prosumer, "hx-C1"});
    for (const char* c : {"C2", "C3", "C4", "C5"}) {
        exchanger(std::string("hx-") + c, c, mirror_name(c), false, 0.0, 0.0, 10.0, 0.107);
        spec.units.push_back({c, UnitKind::Consumer, std::string("hx-") + c});
    }
    exchanger("hx-S", "S", "rS", true, 0.0, 2e5, 8.0, 2.0);
    spec.units.push_back({"S", UnitKind::Storage, "hx-S"});
    return spec;
}

std::vector<int> aroma_cells(const NetworkSpec& spec, int pipe, int exchanger, int storage) {
    std::vector<int> l;
    for (const auto& e : spec.edges) {
        if (e.kind == EdgeKind::Pipe) {
            l.push_back(pipe);
            continue;
        }
        bool is_storage = false;
        for (const auto& u : spec.units)
            if (u.edge == e.id && u.kind == UnitKind::Storage) is_storage = true;
        l.push_back(is_storage ? storage : exchanger);
    }
    return l;
}

Scenario build_aroma() {
    Scenario s;
    s.name = "aroma";
    s.network = aroma_network();
    s.fluid = Fluid{};
    std::map<std::string, double> raw{{"C1", 0.08}, {"C2", 0.34}, {"C3", 0.11}, {"C4", 0.08}, {"C5", 0.38}};
    double sum = 0.0;
    for (const auto& [k, v] : raw) sum += v;
    if (std::abs(sum - 1.0) > 1e-9)
        spdlog::debug("demand fractions sum to {:.4f}; renormalizing", sum);
    for (const auto& [k, v] : raw) s.demand_fractions[k] = v / sum;
    const int steps = 192;
    s.total_demand_kW = resample(periodic_hourly(aroma_hourly_demand_kW(), 2), SeriesKind::Demand, s.tau, steps);
    s.price = resample(periodic_hourly(aroma_hourly_price(), 2), SeriesKind::Price, s.tau, steps);
    s.T_outdoor = resample(periodic_hourly(aroma_hourly_outdoor_C(), 2), SeriesKind::Demand, s.tau, steps);
    s.l_x = aroma_cells(s.network);
    s.T_sup_min = 70.0;
    s.T_max = 95.0;
    s.T_ret_min = 40.0;
    s.surplus.enabled = true;
    s.variant = Variant::MPS;
    s.solver.max_iter = 300;
    s.solver.tol = 1e-6;
    s.solver.acceptable_tol = 1e-4;
    return s;
}

Scenario build_aroma_relief() {
    Scenario s = build_aroma();
    s.name = "aroma-relief";
    s.surplus.enabled = false;
    s.fixed_prosumer.enabled = true;
    s.fixed_prosumer.unit = "C1";
    s.fixed_prosumer.power_kW = 100.0;
    s.pump_scale = 0.06;
    s.T_sup_min = 70.0;
    s.T_max = 90.0;
    s.T_ret_min = 70.0;
    s.initial_supply_C = 85.0;
    s.initial_return_C = 70.0;
    s.initial_storage_C = 75.0;
    s.variant = Variant::MP;
    return s;
}

// ---------------------------------------------------------------- scenario semantics

void Scenario::validate() const {
    network.validate();
    if (tau <= 0) throw ConfigError("time.tau_s must be positive");
    if (t_f < 0) throw ConfigError("time.t_f must be >= 0");
    if (beta < 1) throw ConfigError("model.beta must be >= 1");
    if (plant_safety < 1) throw ConfigError("model.plant_safety must be >= 1");
    if (l_x.size() != network.edges.size()) throw ConfigError("model.l_x needs one entry per edge");
    for (int v : l_x)
        if (v < 1) throw ConfigError("model.l_x entries must be >= 1");
    ocp.validate();
    std::vector<std::string> dem;
    for (const auto& u : network.units)
        if (u.kind == UnitKind::Consumer || u.kind == UnitKind::Prosumer) dem.push_back(u.name);
    double sum = 0.0;
    for (const auto& [k, v] : demand_fractions) {
        if (std::find(dem.begin(), dem.end(), k) == dem.end())
            throw ConfigError("demand_fractions: '" + k + "' is not a consumer or prosumer");
        if (v < 0) throw ConfigError("demand_fractions: negative fraction for '" + k + "'");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw ConfigError("demand_fractions sum to " + std::to_string(sum) + ", expected 1");
    std::size_t need = static_cast<std::size_t>(t_f + ocp.N);
    if (total_demand_kW.size() < need || price.size() < need || T_outdoor.size() < need)
        throw ConfigError("series shorter than t_f + N = " + std::to_string(need) + " steps");
    const Unit* p = network.find_unit(primary_producer);
    if (!p || p->kind != UnitKind::Producer) throw ConfigError("primary_producer must name a producer");
    if ((variant == Variant::SPS || variant == Variant::MPS) && network.units_of(UnitKind::Storage).empty())
        throw ConfigError("storage variant on a network without storage");
    if (variant == Variant::MP || variant == Variant::MPS) {
        int n = static_cast<int>(network.units_of(UnitKind::Producer).size() +
                                 network.units_of(UnitKind::Prosumer).size());
        if (n < 2) throw ConfigError("multi-producer variant needs at least two producers");
    }
    if (surplus.enabled && !network.find_unit(surplus.unit)) throw ConfigError("surplus.unit not found");
    if (fixed_prosumer.enabled && !network.find_unit(fixed_prosumer.unit))
        throw ConfigError("fixed_prosumer.unit not found");
    if (pump_scale <= 0) throw ConfigError("pump_scale must be positive");
}

NetworkSpec Scenario::effective_network() const {
    NetworkSpec n = network;
    for (auto& e : n.edges) {
        e.pump_capacity *= pump_scale;
        e.pump_capacity_reverse *= pump_scale;
    }
    return n;
}

double Scenario::hour_of_step(int k) const { return std::fmod(start_hour + k * tau / 3600.0, 24.0); }

double Scenario::demand_kW(const std::string& unit, int k) const {
    auto it = demand_fractions.find(unit);
    double d = it == demand_fractions.end() ? 0.0 : it->second * total_demand_kW.at(static_cast<std::size_t>(k));
    if (fixed_prosumer.enabled && unit == fixed_prosumer.unit) return 0.0;
    if (surplus.enabled) {
        double h = hour_of_step(k);
        if (h >= surplus.start_h && h < surplus.end_h) {
            if (unit == surplus.unit) return 0.0;
            if (unit == surplus.extra_unit) d += surplus.extra_kW;
        }
    }
    return d;
}

double Scenario::surplus_kW(int k) const {
    if (!surplus.enabled) return 0.0;
    double h = hour_of_step(k);
    return (h >= surplus.start_h && h < surplus.end_h) ? surplus.power_kW : 0.0;
}

// ---------------------------------------------------------------- YAML

namespace {

template <typename T>
T get(const YAML::Node& n, const std::string& key, const T& def, const std::string& path) {
    if (!n || !n[key]) return def;
    try {
        return n[key].as<T>();
    } catch (const YAML::Exception& e) {
        throw ConfigError(path + "." + key + ": invalid value (line " + std::to_string(e.mark.line + 1) + ")");
    }
}

const char* kind_name(EdgeKind k) { return k == EdgeKind::Pipe ? "pipe" : "exchanger"; }

EdgeKind edge_kind_from(const std::string& s) {
    if (s == "pipe") return EdgeKind::Pipe;
    if (s == "exchanger") return EdgeKind::Exchanger;
    throw ConfigError("network.edges: unknown kind '" + s + "'");
}

void check_keys(const YAML::Node& n, const std::vector<std::string>& allowed, const std::string& path) {
    if (!n || !n.IsMap()) return;
    for (const auto& kv : n) {
        auto k = kv.first.as<std::string>();
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
            throw ConfigError(path + ": unknown field '" + k + "' (line " + std::to_string(kv.first.Mark().line + 1) + ")");
    }
}

NetworkSpec network_from_yaml(const YAML::Node& n) {
    if (!n) throw ConfigError("network: missing");
    if (n["preset"]) {
        auto p = n["preset"].as<std::string>();
        if (p != "aroma") throw ConfigError("network.preset: unknown preset '" + p + "'");
        check_keys(n, {"preset", "valves"}, "network");
        NetworkSpec spec = aroma_network();
        auto valves = get<std::string>(n, "valves", "preset", "network");
        if (valves == "none") {
            for (auto& e : spec.edges) e.has_valve = false;
        } else if (valves != "preset") {
            throw ConfigError("network.valves: expected preset or none");
        }
        return spec;
    }
    check_keys(n, {"nodes", "edges", "units", "mirror"}, "network");
    NetworkSpec spec;
    for (const auto& nd : n["nodes"]) spec.nodes.push_back({nd["id"].as<std::string>(), get(nd, "supply", true, "network.nodes")});
    int i = 0;
    for (const auto& ed : n["edges"]) {
        std::string path = "network.edges[" + std::to_string(i++) + "]";
        check_keys(ed, {"id", "tail", "head", "kind", "length_m", "diameter_m", "friction", "U", "q_min_Lps",
                        "q_max_Lps", "pump_Pa", "pump_reverse_Pa", "valve", "valve_coeff"},
                   path);
        Edge e;
        if (!ed["id"] || !ed["tail"] || !ed["head"]) throw ConfigError(path + ": id, tail and head are required");
        e.id = ed["id"].as<std::string>();
        e.tail = ed["tail"].as<std::string>();
        e.head = ed["head"].as<std::string>();
        e.kind = edge_kind_from(get<std::string>(ed, "kind", "pipe", path));
        e.length = get(ed, "length_m", e.length, path);
        e.diameter = get(ed, "diameter_m", e.diameter, path);
        e.friction = get(ed, "friction", e.friction, path);
        e.heat_transfer = get(ed, "U", e.heat_transfer, path);
        e.q_min = get(ed, "q_min_Lps", e.q_min * 1e3, path) * 1e-3;
        e.q_max = get(ed, "q_max_Lps", e.q_max * 1e3, path) * 1e-3;
        e.pump_capacity = get(ed, "pump_Pa", 0.0, path);
        e.pump_capacity_reverse = get(ed, "pump_reverse_Pa", 0.0, path);
        e.has_valve = get(ed, "valve", false, path);
        e.valve_coeff = get(ed, "valve_coeff", e.valve_coeff, path);
        spec.edges.push_back(e);
    }
    for (const auto& u : n["units"])
        spec.units.push_back({u["name"].as<std::string>(), unit_kind_from_string(u["kind"].as<std::string>()),
                              u["edge"].as<std::string>()});
    if (n["mirror"])
        for (const auto& kv : n["mirror"]) {
            auto a = kv.first.as<std::string>();
            auto b = kv.second.as<std::string>();
            spec.mirror[a] = b;
            spec.mirror[b] = a;
        }
    return spec;
}

void emit_network(YAML::Emitter& out, const NetworkSpec& spec) {
    out << YAML::Key << "network" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "nodes" << YAML::Value << YAML::BeginSeq;
    for (const auto& n : spec.nodes)
        out << YAML::Flow << YAML::BeginMap << YAML::Key << "id" << YAML::Value << n.id << YAML::Key << "supply"
            << YAML::Value << n.supply << YAML::EndMap;
    out << YAML::EndSeq;
    out << YAML::Key << "edges" << YAML::Value << YAML::BeginSeq;
    for (const auto& e : spec.edges) {
        out << YAML::Flow << YAML::BeginMap;
        out << YAML::Key << "id" << YAML::Value << e.id;
        out << YAML::Key << "tail" << YAML::Value << e.tail;
        out << YAML::Key << "head" << YAML::Value << e.head;
        out << YAML::Key << "kind" << YAML::Value << kind_name(e.kind);
        out << YAML::Key << "length_m" << YAML::Value << e.length;
        out << YAML::Key << "diameter_m" << YAML::Value << e.diameter;
        out << YAML::Key << "friction" << YAML::Value << e.friction;
        out << YAML::Key << "U" << YAML::Value << e.heat_transfer;
        out << YAML::Key << "q_min_Lps" << YAML::Value << e.q_min * 1e3;
        out << YAML::Key << "q_max_Lps" << YAML::Value << e.q_max * 1e3;
        out << YAML::Key << "pump_Pa" << YAML::Value << e.pump_capacity;
        out << YAML::Key << "pump_reverse_Pa" << YAML::Value << e.pump_capacity_reverse;
        out << YAML::Key << "valve" << YAML::Value << e.has_valve;
        out << YAML::Key << "valve_coeff" << YAML::Value << e.valve_coeff;
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;
    out << YAML::Key << "units" << YAML::Value << YAML::BeginSeq;
    for (const auto& u : spec.units)
        out << YAML::Flow << YAML::BeginMap << YAML::Key << "name" << YAML::Value << u.name << YAML::Key << "kind"
            << YAML::Value << to_string(u.kind) << YAML::Key << "edge" << YAML::Value << u.edge << YAML::EndMap;
    out << YAML::EndSeq;
    out << YAML::Key << "mirror" << YAML::Value << YAML::BeginMap;
    for (const auto& [a, b] : spec.mirror)
        if (a < b) out << YAML::Key << a << YAML::Value << b;
    out << YAML::EndMap;
    out << YAML::EndMap;
}

std::vector<double> series_from_yaml(const YAML::Node& series, const std::string& inline_key,
                                     const std::string& csv_key, SeriesKind kind, double tau, int steps,
                                     const std::string& base_dir, std::string& csv_path) {
    if (series && series[inline_key]) return series[inline_key].as<std::vector<double>>();
    if (series && series[csv_key]) {
        fs::path p = series[csv_key].as<std::string>();
        if (p.is_relative()) p = fs::path(base_dir) / p;
        csv_path = series[csv_key].as<std::string>();
        if (!fs::exists(p)) throw ConfigError("series." + csv_key + ": file not found: " + p.string());
        return ingest_series(p.string(), kind, tau, steps);
    }
    throw ConfigError("series: need '" + inline_key + "' or '" + csv_key + "'");
}

}  // namespace

Scenario scenario_from_yaml(const std::string& text, const std::string& base_dir) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ConfigError("config parse error at line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
    }
    if (!root.IsMap()) throw ConfigError("config: top level must be a mapping");
    check_keys(root, {"name", "variant", "network", "fluid", "demand_fractions", "series", "time", "model", "bounds",
                      "primary_producer", "pump_scale", "storage", "initial", "surplus", "fixed_prosumer", "rbc",
                      "ocp", "solver"},
               "config");
    Scenario s;
    s.name = get<std::string>(root, "name", "scenario", "config");
    s.variant = variant_from_string(get<std::string>(root, "variant", "mps", "config"));
    s.network = network_from_yaml(root["network"]);

    auto fl = root["fluid"];
    check_keys(fl, {"rho", "cp", "T_ambient_C"}, "fluid");
    s.fluid.rho = get(fl, "rho", s.fluid.rho, "fluid");
    s.fluid.cp = get(fl, "cp", s.fluid.cp, "fluid");
    s.fluid.T_a = get(fl, "T_ambient_C", s.fluid.T_a, "fluid");

    auto tm = root["time"];
    check_keys(tm, {"tau_s", "t_f", "start_hour"}, "time");
    s.tau = get(tm, "tau_s", s.tau, "time");
    s.t_f = get(tm, "t_f", s.t_f, "time");
    s.start_hour = get(tm, "start_hour", s.start_hour, "time");

    auto oc = root["ocp"];
    check_keys(oc, {"N", "N_c", "block", "R_temp", "temp_power", "R_diff", "R_sto", "R_slack", "R_slack_linear",
                    "eps_comp", "complementarity", "comp_bound", "nonnegativity_rows", "storage_balance",
                    "balance_fraction", "q_r_max_Lps", "q_nominal_Lps"},
               "ocp");
    s.ocp.N = get(oc, "N", s.ocp.N, "ocp");
    s.ocp.N_c = get(oc, "N_c", s.ocp.N, "ocp");
    s.ocp.block = get(oc, "block", s.ocp.block, "ocp");
    s.ocp.R_temp = get(oc, "R_temp", s.ocp.R_temp, "ocp");
    s.ocp.temp_power = get(oc, "temp_power", s.ocp.temp_power, "ocp");
    s.ocp.R_diff = get(oc, "R_diff", s.ocp.R_diff, "ocp");
    s.ocp.R_sto = get(oc, "R_sto", s.ocp.R_sto, "ocp");
    s.ocp.R_slack = get(oc, "R_slack", s.ocp.R_slack, "ocp");
    s.ocp.R_slack_linear = get(oc, "R_slack_linear", s.ocp.R_slack_linear, "ocp");
    s.ocp.eps_comp = get(oc, "eps_comp", s.ocp.eps_comp, "ocp");
    {
        auto mode = get<std::string>(oc, "complementarity", "penalty", "ocp");
        if (mode == "penalty") s.ocp.complementarity = ComplementarityMode::Penalty;
        else if (mode == "strict") s.ocp.complementarity = ComplementarityMode::Strict;
        else throw ConfigError("ocp.complementarity: expected penalty or strict");
    }
    s.ocp.comp_bound = get(oc, "comp_bound", s.ocp.comp_bound, "ocp");
    s.ocp.nonnegativity_rows = get(oc, "nonnegativity_rows", s.ocp.nonnegativity_rows, "ocp");
    s.ocp.storage_balance = get(oc, "storage_balance", s.ocp.storage_balance, "ocp");
    s.ocp.balance_fraction = get(oc, "balance_fraction", s.ocp.balance_fraction, "ocp");
    s.ocp.q_r_max = get(oc, "q_r_max_Lps", s.ocp.q_r_max, "ocp");
    s.ocp.q_nominal = get(oc, "q_nominal_Lps", s.ocp.q_nominal, "ocp");

    auto sv = root["solver"];
    check_keys(sv, {"max_iter", "max_wall_seconds", "tol", "acceptable_tol", "acceptable_iter", "mu_init",
                    "warm_mu_init"},
               "solver");
    s.solver.max_iter = get(sv, "max_iter", 300, "solver");
    s.solver.max_wall_seconds = get(sv, "max_wall_seconds", s.solver.max_wall_seconds, "solver");
    s.solver.tol = get(sv, "tol", 1e-6, "solver");
    s.solver.acceptable_tol = get(sv, "acceptable_tol", 1e-4, "solver");
    s.solver.acceptable_iter = get(sv, "acceptable_iter", s.solver.acceptable_iter, "solver");
    s.solver.mu_init = get(sv, "mu_init", s.solver.mu_init, "solver");
    s.solver.warm_mu_init = get(sv, "warm_mu_init", s.solver.warm_mu_init, "solver");

    auto fr = root["demand_fractions"];
    if (!fr || !fr.IsMap()) throw ConfigError("demand_fractions: missing or not a mapping");
    double sum = 0.0;
    for (const auto& kv : fr) {
        double v = kv.second.as<double>();
        s.demand_fractions[kv.first.as<std::string>()] = v;
        sum += v;
    }
    if (sum <= 0) throw ConfigError("demand_fractions: sum must be positive");
    if (std::abs(sum - 1.0) > 1e-9) {
        spdlog::warn("demand_fractions sum to {:.6f}; renormalizing to 1", sum);
        for (auto& [k, v] : s.demand_fractions) v /= sum;
    }

    const int steps_needed = s.t_f + s.ocp.N;
    int steps = std::max(steps_needed, 192);
    auto se = root["series"];
    check_keys(se, {"demand_kW", "price", "outdoor_C", "demand_csv", "price_csv", "outdoor_csv", "steps"}, "series");
    steps = get(se, "steps", steps, "series");
    s.total_demand_kW = series_from_yaml(se, "demand_kW", "demand_csv", SeriesKind::Demand, s.tau, steps, base_dir,
                                         s.demand_csv);
    s.price = series_from_yaml(se, "price", "price_csv", SeriesKind::Price, s.tau, steps, base_dir, s.price_csv);
    s.T_outdoor = series_from_yaml(se, "outdoor_C", "outdoor_csv", SeriesKind::Demand, s.tau, steps, base_dir,
                                   s.outdoor_csv);

    auto md = root["model"];
    check_keys(md, {"beta", "plant_safety", "l_x", "l_x_pipe", "l_x_exchanger", "l_x_storage"}, "model");
    s.beta = get(md, "beta", s.beta, "model");
    s.plant_safety = get(md, "plant_safety", s.plant_safety, "model");
    if (md && md["l_x"]) {
        s.l_x = md["l_x"].as<std::vector<int>>();
    } else {
        s.l_x = aroma_cells(s.network, get(md, "l_x_pipe", 2, "model"), get(md, "l_x_exchanger", 1, "model"),
                            get(md, "l_x_storage", 4, "model"));
    }

    auto bd = root["bounds"];
    check_keys(bd, {"T_sup_min_C", "T_max_C", "T_ret_min_C", "P_max_kW"}, "bounds");
    s.T_sup_min = get(bd, "T_sup_min_C", s.T_sup_min, "bounds");
    s.T_max = get(bd, "T_max_C", s.T_max, "bounds");
    s.T_ret_min = get(bd, "T_ret_min_C", s.T_ret_min, "bounds");
    s.P_max_kW = get(bd, "P_max_kW", s.P_max_kW, "bounds");

    s.primary_producer = get<std::string>(root, "primary_producer", s.primary_producer, "config");
    s.pump_scale = get(root, "pump_scale", s.pump_scale, "config");
    auto st = root["storage"];
    check_keys(st, {"target_C"}, "storage");
    s.storage_target_C = get(st, "target_C", s.storage_target_C, "storage");
    auto in = root["initial"];
    check_keys(in, {"supply_C", "return_C", "storage_C"}, "initial");
    s.initial_supply_C = get(in, "supply_C", s.initial_supply_C, "initial");
    s.initial_return_C = get(in, "return_C", s.initial_return_C, "initial");
    s.initial_storage_C = get(in, "storage_C", s.initial_storage_C, "initial");

    auto su = root["surplus"];
    check_keys(su, {"enabled", "unit", "start_h", "end_h", "power_kW", "extra_unit", "extra_kW"}, "surplus");
    s.surplus.enabled = get(su, "enabled", false, "surplus");
    s.surplus.unit = get(su, "unit", s.surplus.unit, "surplus");
    s.surplus.start_h = get(su, "start_h", s.surplus.start_h, "surplus");
    s.surplus.end_h = get(su, "end_h", s.surplus.end_h, "surplus");
    s.surplus.power_kW = get(su, "power_kW", s.surplus.power_kW, "surplus");
    s.surplus.extra_unit = get(su, "extra_unit", s.surplus.extra_unit, "surplus");
    s.surplus.extra_kW = get(su, "extra_kW", s.surplus.extra_kW, "surplus");

    auto fp = root["fixed_prosumer"];
    check_keys(fp, {"enabled", "unit", "power_kW"}, "fixed_prosumer");
    s.fixed_prosumer.enabled = get(fp, "enabled", false, "fixed_prosumer");
    s.fixed_prosumer.unit = get(fp, "unit", s.fixed_prosumer.unit, "fixed_prosumer");
    s.fixed_prosumer.power_kW = get(fp, "power_kW", s.fixed_prosumer.power_kW, "fixed_prosumer");

    auto rb = root["rbc"];
    check_keys(rb, {"a", "b", "T_ref", "T_min", "T_max", "dT_design", "min_flow_Lps", "gain"}, "rbc");
    s.rbc.a = get(rb, "a", s.rbc.a, "rbc");
    s.rbc.b = get(rb, "b", s.rbc.b, "rbc");
    s.rbc.T_ref = get(rb, "T_ref", s.rbc.T_ref, "rbc");
    s.rbc.T_min = get(rb, "T_min", s.rbc.T_min, "rbc");
    s.rbc.T_max = get(rb, "T_max", s.rbc.T_max, "rbc");
    s.rbc.dT_design = get(rb, "dT_design", s.rbc.dT_design, "rbc");
    s.rbc.min_flow = get(rb, "min_flow_Lps", s.rbc.min_flow, "rbc");
    s.rbc.gain = get(rb, "gain", s.rbc.gain, "rbc");

    s.validate();
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    fs::path p(path);
    return scenario_from_yaml(ss.str(), p.has_parent_path() ? p.parent_path().string() : ".");
}

std::string scenario_to_yaml(const Scenario& s) {
    YAML::Emitter out;
    out.SetDoublePrecision(17);
    out << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << s.name;
    out << YAML::Key << "variant" << YAML::Value << to_string(s.variant);
    emit_network(out, s.network);
    out << YAML::Key << "fluid" << YAML::Value << YAML::BeginMap << YAML::Key << "rho" << YAML::Value << s.fluid.rho
        << YAML::Key << "cp" << YAML::Value << s.fluid.cp << YAML::Key << "T_ambient_C" << YAML::Value << s.fluid.T_a
        << YAML::EndMap;
    out << YAML::Key << "demand_fractions" << YAML::Value << YAML::BeginMap;
    for (const auto& [k, v] : s.demand_fractions) out << YAML::Key << k << YAML::Value << v;
    out << YAML::EndMap;
    out << YAML::Key << "series" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "steps" << YAML::Value << static_cast<int>(s.total_demand_kW.size());
    out << YAML::Key << "demand_kW" << YAML::Value << YAML::Flow << s.total_demand_kW;
    out << YAML::Key << "price" << YAML::Value << YAML::Flow << s.price;
    out << YAML::Key << "outdoor_C" << YAML::Value << YAML::Flow << s.T_outdoor;
    out << YAML::EndMap;
    out << YAML::Key << "time" << YAML::Value << YAML::BeginMap << YAML::Key << "tau_s" << YAML::Value << s.tau
        << YAML::Key << "t_f" << YAML::Value << s.t_f << YAML::Key << "start_hour" << YAML::Value << s.start_hour
        << YAML::EndMap;
    out << YAML::Key << "model" << YAML::Value << YAML::BeginMap << YAML::Key << "beta" << YAML::Value << s.beta
        << YAML::Key << "plant_safety" << YAML::Value << s.plant_safety << YAML::Key << "l_x" << YAML::Value
        << YAML::Flow << s.l_x << YAML::EndMap;
    out << YAML::Key << "bounds" << YAML::Value << YAML::BeginMap << YAML::Key << "T_sup_min_C" << YAML::Value
        << s.T_sup_min << YAML::Key << "T_max_C" << YAML::Value << s.T_max << YAML::Key << "T_ret_min_C"
        << YAML::Value << s.T_ret_min << YAML::Key << "P_max_kW" << YAML::Value << s.P_max_kW << YAML::EndMap;
    out << YAML::Key << "primary_producer" << YAML::Value << s.primary_producer;
    out << YAML::Key << "pump_scale" << YAML::Value << s.pump_scale;
    out << YAML::Key << "storage" << YAML::Value << YAML::BeginMap << YAML::Key << "target_C" << YAML::Value
        << s.storage_target_C << YAML::EndMap;
    out << YAML::Key << "initial" << YAML::Value << YAML::BeginMap << YAML::Key << "supply_C" << YAML::Value
        << s.initial_supply_C << YAML::Key << "return_C" << YAML::Value << s.initial_return_C << YAML::Key
        << "storage_C" << YAML::Value << s.initial_storage_C << YAML::EndMap;
    out << YAML::Key << "surplus" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "enabled" << YAML::Value << s.surplus.enabled;
    out << YAML::Key << "unit" << YAML::Value << s.surplus.unit;
    out << YAML::Key << "start_h" << YAML::Value << s.surplus.start_h;
    out << YAML::Key << "end_h" << YAML::Value << s.surplus.end_h;
    out << YAML::Key << "power_kW" << YAML::Value << s.surplus.power_kW;
    out << YAML::Key << "extra_unit" << YAML::Value << s.surplus.extra_unit;
    out << YAML::Key << "extra_kW" << YAML::Value << s.surplus.extra_kW;
    out << YAML::EndMap;
    out << YAML::Key << "fixed_prosumer" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "enabled" << YAML::Value << s.fixed_prosumer.enabled;
    out << YAML::Key << "unit" << YAML::Value << s.fixed_prosumer.unit;
    out << YAML::Key << "power_kW" << YAML::Value << s.fixed_prosumer.power_kW;
    out << YAML::EndMap;
    out << YAML::Key << "rbc" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "a" << YAML::Value << s.rbc.a << YAML::Key << "b" << YAML::Value << s.rbc.b;
    out << YAML::Key << "T_ref" << YAML::Value << s.rbc.T_ref;
    out << YAML::Key << "T_min" << YAML::Value << s.rbc.T_min << YAML::Key << "T_max" << YAML::Value << s.rbc.T_max;
    out << YAML::Key << "dT_design" << YAML::Value << s.rbc.dT_design;
    out << YAML::Key << "min_flow_Lps" << YAML::Value << s.rbc.min_flow;
    out << YAML::Key << "gain" << YAML::Value << s.rbc.gain;
    out << YAML::EndMap;
    out << YAML::Key << "ocp" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "N" << YAML::Value << s.ocp.N << YAML::Key << "N_c" << YAML::Value << s.ocp.N_c;
    out << YAML::Key << "block" << YAML::Value << s.ocp.block;
    out << YAML::Key << "R_temp" << YAML::Value << s.ocp.R_temp;
    out << YAML::Key << "temp_power" << YAML::Value << s.ocp.temp_power;
    out << YAML::Key << "R_diff" << YAML::Value << s.ocp.R_diff;
    out << YAML::Key << "R_sto" << YAML::Value << s.ocp.R_sto;
    out << YAML::Key << "R_slack" << YAML::Value << s.ocp.R_slack;
    out << YAML::Key << "R_slack_linear" << YAML::Value << s.ocp.R_slack_linear;
    out << YAML::Key << "eps_comp" << YAML::Value << s.ocp.eps_comp;
    out << YAML::Key << "complementarity" << YAML::Value
        << (s.ocp.complementarity == ComplementarityMode::Strict ? "strict" : "penalty");
    out << YAML::Key << "comp_bound" << YAML::Value << s.ocp.comp_bound;
    out << YAML::Key << "nonnegativity_rows" << YAML::Value << s.ocp.nonnegativity_rows;
    out << YAML::Key << "storage_balance" << YAML::Value << s.ocp.storage_balance;
    out << YAML::Key << "balance_fraction" << YAML::Value << s.ocp.balance_fraction;
    out << YAML::Key << "q_r_max_Lps" << YAML::Value << s.ocp.q_r_max;
    out << YAML::Key << "q_nominal_Lps" << YAML::Value << s.ocp.q_nominal;
    out << YAML::EndMap;
    out << YAML::Key << "solver" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "max_iter" << YAML::Value << s.solver.max_iter;
    out << YAML::Key << "max_wall_seconds" << YAML::Value << s.solver.max_wall_seconds;
    out << YAML::Key << "tol" << YAML::Value << s.solver.tol;
    out << YAML::Key << "acceptable_tol" << YAML::Value << s.solver.acceptable_tol;
    out << YAML::Key << "acceptable_iter" << YAML::Value << s.solver.acceptable_iter;
    out << YAML::Key << "mu_init" << YAML::Value << s.solver.mu_init;
    out << YAML::Key << "warm_mu_init" << YAML::Value << s.solver.warm_mu_init;
    out << YAML::EndMap;
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

void save_scenario(const Scenario& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config file '" + path + "'");
    out << scenario_to_yaml(s);
}

bool scenarios_equal(const Scenario& a, const Scenario& b) { return scenario_to_yaml(a) == scenario_to_yaml(b); }

std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace dhn
