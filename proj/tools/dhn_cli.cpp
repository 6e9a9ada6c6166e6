// Command-line entry points: validate, simulate, compare, bench, export-plots.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "dhn/results.hpp"
#include "dhn/scenario.hpp"
#include "dhn/simulation.hpp"

namespace fs = std::filesystem;
using namespace dhn;

namespace {

enum Exit { kOk = 0, kConfig = 1, kInfeasible = 2, kFallback = 3 };

std::vector<Variant> parse_variants(const std::string& list) {
    std::vector<Variant> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(variant_from_string(item));
    if (out.empty()) throw ConfigError("--variants: empty list");
    return out;
}

std::vector<int> parse_ints(const std::string& list, const char* what) {
    std::vector<int> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw ConfigError(std::string(what) + ": '" + item + "' is not an integer");
        }
    }
    return out;
}

int exit_for(const ClosedLoopRecord& rec) {
    if (rec.aborted) return kInfeasible;
    if (rec.metrics.fallbacks > 0) return kFallback;
    return kOk;
}

void print_progress(const StepRecord& st) {
    spdlog::info("k={:3d} h={:5.2f} status={} it={} t={:.2f}s cost={:.3f}", st.k, st.hour, st.status, st.iterations,
                 st.solve_seconds, st.cost);
}

int cmd_validate(const std::string& config) {
    Scenario sc = load_scenario(config);
    NetworkSpec spec = sc.effective_network();
    auto model = make_system_model(spec, sc.l_x, sc.fluid);
    const auto& rep = model->hm.valves;
    std::cout << fmt::format("network '{}': {} nodes, {} edges, {} directed edges\n", sc.name, spec.nodes.size(),
                             spec.edges.size(), model->g.num_edges());
    std::cout << fmt::format("cycles m_r = {}, fundamental loops m_f = {}\n", model->loops.m_r, model->loops.m_f);
    std::cout << fmt::format("states: {} junctions, {} cells\n", model->tg.num_junctions, model->tg.num_cells);
    std::cout << "valves:";
    for (int e : rep.valve_edges) {
        const auto& de = model->g.edges[static_cast<std::size_t>(e)];
        std::cout << " " << spec.edges[static_cast<std::size_t>(de.original)].id << (de.reverse ? "(rev)" : "");
    }
    std::cout << "\n";
    std::cout << fmt::format("rank(F Pi) = {} of {}\n", rep.rank, model->loops.m_f);
    std::cout << fmt::format("Z2 nonnegative: {} (min entry {:.3e})\n", rep.z2_nonnegative ? "yes" : "no",
                             rep.z2_min_entry);
    if (!rep.assumption_satisfied) {
        std::cout << "valve assumption: FAILED\n";
        if (!rep.deficient_loops.empty()) {
            std::cout << "loops without independent valves:";
            for (int i : rep.deficient_loops) std::cout << " " << i;
            std::cout << "\n";
        }
        std::cout << "suggested valves:";
        for (const auto& id : suggest_valve_placement(spec)) std::cout << " " << id;
        std::cout << "\n";
        return kConfig;
    }
    std::cout << "valve assumption: ok\n";
    return kOk;
}

int cmd_simulate(const std::string& config, const std::string& variant, int steps, const std::string& out_root,
                 bool quiet) {
    Scenario sc = load_scenario(config);
    Variant v = variant.empty() ? sc.variant : variant_from_string(variant);
    int t_f = steps > 0 ? steps : sc.t_f;
    if (t_f > sc.t_f) {
        sc.t_f = t_f;
        sc.validate();
    }
    auto rec = run_variant(sc, v, t_f, quiet ? ProgressFn{} : ProgressFn(print_progress));
    std::string dir = make_run_dir(out_root, sc);
    write_bundle(dir, sc, rec);
    std::cout << metrics_json(rec);
    std::cout << "results: " << dir << "\n";
    return exit_for(rec);
}

int cmd_compare(const std::string& config, const std::string& variants, int steps, const std::string& out_root) {
    Scenario sc = load_scenario(config);
    auto vs = parse_variants(variants);
    int t_f = steps > 0 ? steps : sc.t_f;
    if (t_f > sc.t_f) {
        sc.t_f = t_f;
        sc.validate();
    }
    std::vector<ClosedLoopRecord> recs(vs.size());
    std::vector<std::string> errors(vs.size());
    {
        std::vector<std::jthread> pool;
        for (std::size_t i = 0; i < vs.size(); ++i)
            pool.emplace_back([&, i] {
                try {
                    recs[i] = run_variant(sc, vs[i], t_f);
                } catch (const std::exception& e) {
                    errors[i] = e.what();
                }
            });
    }
    for (std::size_t i = 0; i < vs.size(); ++i)
        if (!errors[i].empty()) throw ConfigError(std::string(to_string(vs[i])) + ": " + errors[i]);

    std::string dir = make_run_dir(out_root, sc);
    std::ostringstream table;
    table << "variant,cost_eur,atv_C,dv_percent,fallbacks,median_solve_s\n";
    std::cout << fmt::format("{:<8} {:>12} {:>10} {:>10} {:>10} {:>14}\n", "variant", "cost [EUR]", "ATV [C]",
                             "DV [%]", "fallbacks", "median solve");
    int code = kOk;
    for (std::size_t i = 0; i < vs.size(); ++i) {
        const auto& m = recs[i].metrics;
        std::cout << fmt::format("{:<8} {:>12.2f} {:>10.4f} {:>10.3f} {:>10d} {:>13.2f}s\n", to_string(vs[i]), m.cost,
                                 m.atv, m.dv, m.fallbacks, m.median_solve);
        table << fmt::format("{},{:.6f},{:.6f},{:.6f},{},{:.4f}\n", to_string(vs[i]), m.cost, m.atv, m.dv, m.fallbacks,
                             m.median_solve);
        write_bundle((fs::path(dir) / to_string(vs[i])).string(), sc, recs[i]);
        code = std::max(code, exit_for(recs[i]));
    }
    std::ofstream(fs::path(dir) / "compare.csv") << table.str();
    std::cout << "results: " << dir << "\n";
    return code;
}

int cmd_bench(const std::string& config, const std::string& horizons, const std::string& cells, int steps,
              const std::string& variant, const std::string& out_root) {
    Scenario base = load_scenario(config);
    auto Ns = parse_ints(horizons, "--horizons");
    auto Ls = parse_ints(cells, "--pipe-cells");
    Variant v = variant.empty() ? base.variant : variant_from_string(variant);
    if (v == Variant::RBC) throw ConfigError("bench needs an MPC variant");
    std::ostringstream table;
    table << "states,horizon,steps,median_s,p90_s,mean_s,fallbacks\n";
    std::cout << fmt::format("{:>7} {:>8} {:>10} {:>10} {:>10}\n", "states", "horizon", "median[s]", "p90[s]",
                             "fallbacks");
    for (int l : Ls) {
        for (int N : Ns) {
            Scenario sc = base;
            sc.l_x = aroma_cells(sc.network, l, 1, 4);
            if (l < 1 || N < 1) throw ConfigError("bench: cell counts and horizons must be positive");
            sc.ocp.N = N;
            sc.ocp.N_c = N;
            sc.t_f = steps;
            sc.validate();
            auto rec = run_variant(sc, v, steps);
            NetworkSpec spec = sc.effective_network();
            int states = make_system_model(spec, sc.l_x, sc.fluid)->num_states();
            const auto& m = rec.metrics;
            std::cout << fmt::format("{:>7} {:>8} {:>10.3f} {:>10.3f} {:>10}\n", states, N, m.median_solve, m.p90_solve,
                                     m.fallbacks);
            table << fmt::format("{},{},{},{:.4f},{:.4f},{:.4f},{}\n", states, N, steps, m.median_solve, m.p90_solve,
                                 m.mean_solve, m.fallbacks);
        }
    }
    std::string dir = make_run_dir(out_root, base);
    std::ofstream(fs::path(dir) / "bench.csv") << table.str();
    std::cout << "results: " << dir << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"District heating network simulation and economic MPC"};
    app.require_subcommand(1);
    std::string log_level = "warn";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error")->capture_default_str();

    std::string config, variant, variants = "rbc,sp,sps,mp,mps", out_root = "runs", run_dir;
    std::string horizons = "12,20,32,40", cells = "2", bench_variant;
    int steps = 0, bench_steps = 4;
    bool quiet = false;

    auto* validate = app.add_subcommand("validate", "Check the network and the valve assumption");
    validate->add_option("config", config, "Scenario YAML")->required();

    auto* simulate = app.add_subcommand("simulate", "Run one closed loop and write a result bundle");
    simulate->add_option("config", config, "Scenario YAML")->required();
    simulate->add_option("--variant", variant, "rbc, sp, sps, mp or mps (default: from config)");
    simulate->add_option("--steps", steps, "Closed-loop steps (default: t_f from config)");
    simulate->add_option("--out", out_root, "Root directory for run folders")->capture_default_str();
    simulate->add_flag("--quiet", quiet, "No per-step progress");

    auto* compare = app.add_subcommand("compare", "Run several variants and tabulate cost, ATV and DV");
    compare->add_option("config", config, "Scenario YAML")->required();
    compare->add_option("--variants", variants, "Comma-separated variant list")->capture_default_str();
    compare->add_option("--steps", steps, "Closed-loop steps (default: t_f from config)");
    compare->add_option("--out", out_root, "Root directory for run folders")->capture_default_str();

    auto* bench = app.add_subcommand("bench", "Median MPC solve time over horizons and model sizes");
    bench->add_option("config", config, "Scenario YAML")->required();
    bench->add_option("--horizons", horizons, "Comma-separated horizons")->capture_default_str();
    bench->add_option("--pipe-cells", cells, "Comma-separated cells per pipe (state sweep)")->capture_default_str();
    bench->add_option("--steps", bench_steps, "Closed-loop steps per point")->capture_default_str();
    bench->add_option("--variant", bench_variant, "MPC variant (default: from config)");
    bench->add_option("--out", out_root, "Root directory for run folders")->capture_default_str();

    auto* plots = app.add_subcommand("export-plots", "Long-format CSV (time, series, value) from a run folder");
    plots->add_option("run_dir", run_dir, "Run folder written by simulate")->required();

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(spdlog::level::from_str(log_level));
    if (simulate->parsed() && !quiet && spdlog::get_level() > spdlog::level::info) spdlog::set_level(spdlog::level::info);

    try {
        if (validate->parsed()) return cmd_validate(config);
        if (simulate->parsed()) return cmd_simulate(config, variant, steps, out_root, quiet);
        if (compare->parsed()) return cmd_compare(config, variants, steps, out_root);
        if (bench->parsed()) return cmd_bench(config, horizons, cells, bench_steps, bench_variant, out_root);
        if (plots->parsed()) {
            std::cout << export_plots(run_dir) << "\n";
            return kOk;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const AssumptionViolation& e) {
        std::cerr << "valve assumption: " << e.what() << "\n";
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInfeasible;
    }
    return kOk;
}
