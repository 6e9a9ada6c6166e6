// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset. Exit code 1 when any selected criterion fails.
// The report is also written to acceptance_report.txt in the working directory.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "dhn/hydraulics.hpp"
#include "dhn/ocp.hpp"
#include "dhn/scenario.hpp"
#include "dhn/simulation.hpp"
#include "dhn/system.hpp"
#include "dhn/thermal.hpp"
#include "gen.hpp"
#include "toy.hpp"

using namespace dhn;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::shared_ptr<SystemModel> aroma_model() {
    Scenario sc = build_aroma();
    return make_system_model(sc.effective_network(), sc.l_x, sc.fluid);
}

Outcome hydraulic_soundness() {
    auto t0 = Clock::now();
    auto m = aroma_model();
    const auto& hm = m->hm;
    if (!hm.valves.assumption_satisfied) return {false, "valve assumption not satisfied"};
    AllCycles all = enumerate_all_cycles(m->g, hm.F);
    std::mt19937_64 rng(2024);
    double worst = 0.0, min_nu = 0.0, r_lo = 0.0, r_hi = 1.0;
    for (int s = 0; s < 1000; ++s) {
        Eigen::VectorXd q_r = test::feasible_cycle_flows(hm, rng);
        Eigen::VectorXd q = hm.F_r.transpose() * q_r;
        ActuatorState act = recover_actuators(hm, q);
        if (act.nu.size()) min_nu = std::min(min_nu, act.nu.minCoeff());
        if (act.r.size()) {
            r_lo = std::min(r_lo, act.r.minCoeff());
            r_hi = std::max(r_hi, act.r.maxCoeff());
        }
        worst = std::max(worst, verify_kirchhoff_all_cycles(hm, q, act, all.cycles).max_rel);
    }
    double t = seconds_since(t0);
    bool ok = min_nu >= 0.0 && r_lo >= 0.0 && r_hi <= 1.0 && worst <= 1e-8 && t < 30.0;
    return {ok, fmt::format("1000 samples, {} cycles checked, max Kirchhoff residual {:.2e}, min nu {:.2e}, "
                            "r in [{:.2f}, {:.2f}], {:.1f} s",
                            all.cycles.size(), worst, min_nu, r_lo, r_hi, t)};
}

Outcome convexity() {
    auto t0 = Clock::now();
    auto m = aroma_model();
    const auto& hm = m->hm;
    double worst_eig = 0.0;
    for (const auto& Z : hm.Z) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Z);
        double n = Z.norm();
        if (n > 0) worst_eig = std::min(worst_eig, es.eigenvalues().minCoeff() / n);
    }
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst_gap = 0.0;
    for (int s = 0; s < 10000; ++s) {
        Eigen::VectorXd a = test::feasible_cycle_flows(hm, rng), b = test::feasible_cycle_flows(hm, rng);
        double t = u(rng);
        Eigen::VectorXd fa = loop_feasibility(hm, a), fb = loop_feasibility(hm, b);
        Eigen::VectorXd fm = loop_feasibility(hm, t * a + (1 - t) * b);
        for (int i = 0; i < fm.size(); ++i) {
            double rhs = t * fa[i] + (1 - t) * fb[i];
            worst_gap = std::max(worst_gap, (fm[i] - rhs) / (1.0 + std::abs(rhs)));
        }
    }
    double t = seconds_since(t0);
    bool ok = worst_eig >= -1e-10 && worst_gap <= 1e-9 && t < 10.0;
    return {ok, fmt::format("min eig/norm {:.2e} over {} loops, max convexity gap {:.2e} on 10000 samples, {:.1f} s",
                            worst_eig, hm.Z.size(), worst_gap, t)};
}

Outcome thermal_conservation() {
    auto t0 = Clock::now();
    const int n = 50;
    std::vector<RefinedEdge> edges;
    for (int i = 0; i < n; ++i) edges.push_back({i, (i + 1) % n, 0});
    Eigen::VectorXd V(n);
    for (int i = 0; i < n; ++i) V[i] = 0.4 + 0.02 * i;
    ThermalGraph tg = thermal_graph_from_edges(0, V, Eigen::VectorXd::Zero(n), edges);
    InjectionLayout inj;
    inj.B.resize(n, 0);
    ImplicitEulerStepper stepper(tg, inj);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(10.0, 90.0);
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x[i] = u(rng);
    Eigen::VectorXd q = Eigen::VectorXd::Constant(1, 0.03);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
        double e0 = V.dot(x);
        x = stepper.step(x, q, Eigen::VectorXd(0), 900.0);
        worst = std::max(worst, std::abs(V.dot(x) - e0) / std::abs(e0));
    }
    double t = seconds_since(t0);
    return {worst <= 1e-9 && t < 5.0, fmt::format("max relative drift per step {:.2e} over 1000 steps, {:.2f} s", worst, t)};
}

Outcome three_node_oracle() {
    // edges 1->2, 2->1, 1->3; q_k contributes -q_k on (tail, tail) and +q_k on (head, tail)
    Eigen::Vector3d alpha(0.1, 0.2, 0.3);
    ThermalGraph tg = thermal_graph_from_edges(0, Eigen::Vector3d::Ones(), alpha, {{0, 1, 0}, {1, 0, 1}, {0, 2, 2}});
    Eigen::Vector3d q(2.0, 3.0, 5.0);
    Eigen::Matrix3d want;
    want << -(q[0] + q[2]) - alpha[0], q[1], 0.0,  //
        q[0], -q[1] - alpha[1], 0.0,               //
        q[2], 0.0, -alpha[2];
    Eigen::MatrixXd got = Eigen::MatrixXd(assemble_A(tg, q));
    bool ok = got == Eigen::MatrixXd(want);
    return {ok, ok ? "A(q) entries equal the symbolic matrix exactly" : "A(q) differs from the symbolic matrix"};
}

Outcome derivatives() {
    auto t0 = Clock::now();
    auto m = make_system_model(test::toy_loop(), {6, 6, 2, 2}, Fluid{});
    if (m->num_states() != 20) return {false, "toy model does not have 20 states"};
    const int N = 6;
    HorizonData d;
    d.N = N;
    d.demand_units = {"C"};
    d.demand_kW.resize(1, N);
    for (int t = 0; t < N; ++t) {
        d.demand_kW(0, t) = 40.0 + 7.0 * t;
        d.price.push_back(55.0 + 20.0 * (t % 2));
    }
    ProducerInput p;
    p.unit = "P";
    p.lo_kW.assign(N, 0.0);
    p.hi_kW.assign(N, 500.0);
    d.producers.push_back(p);
    d.T_sup_min = 70.0;
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst_g = 0.0, worst_j = 0.0;
    int points = 0;
    for (int power : {1, 2}) {
        OcpOptions o;
        o.N = N;
        o.N_c = N;
        o.block = 2;
        o.temp_power = power;
        OcpProblem P = build_ocp(*m, d, Eigen::VectorXd::Constant(20, 45.0), o);
        const QuadraticNlp& nlp = *P.nlp;
        Eigen::VectorXd cold = cold_start(*m, P);
        for (int s = 0; s < 50; ++s, ++points) {
            Eigen::VectorXd z = cold;
            for (int b = 0; b < P.lay.n_blocks; ++b) {
                for (int l = 0; l < P.lay.m_r; ++l) z[P.lay.q(b, l)] = cold[P.lay.q(b, l)] * (0.2 + 0.8 * u(rng));
                z[P.lay.p(b, 0)] = cold[P.lay.p(b, 0)] * (0.5 + u(rng));
            }
            complete_guess(*m, P, z);
            if (max_violation(nlp, z) > 1e-6) return {false, "could not construct a feasible point"};
            Eigen::VectorXd grad;
            nlp.gradient(z, grad);
            Eigen::MatrixXd J = Eigen::MatrixXd(nlp.jacobian(z));
            for (int i = 0; i < nlp.num_vars(); ++i) {
                const double h = 1e-4 * std::max(1.0, std::abs(z[i]));
                Eigen::VectorXd zp = z, zm = z;
                zp[i] += h;
                zm[i] -= h;
                double fd = (nlp.objective(zp) - nlp.objective(zm)) / (2 * h);
                worst_g = std::max(worst_g, std::abs(grad[i] - fd) / std::max(1.0, std::abs(fd)));
                Eigen::VectorXd gp, gm;
                nlp.constraints(zp, gp);
                nlp.constraints(zm, gm);
                for (int r = 0; r < nlp.num_cons(); ++r) {
                    double fdj = (gp[r] - gm[r]) / (2 * h);
                    worst_j = std::max(worst_j, std::abs(J(r, i) - fdj) / std::max(1.0, std::abs(fdj)));
                }
            }
        }
    }
    double t = seconds_since(t0);
    bool ok = worst_g <= 1e-6 && worst_j <= 1e-6 && t < 60.0;
    return {ok, fmt::format("{} feasible points, max rel error gradient {:.2e}, Jacobian {:.2e}, {:.1f} s", points,
                            worst_g, worst_j, t)};
}

Outcome economics() {
    Scenario sc = build_aroma();
    sc.ocp.N = 32;
    auto rbc = run_variant(sc, Variant::RBC, 96);
    auto t0 = Clock::now();
    auto mps = run_variant(sc, Variant::MPS, 96);
    double t = seconds_since(t0);
    double cut = 100.0 * (rbc.metrics.cost - mps.metrics.cost) / rbc.metrics.cost;
    bool ok = !rbc.aborted && !mps.aborted && cut >= 4.0 && t <= 1800.0;
    return {ok, fmt::format("RBC {:.2f} EUR, MPS {:.2f} EUR, reduction {:.2f} % (DV {:.3f} vs {:.3f} %, "
                            "{} fallbacks), MPS wall {:.0f} s",
                            rbc.metrics.cost, mps.metrics.cost, cut, rbc.metrics.dv, mps.metrics.dv,
                            mps.metrics.fallbacks, t)};
}

Outcome storage() {
    Scenario sc = build_aroma();
    auto rec = run_variant(sc, Variant::SPS, 96);
    if (rec.aborted || rec.steps.size() != 96) return {false, "run aborted"};
    std::vector<double> sorted;
    for (const auto& st : rec.steps) sorted.push_back(st.price);
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    double q1 = sorted[n / 4 - 1], q3 = sorted[3 * n / 4];
    double low = 0.0, high = 0.0;
    for (const auto& st : rec.steps) {
        if (st.price <= q1) low += st.storage_flow * sc.tau;
        if (st.price >= q3) high += st.storage_flow * sc.tau;
    }
    double imbalance = rec.daily_imbalance.empty() ? 1.0 : rec.daily_imbalance.front();
    bool ok = low > 0.0 && high < 0.0 && !rec.daily_imbalance.empty() && imbalance <= 0.01;
    return {ok, fmt::format("net storage inflow {:+.3f} m3 at price <= {:.0f}, {:+.3f} m3 at price >= {:.0f}, "
                            "daily imbalance {:.3f} %",
                            low, q1, high, q3, 100.0 * imbalance)};
}

Outcome relief() {
    Scenario sc = build_aroma_relief();
    auto sp = run_variant(sc, Variant::SP, 96);
    auto mp = run_variant(sc, Variant::MP, 96);
    auto peak = [](const ClosedLoopRecord& rec, const std::string& unit) {
        auto it = std::find(rec.consumers.begin(), rec.consumers.end(), unit);
        if (it == rec.consumers.end()) return 0.0;
        auto c = static_cast<std::size_t>(it - rec.consumers.begin());
        double best = 0.0;
        for (const auto& st : rec.steps) best = std::max(best, st.consumers[c].q);
        return best;
    };
    double q_sp = peak(sp, "C2"), q_mp = peak(mp, "C2");
    double gain = q_sp > 0 ? 100.0 * (q_mp / q_sp - 1.0) : 0.0;
    bool ok = !sp.aborted && !mp.aborted && q_mp >= 1.2 * q_sp && mp.metrics.dv < sp.metrics.dv;
    return {ok, fmt::format("peak C2 flow SP {:.3f} L/s, MP {:.3f} L/s (+{:.1f} %), DV SP {:.3f} %, MP {:.3f} %",
                            1e3 * q_sp, 1e3 * q_mp, gain, sp.metrics.dv, mp.metrics.dv)};
}

Outcome computational() {
    fs::path out = fs::temp_directory_path() / "dhn_acceptance_bench";
    fs::remove_all(out);
    std::string cmd = fmt::format("{} bench {}/configs/aroma.yaml --horizons 12,20,32,40 --pipe-cells 1,2 --steps 3 "
                                  "--out {} > {}/stdout.txt 2>&1",
                                  DHN_CLI_PATH, DHN_SOURCE_DIR, out.string(), fs::temp_directory_path().string());
    fs::create_directories(out);
    int rc = std::system(cmd.c_str());
    if (rc != 0) return {false, fmt::format("bench exited with {}", rc)};
    fs::path table;
    for (const auto& e : fs::recursive_directory_iterator(out))
        if (e.path().filename() == "bench.csv") table = e.path();
    if (table.empty()) return {false, "bench.csv not written"};
    std::ifstream in(table);
    std::string line;
    std::getline(in, line);
    int rows = 0, states_at_32 = 0;
    double median_at_32 = -1.0;
    std::ostringstream summary;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> c;
        while (std::getline(ss, cell, ',')) c.push_back(cell);
        if (c.size() < 4) continue;
        ++rows;
        int states = std::stoi(c[0]), N = std::stoi(c[1]);
        double med = std::stod(c[3]);
        summary << fmt::format(" {}x{}:{:.1f}s", states, N, med);
        if (N == 32 && states > states_at_32) {
            states_at_32 = states;
            median_at_32 = med;
        }
    }
    bool ok = rows == 8 && median_at_32 >= 0.0 && median_at_32 <= 60.0 && states_at_32 >= 90;
    return {ok, fmt::format("{} sweep rows; {} states, N = 32 median {:.2f} s; states x N:{}", rows, states_at_32,
                            median_at_32, summary.str())};
}

ConsumerSample sample(double demand, double q, double T_in, double T_out) {
    ConsumerSample c;
    c.demand_kW = demand;
    c.q = q;
    c.T_in = T_in;
    c.T_out = T_out;
    return c;
}

Outcome metric_formulas() {
    // shortfalls against 70 C: 2, 0 | 5, 0 | 0, 1; heat: 2, 0 | 5, 0 | 10, 0 of 120 kW
    ClosedLoopRecord rec;
    rec.consumers = {"A", "B"};
    rec.rho_cp = 1e6;
    StepRecord s0, s1, s2;
    s0.consumers = {sample(30.0, 0.001, 68.0, 40.0), sample(35.0, 0.002, 72.0, 52.0)};
    s1.consumers = {sample(25.0, 0.001, 65.0, 45.0), sample(20.0, 0.001, 70.5, 50.5)};
    s2.consumers = {sample(10.0, 0.0, 71.0, 41.0), sample(0.0, 0.0005, 69.0, 49.0)};
    rec.steps = {s0, s1, s2};
    double atv = compute_atv(rec, 70.0);
    DvResult dv = compute_dv(rec);
    double e_atv = std::abs(atv - 8.0 / 6.0), e_dv = std::abs(dv.value - 100.0 * 17.0 / 120.0);
    bool ok = e_atv <= 1e-12 && e_dv <= 1e-12 && dv.defined;
    return {ok, fmt::format("ATV {:.15f} (error {:.1e}), DV {:.15f} % (error {:.1e})", atv, e_atv, dv.value, e_dv)};
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_level(spdlog::level::err);
    std::set<int> pick;
    for (int i = 1; i < argc; ++i) pick.insert(std::atoi(argv[i]));
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"hydraulic soundness", hydraulic_soundness},
        {"loop convexity", convexity},
        {"thermal conservation", thermal_conservation},
        {"three-node A(q) oracle", three_node_oracle},
        {"derivative checks", derivatives},
        {"closed-loop economics", economics},
        {"storage behavior", storage},
        {"multi-producer relief", relief},
        {"computational study", computational},
        {"metric formulas", metric_formulas},
    };
    int failed = 0;
    std::ofstream report("acceptance_report.txt");
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        int id = static_cast<int>(i) + 1;
        if (!pick.empty() && !pick.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::string line = fmt::format("{} {:2d} {}: {}", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail);
        std::printf("%s\n", line.c_str());
        std::fflush(stdout);
        report << line << "\n" << std::flush;
    }
    return failed == 0 ? 0 : 1;
}
