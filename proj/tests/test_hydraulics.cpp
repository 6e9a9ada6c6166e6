#include <gtest/gtest.h>

#include <random>

#include "dhn/hydraulics.hpp"
#include "dhn/linalg.hpp"
#include "dhn/scenario.hpp"
#include "dhn/system.hpp"
#include "gen.hpp"
#include "toy.hpp"

using namespace dhn;

namespace {

std::shared_ptr<SystemModel> aroma_model() {
    Scenario sc = build_aroma();
    return make_system_model(sc.network, sc.l_x, sc.fluid);
}

}  // namespace

TEST(Hydraulics, FrictionResistanceFormula) {
    // 8 K L rho / (pi^2 d^5)
    double R = friction_resistance(1000.0, 100.0, 0.02, 0.1);
    double expected = 8.0 * 0.02 * 100.0 * 1000.0 / (M_PI * M_PI * 1e-5);
    EXPECT_NEAR(R / expected, 1.0, 1e-12);
}

TEST(Hydraulics, EdgePressureChange) {
    EXPECT_DOUBLE_EQ(edge_pressure_change(2.0, 5.0, 3.0, 0.5, 4.0, 0.5), 2.0 * 0.25 + 3.0 * 4.0 * 0.25 - 2.5);
    EXPECT_DOUBLE_EQ(edge_pressure_change(2.0, 0.0, 0.0, 0.0, 0.0, 1.0), 0.0);
    EXPECT_ANY_THROW(edge_pressure_change(1.0, 0.0, 1.0, 0.1, -1.0, 0.0));
}

TEST(Hydraulics, EffectiveFlowsNetOpposingDirections) {
    NetworkSpec s = test::toy_loop();
    s.edges[0].q_min = -0.01;
    s.edges[1].q_min = -0.01;
    auto m = make_system_model(s, {1, 1, 1, 1}, Fluid{});
    Eigen::VectorXd q = Eigen::VectorXd::Zero(m->hm.num_edges());
    int f = m->g.forward_of[0], r = m->g.reverse_of[0];
    q[f] = 0.003;
    q[r] = 0.001;
    Eigen::VectorXd qe = effective_flows(m->hm, q);
    EXPECT_NEAR(qe[f], 0.002, 1e-15);
    EXPECT_EQ(qe[r], 0.0);
}

TEST(Hydraulics, ZeroFlowKeepsPumpsIdle) {
    auto m = aroma_model();
    Eigen::VectorXd q = Eigen::VectorXd::Zero(m->hm.num_edges());
    ActuatorState act = recover_actuators(m->hm, q);
    for (int i = 0; i < act.r.size(); ++i) EXPECT_EQ(act.r[i], 0.0);
    for (int i = 0; i < act.nu.size(); ++i) EXPECT_GE(act.nu[i], 0.0);
}

TEST(Hydraulics, ToyLoopValveAbsorbsPumpExcess) {
    auto m = make_system_model(test::toy_loop(), {1, 1, 1, 1}, Fluid{});
    const auto& hm = m->hm;
    Eigen::VectorXd q_r(1);
    q_r << 0.004;
    Eigen::VectorXd q = hm.F_r.transpose() * q_r;
    ActuatorState act = recover_actuators(hm, q);
    ASSERT_EQ(act.nu.size(), 1);
    // pump head = friction + valve drop around the single loop
    double friction = hm.R_mu.sum() * q_r[0] * q_r[0];
    int v = hm.valve_edges[0];
    double valve = hm.R_nu[v] * act.nu[0] * q_r[0] * q_r[0];
    EXPECT_NEAR(friction + valve, 2e5, 1e-6);
    EXPECT_NEAR(loop_equality_residual(hm, pressure_changes(hm, q, act)), 0.0, 1e-12);
}

TEST(Hydraulics, RecoveryPropertyOnAroma) {
    auto m = aroma_model();
    const auto& hm = m->hm;
    AllCycles all = enumerate_all_cycles(m->g, hm.F);
    std::mt19937_64 rng(7);
    for (int s = 0; s < 200; ++s) {
        Eigen::VectorXd q_r = test::feasible_cycle_flows(hm, rng);
        ASSERT_LE(loop_feasibility(hm, q_r).maxCoeff(), 1e-9);
        Eigen::VectorXd q = hm.F_r.transpose() * q_r;
        ActuatorState act = recover_actuators(hm, q);
        for (int i = 0; i < act.nu.size(); ++i) EXPECT_GE(act.nu[i], 0.0);
        for (int i = 0; i < act.r.size(); ++i) {
            EXPECT_GE(act.r[i], 0.0);
            EXPECT_LE(act.r[i], 1.0);
        }
        auto rep = verify_kirchhoff_all_cycles(hm, q, act, all.cycles);
        EXPECT_LE(rep.max_rel, 1e-8) << "sample " << s;
    }
}

TEST(Hydraulics, LoopMatricesArePositiveSemidefinite) {
    auto m = aroma_model();
    for (const auto& Z : m->hm.Z) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Z);
        EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10 * Z.norm());
    }
}

TEST(Hydraulics, LoopFeasibilityIsConvexAlongSegments) {
    auto m = aroma_model();
    const auto& hm = m->hm;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int s = 0; s < 500; ++s) {
        Eigen::VectorXd a = test::feasible_cycle_flows(hm, rng), b = test::feasible_cycle_flows(hm, rng);
        double t = u(rng);
        Eigen::VectorXd fa = loop_feasibility(hm, a), fb = loop_feasibility(hm, b);
        Eigen::VectorXd fm = loop_feasibility(hm, t * a + (1 - t) * b);
        for (int i = 0; i < fm.size(); ++i) {
            double rhs = t * fa[i] + (1 - t) * fb[i];
            EXPECT_LE(fm[i], rhs + 1e-9 * (1.0 + std::abs(rhs)));
        }
    }
}

TEST(Linalg, NnlsMatchesBruteForceOnSmallProblems) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int s = 0; s < 50; ++s) {
        Eigen::MatrixXd A(5, 3);
        Eigen::VectorXd b(5);
        for (int i = 0; i < 5; ++i) {
            b[i] = n(rng);
            for (int j = 0; j < 3; ++j) A(i, j) = n(rng);
        }
        // oracle: least squares on every support set, keep the best nonnegative one
        double best = 1e300;
        for (int mask = 0; mask < 8; ++mask) {
            std::vector<int> cols;
            for (int j = 0; j < 3; ++j)
                if (mask & (1 << j)) cols.push_back(j);
            Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
            if (!cols.empty()) {
                Eigen::MatrixXd As(5, static_cast<int>(cols.size()));
                for (std::size_t c = 0; c < cols.size(); ++c) As.col(static_cast<int>(c)) = A.col(cols[c]);
                Eigen::VectorXd xs = As.colPivHouseholderQr().solve(b);
                if (xs.minCoeff() < 0) continue;
                for (std::size_t c = 0; c < cols.size(); ++c) x[cols[c]] = xs[static_cast<int>(c)];
            }
            best = std::min(best, (A * x - b).norm());
        }
        NnlsResult r = nnls(A, b);
        EXPECT_TRUE(r.converged);
        EXPECT_GE(r.x.minCoeff(), 0.0);
        EXPECT_NEAR(r.residual, best, 1e-9);
    }
}
