#include <gtest/gtest.h>

#include <random>

#include "dhn/ocp.hpp"
#include "toy.hpp"

using namespace dhn;

namespace {

std::shared_ptr<SystemModel> toy_model() { return make_system_model(test::toy_loop(), {6, 6, 2, 2}, Fluid{}); }

HorizonData toy_horizon(int N) {
    HorizonData d;
    d.N = N;
    d.tau = 900.0;
    d.demand_units = {"C"};
    d.demand_kW.resize(1, N);
    for (int t = 0; t < N; ++t) d.demand_kW(0, t) = 50.0 + 10.0 * t;
    for (int t = 0; t < N; ++t) d.price.push_back(60.0 + 15.0 * (t % 3));
    ProducerInput p;
    p.unit = "P";
    p.lo_kW.assign(static_cast<std::size_t>(N), 0.0);
    p.hi_kW.assign(static_cast<std::size_t>(N), 500.0);
    d.producers.push_back(p);
    d.T_sup_min = 70.0;
    d.T_max = 95.0;
    d.T_ret_min = 40.0;
    return d;
}

OcpOptions toy_options(int N, int block) {
    OcpOptions o;
    o.N = N;
    o.N_c = N;
    o.block = block;
    return o;
}

// Inputs drawn around the cold-start flows and powers, states and slacks completed.
Eigen::VectorXd feasible_point(const SystemModel& m, const OcpProblem& P, const Eigen::VectorXd& cold,
                               std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::VectorXd z = cold;
    const auto& L = P.lay;
    for (int b = 0; b < L.n_blocks; ++b) {
        for (int l = 0; l < L.m_r; ++l) z[L.q(b, l)] = cold[L.q(b, l)] * (0.2 + 0.8 * u(rng));
        for (int j = 0; j < L.n_prod; ++j) z[L.p(b, j)] = cold[L.p(b, j)] * (0.5 + u(rng));
    }
    complete_guess(m, P, z);
    return z;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST(MoveBlocking, FourStepBlocks) {
    auto m = apply_move_blocking(8, 8, 4);
    EXPECT_EQ(m, (std::vector<int>{0, 0, 0, 0, 4, 4, 4, 4}));
}

TEST(MoveBlocking, UnitBlockIsIdentity) {
    auto m = apply_move_blocking(7, 7, 1);
    for (int t = 0; t < 7; ++t) EXPECT_EQ(m[static_cast<std::size_t>(t)], t);
}

TEST(MoveBlocking, TailPinnedAfterControlHorizon) {
    auto m = apply_move_blocking(10, 6, 2);
    EXPECT_EQ(m, (std::vector<int>{0, 0, 2, 2, 4, 4, 6, 6, 6, 6}));
}

TEST(MoveBlocking, RejectsZeroBlock) { EXPECT_THROW(apply_move_blocking(4, 4, 0), std::invalid_argument); }

TEST(Ocp, LayoutFollowsBlocking) {
    auto m = toy_model();
    ASSERT_EQ(m->num_states(), 20);
    OcpProblem P = build_ocp(*m, toy_horizon(8), Eigen::VectorXd::Constant(20, 50.0), toy_options(8, 4));
    EXPECT_EQ(P.lay.n_blocks, 2);
    EXPECT_EQ(P.lay.block_start, (std::vector<int>{0, 4}));
    EXPECT_EQ(P.dyn_rows, 8 * 20);
}

TEST(Ocp, DiffTermOnTwoInputs) {
    auto m = toy_model();
    HorizonData d = toy_horizon(2);
    OcpOptions o = toy_options(2, 1);
    o.R_diff = 2.0;
    OcpProblem P = build_ocp(*m, d, Eigen::VectorXd::Constant(20, 50.0), o);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(P.lay.n);
    z[P.lay.p(0, 0)] = 1.0;
    z[P.lay.p(1, 0)] = 3.0;
    EXPECT_NEAR(eval_objective(P, z).diff, 8.0, 1e-12);
    z[P.lay.p(1, 0)] = 1.0;
    EXPECT_NEAR(eval_objective(P, z).diff, 0.0, 1e-12);
    EXPECT_NEAR(eval_objective(P, z).slack, 0.0, 1e-12);
}

TEST(Ocp, DerivativesMatchCentralDifferences) {
    auto m = toy_model();
    std::mt19937_64 rng(17);
    for (int power : {1, 2}) {
        OcpOptions o = toy_options(6, 2);
        o.temp_power = power;
        OcpProblem P = build_ocp(*m, toy_horizon(6), Eigen::VectorXd::Constant(20, 45.0), o);
        const QuadraticNlp& nlp = *P.nlp;
        const int n = nlp.num_vars(), mc = nlp.num_cons();
        Eigen::VectorXd cold = cold_start(*m, P);
        double worst_g = 0.0, worst_j = 0.0;
        for (int s = 0; s < 50; ++s) {
            Eigen::VectorXd z = feasible_point(*m, P, cold, rng);
            ASSERT_LE(max_violation(nlp, z), 1e-6);
            Eigen::VectorXd grad;
            nlp.gradient(z, grad);
            Eigen::MatrixXd J = Eigen::MatrixXd(nlp.jacobian(z));
            for (int i = 0; i < n; ++i) {
                const double h = 1e-4 * std::max(1.0, std::abs(z[i]));
                Eigen::VectorXd zp = z, zm = z;
                zp[i] += h;
                zm[i] -= h;
                double eg = rel_err(grad[i], (nlp.objective(zp) - nlp.objective(zm)) / (2 * h));
                worst_g = std::max(worst_g, eg);
                Eigen::VectorXd gp, gm;
                nlp.constraints(zp, gp);
                nlp.constraints(zm, gm);
                for (int r = 0; r < mc; ++r) worst_j = std::max(worst_j, rel_err(J(r, i), (gp[r] - gm[r]) / (2 * h)));
            }
        }
        EXPECT_LE(worst_g, 1e-6) << "temp power " << power;
        EXPECT_LE(worst_j, 1e-6) << "temp power " << power;
    }
}

TEST(Ocp, ColdStartSatisfiesDynamics) {
    auto m = toy_model();
    OcpProblem P = build_ocp(*m, toy_horizon(4), Eigen::VectorXd::Constant(20, 50.0), toy_options(4, 2));
    Eigen::VectorXd z = cold_start(*m, P);
    Eigen::VectorXd g;
    P.nlp->constraints(z, g);
    for (int r = 0; r < P.dyn_rows; ++r) {
        EXPECT_GE(g[r], P.nlp->g_lower()[r] - 1e-8);
        EXPECT_LE(g[r], P.nlp->g_upper()[r] + 1e-8);
    }
}

TEST(Ocp, MpcStepIsDeterministic) {
    auto m = toy_model();
    HorizonData d = toy_horizon(4);
    OcpOptions o = toy_options(4, 2);
    NlpLimits lim;
    lim.max_iter = 200;
    Eigen::VectorXd x0 = Eigen::VectorXd::Constant(20, 50.0);
    MpcCache c1, c2;
    MpcResult a = mpc_step(*m, d, x0, c1, o, lim);
    MpcResult b = mpc_step(*m, d, x0, c2, o, lim);
    ASSERT_TRUE(a.success);
    EXPECT_EQ(a.control.q_r, b.control.q_r);
    EXPECT_EQ(a.solution.x, b.solution.x);
}
