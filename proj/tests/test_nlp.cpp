#include <gtest/gtest.h>

#include <random>

#include "dhn/nlp.hpp"

using namespace dhn;

namespace {

// min sum_t (x_t^2 + r u_t^2) s.t. x_{t+1} = a x_t + b u_t, x_0 fixed; variables x_1..x_T, u_0..u_{T-1}.
struct LinearToy {
    int T = 6;
    double a = 0.9, b = 0.5, r = 0.3, x0 = 2.0;
    int x(int t) const { return t - 1; }
    int u(int t) const { return T + t; }
    int n() const { return 2 * T; }
};

QuadraticNlp build(const LinearToy& s) {
    QuadraticNlp nlp(s.n(), s.T);
    for (int t = 1; t <= s.T; ++t) nlp.add_obj_quad(s.x(t), s.x(t), 1.0);
    for (int t = 0; t < s.T; ++t) nlp.add_obj_quad(s.u(t), s.u(t), s.r);
    for (int t = 0; t < s.T; ++t) {
        // x_{t+1} - a x_t - b u_t = 0
        nlp.add_con_linear(t, s.x(t + 1), 1.0);
        if (t > 0)
            nlp.add_con_linear(t, s.x(t), -s.a);
        else
            nlp.add_con_const(t, -s.a * s.x0);
        nlp.add_con_linear(t, s.u(t), -s.b);
        nlp.set_con_bounds(t, 0.0, 0.0);
    }
    for (int i = 0; i < s.n(); ++i) nlp.set_var_bounds(i, -kInf, kInf);
    nlp.finalize();
    return nlp;
}

// Dense KKT [H A'; A 0] [z; -y] = [0; c] for the same toy.
Eigen::VectorXd kkt_oracle(const LinearToy& s) {
    const int n = s.n(), m = s.T;
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n), A = Eigen::MatrixXd::Zero(m, n);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(m);
    for (int t = 1; t <= s.T; ++t) H(s.x(t), s.x(t)) = 2.0;
    for (int t = 0; t < s.T; ++t) H(s.u(t), s.u(t)) = 2.0 * s.r;
    for (int t = 0; t < s.T; ++t) {
        A(t, s.x(t + 1)) = 1.0;
        if (t > 0)
            A(t, s.x(t)) = -s.a;
        else
            c[t] = s.a * s.x0;
        A(t, s.u(t)) = -s.b;
    }
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + m, n + m);
    K.topLeftCorner(n, n) = H;
    K.topRightCorner(n, m) = A.transpose();
    K.bottomLeftCorner(m, n) = A;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + m);
    rhs.tail(m) = c;
    return K.fullPivLu().solve(rhs).head(n);
}

}  // namespace

TEST(Nlp, ConvexQpMatchesClosedFormKkt) {
    LinearToy s;
    QuadraticNlp nlp = build(s);
    NlpLimits lim;
    lim.tol = 1e-9;
    NlpSolution sol = solve_nlp(nlp, Eigen::VectorXd::Zero(s.n()), lim);
    ASSERT_EQ(sol.status, NlpStatus::Optimal);
    Eigen::VectorXd z = kkt_oracle(s);
    EXPECT_LT((sol.x - z).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Nlp, ActiveBoundMatchesScalarOptimum) {
    // min (x - 2)^2 + (y + 1)^2 s.t. x <= 1, y >= 0, x + y <= 0.5 -> x = 0.5, y = 0
    QuadraticNlp nlp(2, 1);
    nlp.add_obj_quad(0, 0, 1.0);
    nlp.add_obj_linear(0, -4.0);
    nlp.add_obj_quad(1, 1, 1.0);
    nlp.add_obj_linear(1, 2.0);
    nlp.add_obj_const(5.0);
    nlp.set_var_bounds(0, -kInf, 1.0);
    nlp.set_var_bounds(1, 0.0, kInf);
    nlp.add_con_linear(0, 0, 1.0);
    nlp.add_con_linear(0, 1, 1.0);
    nlp.set_con_bounds(0, -kInf, 0.5);
    nlp.finalize();
    NlpSolution sol = solve_nlp(nlp, Eigen::Vector2d(0.0, 0.1));
    ASSERT_TRUE(sol.usable());
    EXPECT_NEAR(sol.x[0], 0.5, 1e-6);
    EXPECT_NEAR(sol.x[1], 0.0, 1e-6);
    EXPECT_NEAR(sol.objective, 2.25 + 1.0, 1e-6);
}

TEST(Nlp, NonconvexBilinearConstraint) {
    // min x + y s.t. x y >= 1, x, y in [0.1, 10] -> x = y = 1
    QuadraticNlp nlp(2, 1);
    nlp.add_obj_linear(0, 1.0);
    nlp.add_obj_linear(1, 1.0);
    nlp.set_var_bounds(0, 0.1, 10.0);
    nlp.set_var_bounds(1, 0.1, 10.0);
    nlp.add_con_quad(0, 0, 1, 1.0);
    nlp.set_con_bounds(0, 1.0, kInf);
    nlp.finalize();
    NlpSolution sol = solve_nlp(nlp, Eigen::Vector2d(3.0, 0.5));
    ASSERT_TRUE(sol.usable());
    EXPECT_NEAR(sol.x[0], 1.0, 1e-5);
    EXPECT_NEAR(sol.x[1], 1.0, 1e-5);
}

TEST(Nlp, EmptyBoxIsInfeasible) {
    QuadraticNlp nlp(1, 0);
    nlp.add_obj_quad(0, 0, 1.0);
    nlp.set_var_bounds(0, 1.0, 0.0);
    nlp.finalize();
    NlpSolution sol = solve_nlp(nlp, Eigen::VectorXd::Zero(1));
    EXPECT_EQ(sol.status, NlpStatus::Infeasible);
    EXPECT_GE(sol.max_violation, 1.0);
    EXPECT_FALSE(sol.usable());
}

TEST(Nlp, IterationLimitIsReported) {
    // bounded problem needs several barrier iterations
    QuadraticNlp nlp(2, 1);
    nlp.add_obj_linear(0, 1.0);
    nlp.add_obj_linear(1, 1.0);
    nlp.set_var_bounds(0, 0.1, 10.0);
    nlp.set_var_bounds(1, 0.1, 10.0);
    nlp.add_con_quad(0, 0, 1, 1.0);
    nlp.set_con_bounds(0, 1.0, kInf);
    nlp.finalize();
    NlpLimits lim;
    lim.max_iter = 2;
    NlpSolution sol = solve_nlp(nlp, Eigen::Vector2d(3.0, 0.5), lim);
    EXPECT_EQ(sol.status, NlpStatus::IterationLimit);
    EXPECT_LE(sol.iterations, 2);
}

TEST(Nlp, JacobianAndHessianMatchFiniteDifferences) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n(0.0, 1.0);
    QuadraticNlp nlp(3, 2);
    nlp.add_obj_quad(0, 1, 2.0);
    nlp.add_obj_quad(2, 2, -1.5);
    nlp.add_obj_linear(1, 0.7);
    nlp.add_con_quad(0, 0, 0, 1.0);
    nlp.add_con_quad(0, 1, 2, 3.0);
    nlp.add_con_linear(1, 2, -2.0);
    nlp.add_con_quad(1, 0, 2, 0.5);
    for (int i = 0; i < 3; ++i) nlp.set_var_bounds(i, -kInf, kInf);
    for (int r = 0; r < 2; ++r) nlp.set_con_bounds(r, -kInf, kInf);
    nlp.finalize();
    for (int s = 0; s < 20; ++s) {
        Eigen::Vector3d x(n(rng), n(rng), n(rng));
        Eigen::Vector2d lam(n(rng), n(rng));
        const double h = 1e-6;
        Eigen::VectorXd grad;
        nlp.gradient(x, grad);
        Eigen::MatrixXd J = Eigen::MatrixXd(nlp.jacobian(x));
        Eigen::VectorXd hv;
        nlp.hessian_values(x, 1.0, lam, hv);
        Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
        const auto& hs = nlp.hessian_structure();
        for (std::size_t k = 0; k < hs.size(); ++k) {
            H(hs[k].first, hs[k].second) += hv[static_cast<int>(k)];
            if (hs[k].first != hs[k].second) H(hs[k].second, hs[k].first) += hv[static_cast<int>(k)];
        }
        for (int i = 0; i < 3; ++i) {
            Eigen::Vector3d e = Eigen::Vector3d::Unit(i) * h;
            EXPECT_NEAR(grad[i], (nlp.objective(x + e) - nlp.objective(x - e)) / (2 * h), 1e-6);
            Eigen::VectorXd gp, gm, dp, dm;
            nlp.constraints(x + e, gp);
            nlp.constraints(x - e, gm);
            for (int r = 0; r < 2; ++r) EXPECT_NEAR(J(r, i), (gp[r] - gm[r]) / (2 * h), 1e-6);
            nlp.gradient(x + e, dp);
            nlp.gradient(x - e, dm);
            Eigen::VectorXd col = (dp - dm) / (2 * h);
            Eigen::MatrixXd Jp = Eigen::MatrixXd(nlp.jacobian(x + e)), Jm = Eigen::MatrixXd(nlp.jacobian(x - e));
            col += ((Jp - Jm) / (2 * h)).transpose() * lam;
            for (int j = 0; j < 3; ++j) EXPECT_NEAR(H(j, i), col[j], 1e-5);
        }
    }
}
