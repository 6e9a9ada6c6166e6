#include <gtest/gtest.h>

#include "dhn/simulation.hpp"

using namespace dhn;

namespace {

ConsumerSample sample(double demand, double q, double T_in, double T_out) {
    ConsumerSample c;
    c.demand_kW = demand;
    c.q = q;
    c.T_in = T_in;
    c.T_out = T_out;
    return c;
}

// Two consumers over three steps with rho cp = 1e6 J/(m^3 K):
//   k0: C0 delivers 28 of 30 kW at 68 C, C1 delivers 40 of 35 kW at 72 C
//   k1: C0 delivers 20 of 25 kW at 65 C, C1 delivers 20 of 20 kW at 70.5 C
//   k2: C0 delivers  0 of 10 kW at 71 C, C1 delivers 10 of  0 kW at 69 C
// Against 70 C: temperature shortfalls 2 + 5 + 1 = 8 over 6 samples.
// Heat shortfalls 2 + 5 + 10 = 17 of 120 kW demanded.
ClosedLoopRecord three_step_record() {
    ClosedLoopRecord rec;
    rec.consumers = {"C0", "C1"};
    rec.rho_cp = 1e6;
    StepRecord s0, s1, s2;
    s0.consumers = {sample(30.0, 0.001, 68.0, 40.0), sample(35.0, 0.002, 72.0, 52.0)};
    s1.consumers = {sample(25.0, 0.001, 65.0, 45.0), sample(20.0, 0.001, 70.5, 50.5)};
    s2.consumers = {sample(10.0, 0.0, 71.0, 41.0), sample(0.0, 0.0005, 69.0, 49.0)};
    rec.steps = {s0, s1, s2};
    return rec;
}

}  // namespace

TEST(Metrics, AtvMatchesHandValue) {
    EXPECT_NEAR(compute_atv(three_step_record(), 70.0), 8.0 / 6.0, 1e-12);
    EXPECT_NEAR(compute_atv(three_step_record(), 60.0), 0.0, 1e-12);
}

TEST(Metrics, DvMatchesHandValue) {
    DvResult dv = compute_dv(three_step_record());
    EXPECT_TRUE(dv.defined);
    EXPECT_NEAR(dv.value, 100.0 * 17.0 / 120.0, 1e-12);
}

TEST(Metrics, DvUndefinedWithoutDemand) {
    ClosedLoopRecord rec = three_step_record();
    for (auto& st : rec.steps)
        for (auto& c : st.consumers) c.demand_kW = 0.0;
    EXPECT_FALSE(compute_dv(rec).defined);
}

TEST(Metrics, EmptyRecordGivesZeroMetrics) {
    ClosedLoopRecord rec;
    Metrics m = compute_metrics(rec, 70.0);
    EXPECT_EQ(m.steps, 0);
    EXPECT_EQ(m.cost, 0.0);
    EXPECT_EQ(m.atv, 0.0);
    EXPECT_FALSE(m.dv_defined);
}

TEST(Metrics, MedianAndPercentile) {
    EXPECT_DOUBLE_EQ(median({3.0, 1.0, 2.0}), 2.0);
    EXPECT_DOUBLE_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
    EXPECT_DOUBLE_EQ(percentile({0.0, 10.0}, 0.9), 9.0);
    EXPECT_DOUBLE_EQ(median({}), 0.0);
}

TEST(Plant, DownsampleKeepsUniformStatesAndVolumeMeans) {
    Scenario sc = build_aroma();
    NetworkSpec spec = sc.effective_network();
    auto cm = make_system_model(spec, sc.l_x, sc.fluid);
    HighFidelityModel plant = make_plant(sc, spec);
    const auto& pm = *plant.model;
    Eigen::VectorXd x = Eigen::VectorXd::Constant(pm.num_states(), 42.0);
    Eigen::VectorXd xc = downsample_state(pm, *cm, x);
    ASSERT_EQ(xc.size(), cm->num_states());
    EXPECT_LT((xc.array() - 42.0).abs().maxCoeff(), 1e-12);
    // stored energy is preserved for arbitrary plant states
    for (int i = 0; i < x.size(); ++i) x[i] = 20.0 + 0.37 * (i % 11);
    xc = downsample_state(pm, *cm, x);
    const int jp = pm.tg.num_junctions, jc = cm->tg.num_junctions;
    EXPECT_EQ(xc.head(jc), x.head(jp));
    double e_hf = pm.tg.V.tail(pm.tg.num_cells).dot(x.tail(pm.tg.num_cells));
    double e_c = cm->tg.V.tail(cm->tg.num_cells).dot(xc.tail(cm->tg.num_cells));
    EXPECT_NEAR(e_c / e_hf, 1.0, 1e-12);
}

TEST(Plant, AmbientStateWithoutFlowStaysPut) {
    Scenario sc = build_aroma();
    NetworkSpec spec = sc.effective_network();
    HighFidelityModel plant = make_plant(sc, spec);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(plant.model->num_states());
    Control u;
    u.q_r = Eigen::VectorXd::Zero(plant.model->num_cycles());
    // demand cannot be served without flow, so nothing is extracted either
    IntervalResult r = simulate_interval(plant, sc, x, u, 0);
    EXPECT_LT(r.x.cwiseAbs().maxCoeff(), 1e-12);
    for (const auto& c : r.consumers) EXPECT_EQ(c.extracted_kW, 0.0);
}

TEST(Plant, RbcRunPassesEnergyAudit) {
    Scenario sc = build_aroma();
    ClosedLoopRecord rec = run_variant(sc, Variant::RBC, 4);
    ASSERT_EQ(rec.steps.size(), 4u);
    EXPECT_FALSE(rec.aborted);
    EXPECT_LE(rec.metrics.max_energy_residual, 1e-9);
    EXPECT_GT(rec.metrics.cost, 0.0);
    EXPECT_EQ(rec.state_names.size(), static_cast<std::size_t>(rec.steps[0].x.size()));
}

TEST(Plant, ZeroLengthRunIsEmpty) {
    Scenario sc = build_aroma();
    ClosedLoopRecord rec = run_variant(sc, Variant::RBC, 0);
    EXPECT_TRUE(rec.steps.empty());
    EXPECT_EQ(rec.metrics.cost, 0.0);
}
