#include <gtest/gtest.h>

#include <set>

#include "dhn/network.hpp"
#include "dhn/scenario.hpp"
#include "dhn/system.hpp"
#include "toy.hpp"

using namespace dhn;

TEST(Network, ExpandAddsReverseEdgesForBidirectionalPipes) {
    NetworkSpec s = test::toy_loop();
    s.edges[0].q_min = -0.01;
    s.edges[1].q_min = -0.01;
    ExpandedGraph g = expand_bidirectional(s);
    ASSERT_EQ(g.num_edges(), 6u);
    EXPECT_EQ(g.reverse_of[0], 4);
    EXPECT_EQ(g.partner[4], 0);
    EXPECT_EQ(g.edges[4].tail, g.edges[0].head);
    EXPECT_EQ(g.edges[4].head, g.edges[0].tail);
    EXPECT_TRUE(g.edges[4].reverse);
    EXPECT_EQ(g.reverse_of[2], -1);
    // incidence columns sum to zero
    for (int e = 0; e < g.incidence.cols(); ++e) EXPECT_DOUBLE_EQ(g.incidence.col(e).sum(), 0.0);
}

TEST(Network, ValidateRejectsDanglingEdge) {
    NetworkSpec s = test::toy_loop();
    s.edges[0].head = "nowhere";
    EXPECT_ANY_THROW(s.validate());
}

TEST(Network, ToyLoopHasOneMirroredCycle) {
    ExpandedGraph g = expand_bidirectional(test::toy_loop());
    LoopStructure ls = build_loop_structure(g);
    EXPECT_EQ(ls.m_r, 1);
    EXPECT_EQ(ls.m_f, 1);
    EXPECT_EQ(ls.cycles[0].nodes.size(), 4u);
    for (int e = 0; e < ls.F_r.cols(); ++e) EXPECT_DOUBLE_EQ(ls.F_r(0, e), 1.0);
}

TEST(Network, TwoNodeCyclesAreFiltered) {
    NetworkSpec s = test::toy_loop();
    s.edges[0].q_min = -0.01;
    s.edges[1].q_min = -0.01;
    ExpandedGraph g = expand_bidirectional(s);
    auto all = enumerate_directed_cycles(g);
    auto kept = filter_cycles(g, all);
    EXPECT_GT(all.size(), kept.size());
    for (const auto& c : kept) EXPECT_GT(c.nodes.size(), 2u);
}

TEST(Network, AromaLoopCounts) {
    Scenario sc = build_aroma();
    ExpandedGraph g = expand_bidirectional(sc.network);
    LoopStructure ls = build_loop_structure(g);
    EXPECT_EQ(ls.m_r, 15);
    EXPECT_EQ(ls.m_f, 10);
    // pivoted rows reproduce F
    for (int i = 0; i < ls.m_f; ++i)
        EXPECT_EQ((ls.F.row(i) - ls.F_r.row(ls.pivot_rows[static_cast<std::size_t>(i)])).norm(), 0.0);
    // every cycle row is in the span of F
    Eigen::MatrixXd Ft = ls.F.transpose();
    auto qr = Ft.colPivHouseholderQr();
    for (int i = 0; i < ls.m_r; ++i) {
        Eigen::VectorXd r = ls.F_r.row(i).transpose();
        Eigen::VectorXd c = qr.solve(r);
        EXPECT_LT((Ft * c - r).norm(), 1e-9);
    }
}

TEST(Network, AromaValveAssumptionHolds) {
    Scenario sc = build_aroma();
    auto m = make_system_model(sc.network, sc.l_x, sc.fluid);
    const auto& rep = m->hm.valves;
    EXPECT_TRUE(rep.assumption_satisfied);
    EXPECT_EQ(rep.rank, m->loops.m_f);
    EXPECT_TRUE(rep.z2_nonnegative);
}

TEST(Network, ValveFreeAromaFailsTheAssumption) {
    NetworkSpec spec = aroma_network();
    for (auto& e : spec.edges) e.has_valve = false;
    ExpandedGraph g = expand_bidirectional(spec);
    LoopStructure ls = build_loop_structure(g);
    ValveReport rep = check_valve_assumption(ls.F, valve_columns(spec, g));
    EXPECT_FALSE(rep.assumption_satisfied);
    EXPECT_EQ(rep.rank, 0);
}

TEST(Network, SuggestedPlacementMatchesPreset) {
    NetworkSpec spec = aroma_network();
    std::set<std::string> preset;
    for (const auto& e : spec.edges)
        if (e.has_valve) preset.insert(e.id);
    auto sug = suggest_valve_placement(spec);
    EXPECT_EQ(std::set<std::string>(sug.begin(), sug.end()), preset);
}

TEST(Network, AllCycleSetContainsTheReducedCycles) {
    Scenario sc = build_aroma();
    auto m = make_system_model(sc.network, sc.l_x, sc.fluid);
    AllCycles all = enumerate_all_cycles(m->g, m->loops.F);
    EXPECT_GE(all.cycles.size(), static_cast<std::size_t>(m->loops.m_f));
    for (const auto& c : all.cycles) EXPECT_EQ(c.edges.size(), c.signs.size());
}
