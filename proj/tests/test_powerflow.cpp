#include <gtest/gtest.h>

#include "gridmdp/powerflow.hpp"
#include "support.hpp"

using namespace gridmdp;

namespace {

Grid triangle() {
    return Grid::build(100.0, {{"a"}, {"b"}, {"c"}},
                       {{"ab", 0, 1, 0.1, 0.0, 10.0}, {"ac", 0, 2, 0.1, 0.0, 10.0}, {"cb", 2, 1, 0.1, 0.0, 10.0}},
                       {{"g", 0, GenType::Thermal, 10.0, 0.0, 1.0, 1.0}}, {{"d", 1, 1.0}}, {});
}

}  // namespace

TEST(PowerFlow, ZeroInjectionsGiveZeroFlows) {
    const Grid g = fx::default_grid();
    const FlowResult f = solve_dc(g, TopologyState::initial(g), InjectionVector::zeros(g));
    for (double p : f.p_flow) EXPECT_EQ(p, 0.0);
    EXPECT_EQ(f.losses_mw, 0.0);
    EXPECT_EQ(compute_losses(f, g), 0.0);
}

TEST(PowerFlow, TwoBusSinglePath) {
    const Grid g = fx::two_bus_grid(20.0);
    InjectionVector inj = InjectionVector::zeros(g);
    inj.gen_p[0] = 5.0;
    inj.load_p[0] = 5.0;
    const FlowResult f = solve_dc(g, TopologyState::initial(g), inj);
    EXPECT_NEAR(f.p_flow[0], 5.0, 1e-12);
    EXPECT_NEAR(f.rho[0], 5.0 / 20.0, 1e-12);
}

TEST(PowerFlow, TriangleSplitMatchesDenseOracle) {
    const Grid g = triangle();
    InjectionVector inj = InjectionVector::zeros(g);
    inj.gen_p[0] = 1.0;
    inj.load_p[0] = 1.0;
    const FlowResult f = solve_dc(g, TopologyState::initial(g), inj);
    const auto oracle = fx::dense_dc_flows(g, {1, 1, 1}, inj);
    EXPECT_NEAR(f.p_flow[0], 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(f.p_flow[1], 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(f.p_flow[2], 1.0 / 3.0, 1e-12);
    for (int l = 0; l < 3; ++l) EXPECT_NEAR(f.p_flow[l], oracle[l], 1e-12);
}

TEST(PowerFlow, LossesFromFormula) {
    const Grid g = fx::two_bus_grid(200.0);  // r = 0.01
    InjectionVector inj = InjectionVector::zeros(g);
    inj.gen_p[0] = 100.0;
    inj.load_p[0] = 100.0;
    const FlowResult f = solve_dc(g, TopologyState::initial(g), inj);
    EXPECT_NEAR(compute_losses(f, g), 1.0, 1e-12);
    EXPECT_NEAR(f.losses_mw, 1.0, 1e-12);
}

TEST(PowerFlow, DoublingFlowsQuadruplesLosses) {
    const Grid g = fx::default_grid();
    std::mt19937_64 rng(11);
    InjectionVector inj = fx::random_injections(rng, g);
    InjectionVector twice = inj;
    for (auto& p : twice.gen_p) p *= 2.0;
    for (auto& p : twice.load_p) p *= 2.0;
    const auto topo = TopologyState::initial(g);
    const double l1 = compute_losses(solve_dc(g, topo, inj), g);
    const double l2 = compute_losses(solve_dc(g, topo, twice), g);
    EXPECT_GT(l1, 0.0);
    EXPECT_NEAR(l2, 4.0 * l1, 1e-9 * l2);
}

TEST(PowerFlow, KclAndRandomGridsAgreeWithDenseOracle) {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = std::uniform_int_distribution<int>(10, 120)(rng);
        const Grid g = fx::random_grid(rng, n);
        TopologyState topo = TopologyState::initial(g);
        // A few outages, possibly islanding part of the grid.
        for (int k = 0; k < 3; ++k) topo.line_status[std::uniform_int_distribution<int>(0, g.n_lines() - 1)(rng)] = 0;
        const InjectionVector inj = fx::random_injections(rng, g);
        const FlowResult f = solve_dc(g, topo, inj);
        EXPECT_LE(kcl_residual(g, f), 1e-9);
        const auto oracle = fx::dense_dc_flows(g, topo.line_status, inj);
        for (int l = 0; l < g.n_lines(); ++l) ASSERT_NEAR(f.p_flow[l], oracle[l], 1e-8) << "trial " << trial;
    }
}

TEST(PowerFlow, ReversedLineFlipsSign) {
    const Grid g = triangle();
    const Grid rev = Grid::build(
        100.0, {{"a"}, {"b"}, {"c"}},
        {{"ab", 1, 0, 0.1, 0.0, 10.0}, {"ac", 0, 2, 0.1, 0.0, 10.0}, {"cb", 2, 1, 0.1, 0.0, 10.0}},
        {{"g", 0, GenType::Thermal, 10.0, 0.0, 1.0, 1.0}}, {{"d", 1, 1.0}}, {});
    InjectionVector inj = InjectionVector::zeros(g);
    inj.gen_p[0] = 3.0;
    inj.load_p[0] = 3.0;
    const FlowResult a = solve_dc(g, TopologyState::initial(g), inj);
    const FlowResult b = solve_dc(rev, TopologyState::initial(rev), inj);
    EXPECT_NEAR(a.p_flow[0], -b.p_flow[0], 1e-12);
    EXPECT_NEAR(a.rho[0], b.rho[0], 1e-12);
}

TEST(PowerFlow, Superposition) {
    std::mt19937_64 rng(7);
    const Grid g = fx::random_grid(rng, 40);
    const auto topo = TopologyState::initial(g);
    // Balanced vectors so the slack contributes nothing nonlinear.
    auto balanced = [&] {
        InjectionVector inj = fx::random_injections(rng, g);
        double load = 0.0;
        for (double p : inj.load_p) load += p;
        std::fill(inj.gen_p.begin(), inj.gen_p.end(), 0.0);
        inj.gen_p[1 % g.n_generators()] = load;
        return inj;
    };
    const InjectionVector p1 = balanced(), p2 = balanced();
    InjectionVector sum = p1;
    for (std::size_t i = 0; i < sum.gen_p.size(); ++i) sum.gen_p[i] += p2.gen_p[i];
    for (std::size_t i = 0; i < sum.load_p.size(); ++i) sum.load_p[i] += p2.load_p[i];
    const FlowResult a = solve_dc(g, topo, p1), b = solve_dc(g, topo, p2), c = solve_dc(g, topo, sum);
    for (int l = 0; l < g.n_lines(); ++l) EXPECT_NEAR(c.p_flow[l], a.p_flow[l] + b.p_flow[l], 1e-9);
    for (std::size_t k = 0; k < c.theta.size(); ++k) EXPECT_NEAR(c.theta[k], a.theta[k] + b.theta[k], 1e-9);
}

TEST(PowerFlow, SlackIsLargestGeneratorLowestIndexOnTies) {
    const Grid g = Grid::build(100.0, {{"a"}, {"b"}}, {{"l", 0, 1, 0.1, 0.0, 100.0}},
                               {{"g1", 0, GenType::Thermal, 50.0, 0.0, 5.0, 1.0},
                                {"g2", 1, GenType::Thermal, 50.0, 0.0, 5.0, 1.0}},
                               {{"d", 1, 1.0}}, {});
    InjectionVector inj = InjectionVector::zeros(g);
    inj.load_p[0] = 10.0;
    const FlowResult f = solve_dc(g, TopologyState::initial(g), inj);
    ASSERT_EQ(f.islands.size(), 1u);
    EXPECT_EQ(f.islands[0].slack_generator, 0);
    EXPECT_NEAR(f.gen_p[0], 10.0, 1e-12);
    EXPECT_NEAR(f.p_flow[0], 10.0, 1e-12);
}

TEST(PowerFlow, IslandWithLoadAndNoGeneratorIsBlackout) {
    const Grid g = fx::two_bus_grid();
    TopologyState t = TopologyState::initial(g);
    t.line_status[0] = 0;
    InjectionVector inj = InjectionVector::zeros(g);
    inj.load_p[0] = 5.0;
    const FlowResult f = solve_dc(g, t, inj);
    ASSERT_EQ(f.blackout_islands.size(), 1u);
    EXPECT_EQ(f.p_flow[0], 0.0);
    EXPECT_EQ(f.rho[0], 0.0);
}

TEST(PowerFlow, BatchMatchesSerialExactly) {
    const Grid g = fx::default_grid();
    std::mt19937_64 rng(3);
    std::vector<InjectionVector> many;
    for (int i = 0; i < 64; ++i) many.push_back(fx::random_injections(rng, g));
    const auto topo = TopologyState::initial(g);
    const auto par = solve_dc_batch(g, topo, many);
    const auto ser = solve_dc_batch_serial(g, topo, many);
    ASSERT_EQ(par.size(), ser.size());
    for (std::size_t i = 0; i < par.size(); ++i) {
        EXPECT_EQ(par[i].p_flow, ser[i].p_flow);
        EXPECT_EQ(par[i].theta, ser[i].theta);
        EXPECT_EQ(par[i].losses_mw, ser[i].losses_mw);
        EXPECT_EQ(par[i].p_flow, solve_dc(g, topo, many[i]).p_flow);
    }
}
