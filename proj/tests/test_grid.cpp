#include <gtest/gtest.h>

#include "gridmdp/grid.hpp"
#include "support.hpp"

using namespace gridmdp;

namespace {

const char* kMinimal = R"({
  "base_mva": 100,
  "substations": [{"id": "a"}, {"id": "b"}],
  "lines": [{"id": "l", "from": "a", "to": "b", "x_pu": 0.1, "r_pu": 0.01, "thermal_limit_mw": 50}],
  "generators": [{"id": "g", "sub": "a", "type": "thermal", "p_max": 100, "p_min": 0,
                  "ramp_mw_per_step": 10, "marginal_cost": 40}],
  "loads": [{"id": "d", "sub": "b"}],
  "storages": []
})";

std::string replace(std::string s, const std::string& from, const std::string& to) {
    s.replace(s.find(from), from.size(), to);
    return s;
}

}  // namespace

TEST(Grid, MinimalDocumentCounts) {
    const Grid g = parse_grid(kMinimal);
    EXPECT_EQ(g.n_substations(), 2);
    EXPECT_EQ(g.n_lines(), 1);
    EXPECT_EQ(g.n_generators(), 1);
    EXPECT_EQ(g.n_loads(), 1);
    EXPECT_EQ(g.n_storages(), 0);
}

TEST(Grid, DanglingReferenceNamesTheElement) {
    try {
        parse_grid(replace(kMinimal, R"("to": "b")", R"("to": "zz")"));
        FAIL() << "expected GridError";
    } catch (const GridError& e) {
        EXPECT_EQ(e.element(), "l");
    }
}

TEST(Grid, RejectsNonPositiveReactance) {
    EXPECT_THROW(parse_grid(replace(kMinimal, R"("x_pu": 0.1)", R"("x_pu": 0)")), GridError);
    EXPECT_THROW(parse_grid(replace(kMinimal, R"("thermal_limit_mw": 50)", R"("thermal_limit_mw": -1)")), GridError);
}

TEST(Grid, RejectsDuplicateIdsAndBadGenerators) {
    EXPECT_THROW(parse_grid(replace(kMinimal, R"({"id": "b"})", R"({"id": "a"})")), GridError);
    EXPECT_THROW(parse_grid(replace(kMinimal, R"("p_min": 0)", R"("p_min": 200)")), GridError);
    EXPECT_THROW(parse_grid(replace(kMinimal, R"("type": "thermal")", R"("type": "coal")")), GridError);
}

TEST(Grid, RejectsDisconnectedNetwork) {
    const std::string doc = replace(kMinimal, R"({"id": "b"}])", R"({"id": "b"}, {"id": "c"}])");
    EXPECT_THROW(parse_grid(doc), GridError);
}

TEST(Grid, DefaultGridCounts) {
    const Grid g = fx::default_grid();
    EXPECT_EQ(g.n_substations(), 14);
    EXPECT_EQ(g.n_lines(), 20);
    EXPECT_EQ(g.n_loads(), 11);
    EXPECT_EQ(g.n_generators(), 5);
    EXPECT_EQ(g.n_storages(), 2);
    EXPECT_EQ(g.n_renewables(), 2);
    int per_type[kGenTypeCount] = {};
    for (const auto& gen : g.generators()) ++per_type[static_cast<int>(gen.type)];
    for (int t = 0; t < kGenTypeCount; ++t) EXPECT_EQ(per_type[t], 1);
}

TEST(Grid, ParseSerializeParseIsIdentity) {
    const Grid g = fx::default_grid();
    EXPECT_EQ(parse_grid(serialize_grid(g)), g);
    std::mt19937_64 rng(5);
    const Grid r = fx::random_grid(rng, 30);
    EXPECT_EQ(parse_grid(serialize_grid(r)), r);
}

TEST(Grid, RenewableFlagMatchesType) {
    for (const auto& gen : fx::default_grid().generators())
        EXPECT_EQ(gen.renewable(), gen.type == GenType::Solar || gen.type == GenType::Wind);
}

TEST(Topology, AllOnBusbarOneGivesOneBusPerSubstation) {
    const Grid g = fx::default_grid();
    const BusGraph bg = effective_buses(g, TopologyState::initial(g));
    EXPECT_EQ(bg.n_buses(), g.n_substations());
    EXPECT_EQ(bg.n_components, 1);
    // Isomorphic to the substation graph: bus i is substation i.
    for (int b = 0; b < bg.n_buses(); ++b) {
        EXPECT_EQ(bg.buses[b].substation, b);
        EXPECT_EQ(bg.buses[b].busbar, 1);
    }
    for (int l = 0; l < g.n_lines(); ++l) {
        EXPECT_EQ(bg.line_from[l], g.lines()[l].from);
        EXPECT_EQ(bg.line_to[l], g.lines()[l].to);
    }
}

TEST(Topology, SplittingAddsOneBus) {
    const Grid g = fx::default_grid();
    TopologyState t = TopologyState::initial(g);
    const int sub = g.lines()[0].from;
    const auto elems = elements_at(g, sub);
    ASSERT_GE(elems.size(), 2u);
    t.set_busbar(elems.front(), 2);
    check_topology(g, t);
    const BusGraph bg = effective_buses(g, t);
    EXPECT_EQ(bg.n_buses(), g.n_substations() + 1);
}

TEST(Topology, BusesOnlyForOccupiedBusbars) {
    const Grid g = fx::default_grid();
    TopologyState t = TopologyState::initial(g);
    for (const auto& e : elements_at(g, 3)) t.set_busbar(e, 2);  // move everything: busbar 1 empties
    const BusGraph bg = effective_buses(g, t);
    EXPECT_EQ(bg.n_buses(), g.n_substations());
    for (const auto& b : bg.buses)
        if (b.substation == 3) EXPECT_EQ(b.busbar, 2);
}

TEST(Topology, CuttingTheOnlyLineIsolatesTheSubstation) {
    const Grid g = fx::two_bus_grid();
    TopologyState t = TopologyState::initial(g);
    t.line_status[0] = 0;
    const BusGraph bg = effective_buses(g, t);
    EXPECT_EQ(bg.n_components, 2);
    EXPECT_NE(bg.component[0], bg.component[1]);
}

TEST(Topology, CheckRejectsBadBusbar) {
    const Grid g = fx::default_grid();
    TopologyState t = TopologyState::initial(g);
    t.gen_bus[0] = 3;
    EXPECT_THROW(check_topology(g, t), GridError);
}
