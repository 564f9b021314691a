#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <random>

#include "gridmdp/harness.hpp"
#include "gridmdp/io.hpp"
#include "support.hpp"

using namespace gridmdp;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("gridmdp_h_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(GRIDMDP_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

int count_lines(const fs::path& file) {
    std::ifstream in(file);
    int n = 0;
    for (std::string line; std::getline(in, line);) ++n;
    return n;
}

}  // namespace

TEST(Reports, RoundTripAndRecompute) {
    auto sc = fx::fixture("maintenance_week");
    auto agent = make_agent("expert", sc->grid);
    const RunReport r = run_episode(*agent, sc);
    const fs::path dir = temp_dir("report");
    save_report(r, dir / "r.json");
    const RunReport back = load_report(dir / "r.json");
    EXPECT_EQ(back.scenario_id, r.scenario_id);
    EXPECT_EQ(back.agent, "expert");
    EXPECT_EQ(back.survived_steps, r.survived_steps);
    EXPECT_EQ(back.steps, r.steps);
    EXPECT_EQ(back.actions, r.actions);
    EXPECT_EQ(back.score, r.score);
    EXPECT_EQ(recompute_score(back, sc->grid), r.score);
    EXPECT_EQ(static_cast<int>(r.actions.size()), static_cast<int>(r.steps.size()));
    fs::remove_all(dir);
}

TEST(Reports, DoNothingScoresZeroEverywhere) {
    for (const auto& sc : load_scenario_set(fx::data_dir() / "scenarios")) {
        DoNothingAgent dn;
        EXPECT_EQ(run_episode(dn, sc).score, 0.0) << sc->id;
    }
}

TEST(Reports, ExpertBeatsDoNothingUnderMaintenance) {
    auto sc = fx::fixture("maintenance_week");
    auto expert = make_agent("expert", sc->grid);
    DoNothingAgent dn;
    const RunReport e = run_episode(*expert, sc), d = run_episode(dn, sc);
    EXPECT_FALSE(e.game_over);
    EXPECT_GE(e.score, d.score);
}

TEST(Reports, RerunsAreIdentical) {
    auto sc = fx::fixture("outage_week");
    auto a = make_agent("untrained:2", sc->grid);
    auto b = make_agent("untrained:2", sc->grid);
    const RunReport x = run_episode(*a, sc), y = run_episode(*b, sc);
    EXPECT_EQ(x.steps, y.steps);
    EXPECT_EQ(x.score, y.score);
}

TEST(Evaluate, ParallelMatchesSerial) {
    const Grid g = fx::default_grid();
    StressConfig cfg;
    cfg.base.days = 2;
    const auto suite = make_stress_suite(g, cfg, 500, 4);
    const auto factory = agent_factory("untrained:1");
    const auto par = evaluate(factory, suite), ser = evaluate_serial(factory, suite);
    ASSERT_EQ(par.size(), ser.size());
    for (std::size_t i = 0; i < par.size(); ++i) {
        EXPECT_EQ(par[i].scenario_id, suite[i]->id);
        EXPECT_EQ(par[i].steps, ser[i].steps);
        EXPECT_EQ(par[i].actions, ser[i].actions);
        EXPECT_EQ(par[i].score, ser[i].score);
    }
}

TEST(Evaluate, ErrorsPropagate) {
    auto sc = fx::fixture("default_week");
    const AgentFactory broken = [](const Grid&) -> std::unique_ptr<Agent> { throw std::runtime_error("boom"); };
    EXPECT_THROW(evaluate(broken, {sc, sc}), std::runtime_error);
}

TEST(AgentSpecs, KnownAndUnknown) {
    const Grid g = fx::default_grid();
    EXPECT_EQ(make_agent("do-nothing", g)->name(), "do-nothing");
    EXPECT_EQ(make_agent("expert", g)->name(), "expert");
    EXPECT_EQ(make_agent("untrained:4", g)->name(), "untrained:4");
    EXPECT_THROW(make_agent("genius", g), std::invalid_argument);
    EXPECT_THROW(make_agent("ppo:/nonexistent/dir", g), std::exception);

    const fs::path dir = temp_dir("mix");
    std::ofstream(dir / "mixture.json") << R"({"candidates": ["do-nothing", "expert", "untrained:1"]})";
    auto mix = make_agent("mixture:" + dir.string(), g);
    EXPECT_EQ(mix->name(), "mixture:" + dir.filename().string());
    fs::remove_all(dir);
}

TEST(StressSuite, DeterministicAndRanked) {
    const Grid g = fx::default_grid();
    StressConfig cfg;
    cfg.base.days = 2;
    const auto a = make_stress_scenario(g, cfg, 17), b = make_stress_scenario(g, cfg, 17);
    EXPECT_EQ(a->id, "stress_17");
    EXPECT_EQ(a->chronics, b->chronics);
    ASSERT_EQ(a->chronics.maintenance.size(), 1u);
    const auto& w = a->chronics.maintenance[0];
    EXPECT_GE(w.start_step, cfg.min_start);
    EXPECT_LE(w.start_step, cfg.max_start);
    EXPECT_GE(w.n_steps, cfg.min_duration);
    EXPECT_LE(w.n_steps, cfg.max_duration);

    const auto suite = make_stress_suite(g, cfg, 30, 5);
    const auto order = rank_by_do_nothing(suite);
    ASSERT_EQ(order.size(), 5u);
    std::vector<int> survived;
    for (int i : order) {
        Environment env(suite[i]);
        while (!env.done()) env.step(DoNothing{});
        survived.push_back(survived_steps(env.state()));
    }
    EXPECT_TRUE(std::is_sorted(survived.begin(), survived.end()));
}

TEST(Sweep, OneRowPerValueSorted) {
    const Grid g = fx::default_grid();
    StressConfig cfg;
    cfg.base.days = 1;
    const auto suite = make_stress_suite(g, cfg, 1000, 2);
    const auto rows = run_sweep("untrained", SweepParam::SafeMaxRho, {0.99, 0.2, 0.9}, suite);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].value, 0.2);
    EXPECT_EQ(rows[2].value, 0.99);
    for (const auto& r : rows) {
        EXPECT_EQ(r.n_scenarios, 2);
        EXPECT_GE(r.mean_score, -100.0);
        EXPECT_LE(r.mean_score, 100.0);
    }
    const std::string table = format_sweep_table(SweepParam::SafeMaxRho, rows);
    EXPECT_EQ(table.substr(0, table.find('\n')), "safe-max-rho,mean_score,mean_survived_steps,survived,scenarios");
    EXPECT_EQ(sweep_param_from_string("limit-cs-margin"), SweepParam::LimitCsMargin);
    EXPECT_THROW(sweep_param_from_string("gamma"), std::invalid_argument);
}

TEST(TrainingSetup, ParsesConfig) {
    const json doc = json::parse(R"({"seed": 3, "ppo": {"total_steps": 32, "hidden": [8]},
        "rules": {"safe_max_rho": 0.5, "limit_cs_margin": "oracle"},
        "scenarios": {"dir": "scenarios/default_week"}})");
    const TrainingSetup s = training_setup_from_json(doc, fx::data_dir());
    EXPECT_EQ(s.seed, 3u);
    EXPECT_EQ(s.ppo.total_steps, 32);
    EXPECT_EQ(s.ppo.hidden, std::vector<int>{8});
    EXPECT_EQ(s.rules.safe_max_rho, 0.5);
    EXPECT_TRUE(s.rules.oracle_limit);
    ASSERT_EQ(s.scenarios.size(), 1u);
    const TrainResult r = run_training(s);
    EXPECT_EQ(r.log.size(), 2u);
    EXPECT_THROW(training_setup_from_json(json::parse(R"({"scenarios": {"dir": "/nonexistent"}})"), "."),
                 std::exception);
}

TEST(ActionJson, RoundTrip) {
    Environment env(fx::fixture("default_week"));
    const Grid& g = env.grid();
    std::mt19937_64 rng(7);
    for (int i = 0; i < 200; ++i) {
        const Action a = fx::random_action(rng, g);
        const json j = action_to_json(a, g);
        EXPECT_EQ(action_from_json(j, g, env.state()), a) << j.dump();
    }
    const int sub = g.lines()[0].from;
    SetBusbar bb{sub, {}};
    for (const auto& e : elements_at(g, sub)) bb.assignments.push_back({e, 2});
    EXPECT_EQ(action_from_json(action_to_json(bb, g), g, env.state()), Action{bb});
}

TEST(ActionJson, PartialMapsKeepStateOrIdle) {
    Environment env(fx::fixture("default_week"));
    const Grid& g = env.grid();
    const std::string ren0 = g.generators()[g.renewable_generators()[0]].id;
    const Action a = action_from_json(json{{"type", "curtail"}, {"caps", {{ren0, 0.25}}}}, g, env.state());
    const auto& caps = std::get<Curtail>(a).caps;
    EXPECT_EQ(caps[0], 0.25);
    for (std::size_t r = 1; r < caps.size(); ++r) EXPECT_EQ(caps[r], env.state().curtail_caps[r]);

    const std::string st0 = g.storages()[0].id;
    const Action s = action_from_json(json{{"type", "set_storage"}, {"power_mw", {{st0, -1.0}}}}, g, env.state());
    EXPECT_EQ(std::get<SetStorage>(s).power_mw[0], -1.0);
    EXPECT_EQ(std::get<SetStorage>(s).power_mw[1], 0.0);
}

TEST(ActionJson, RejectsMalformedDocuments) {
    Environment env(fx::fixture("default_week"));
    const Grid& g = env.grid();
    const std::string ren0 = g.generators()[g.renewable_generators()[0]].id;
    const std::string st0 = g.storages()[0].id;
    const std::vector<json> bad{
        json::array(),
        json{{"type", "teleport"}},
        json{{"type", "do_nothing"}, {"extra", 1}},
        json{{"type", "set_line_status"}, {"line", "no_such_line"}, {"connect", true}},
        json{{"type", "set_line_status"}, {"line", g.lines()[0].id}, {"connect", "yes"}},
        json{{"type", "curtail"}, {"caps", {{ren0, 1.5}}}},
        json{{"type", "curtail"}, {"caps", {{"ghost", 0.5}}}},
        json{{"type", "set_storage"}, {"power_mw", {{st0, 1e6}}}},
        json{{"type", "set_busbar"}, {"substation", g.substations()[0].id},
             {"assignments", {{{"kind", "load"}, {"id", "nope"}, {"busbar", 2}}}}},
    };
    for (const auto& doc : bad) EXPECT_THROW(action_from_json(doc, g, env.state()), ActionParseError) << doc.dump();
}

TEST(StepInfoJson, RoundTrip) {
    Environment env(fx::fixture("default_week"));
    const StepResult r = env.step(SetStorage{{1.0, -1.0}});
    EXPECT_EQ(step_info_from_json(step_info_to_json(r.info)), r.info);
    const json obs = observation_to_json(r.observation, env.grid());
    EXPECT_EQ(obs["lines"].size(), static_cast<std::size_t>(env.grid().n_lines()));
    EXPECT_EQ(obs["step"], 1);
}

TEST(Cli, GeneratesOneDay) {
    const fs::path dir = temp_dir("cli_gen");
    ASSERT_EQ(run_cli("generate-chronics --days 1 --seed 3 --out " + (dir / "s").string()), 0);
    EXPECT_EQ(count_lines(dir / "s" / "load_p.csv"), 289);
    EXPECT_EQ(load_scenario(dir / "s").chronics.n_steps, 288);

    ASSERT_EQ(run_cli("run --agent do-nothing --scenario " + (dir / "s").string() + " --report " +
                      (dir / "r.json").string()),
              0);
    EXPECT_EQ(load_report(dir / "r.json").score, 0.0);
    fs::create_directories(dir / "reports");
    fs::copy_file(dir / "r.json", dir / "reports" / "r.json");
    EXPECT_EQ(run_cli("score --reports " + (dir / "reports").string()), 0);
    fs::remove_all(dir);
}

TEST(Cli, BadUsageExitsWithTwo) {
    EXPECT_EQ(run_cli("run --bogus"), 2);
    EXPECT_EQ(run_cli(""), 2);
    EXPECT_EQ(run_cli("sweep --param gamma --values 1"), 2);
    EXPECT_EQ(run_cli("run --scenario /nonexistent/place"), 1);
}
