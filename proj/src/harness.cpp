#include "gridmdp/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "gridmdp/io.hpp"

#ifndef GRIDMDP_DEFAULT_DATA_DIR
#define GRIDMDP_DEFAULT_DATA_DIR "data"
#endif

namespace gridmdp {

using json = nlohmann::json;

json report_to_json(const RunReport& r) {
    json steps = json::array();
    for (const auto& s : r.steps) steps.push_back(step_info_to_json(s));
    return {{"scenario", r.scenario_id},
            {"agent", r.agent},
            {"survived_steps", r.survived_steps},
            {"horizon", r.horizon},
            {"game_over", r.game_over},
            {"costs",
             {{"losses", r.costs.losses_cost},
              {"operation", r.costs.operation_cost},
              {"blackout", r.costs.blackout_cost},
              {"total", r.costs.total}}},
            {"refs", {{"c_dn", r.refs.c_dn}, {"c_best", r.refs.c_best}, {"c_worst", r.refs.c_worst}}},
            {"score", r.score},
            {"wall_seconds", r.wall_seconds},
            {"actions", r.actions},
            {"steps", steps}};
}

RunReport report_from_json(const json& j) {
    RunReport r;
    r.scenario_id = j.at("scenario").get<std::string>();
    r.agent = j.at("agent").get<std::string>();
    r.survived_steps = j.at("survived_steps").get<int>();
    r.horizon = j.at("horizon").get<int>();
    r.game_over = j.at("game_over").get<bool>();
    const json& c = j.at("costs");
    r.costs = {c.at("losses").get<double>(), c.at("operation").get<double>(), c.at("blackout").get<double>(),
               c.at("total").get<double>()};
    const json& refs = j.at("refs");
    r.refs = {refs.at("c_dn").get<double>(), refs.at("c_best").get<double>(), refs.at("c_worst").get<double>()};
    r.score = j.at("score").get<double>();
    r.wall_seconds = j.value("wall_seconds", 0.0);
    if (j.contains("actions")) r.actions = j.at("actions").get<std::vector<json>>();
    for (const auto& s : j.at("steps")) r.steps.push_back(step_info_from_json(s));
    return r;
}

void save_report(const RunReport& report, const std::filesystem::path& file) {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    std::ofstream out(file);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out << report_to_json(report).dump() << '\n';
}

RunReport load_report(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    return report_from_json(json::parse(in));
}

double recompute_score(const RunReport& report, const Grid& grid, const ScoringConfig& scoring) {
    return normalize_score(episode_costs(report.episode(), grid, scoring).total, report.refs);
}

RunReport run_episode(Agent& agent, std::shared_ptr<const Scenario> scenario, const EnvConfig& env_config,
                      const ScoringConfig& scoring, std::optional<ScenarioRefs> refs) {
    const auto t0 = std::chrono::steady_clock::now();
    if (!refs) refs = scenario_refs(scenario, env_config, scoring);
    Environment env(scenario, env_config);
    RunReport r;
    r.scenario_id = scenario->id;
    r.agent = agent.name();
    r.horizon = env.horizon();
    Observation obs = env.observe();
    while (!env.done()) {
        const Action action = agent.act(obs, env);
        r.actions.push_back(action_to_json(action, env.grid()));
        StepResult res = env.step(action);
        r.steps.push_back(std::move(res.info));
        obs = std::move(res.observation);
    }
    r.game_over = env.state().game_over;
    r.survived_steps = survived_steps(env.state());
    r.costs = episode_costs(r.episode(), env.grid(), scoring);
    r.refs = *refs;
    r.score = normalize_score(r.costs.total, r.refs);
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

namespace {

/// OpenMP loop over [0, n) that rethrows the first exception afterwards.
template <class F>
void parallel_each(long n, F&& fn) {
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 1)
    for (long i = 0; i < n; ++i) {
        try {
            fn(i);
        } catch (...) {
#pragma omp critical(gridmdp_parallel_each)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
}

std::optional<ScenarioRefs> refs_at(const std::vector<ScenarioRefs>& refs, std::size_t i) {
    if (refs.empty()) return std::nullopt;
    return refs.at(i);
}

void check_refs(const std::vector<ScenarioRefs>& refs, std::size_t n) {
    if (!refs.empty() && refs.size() != n) throw std::invalid_argument("one set of anchors per scenario expected");
}

}  // namespace

std::vector<RunReport> evaluate(const AgentFactory& factory,
                                const std::vector<std::shared_ptr<const Scenario>>& scenarios,
                                const EnvConfig& env_config, const ScoringConfig& scoring,
                                const std::vector<ScenarioRefs>& refs) {
    check_refs(refs, scenarios.size());
    std::vector<RunReport> out(scenarios.size());
    parallel_each(static_cast<long>(scenarios.size()), [&](long i) {
        auto agent = factory(scenarios[i]->grid);
        out[i] = run_episode(*agent, scenarios[i], env_config, scoring, refs_at(refs, i));
    });
    return out;
}

std::vector<RunReport> evaluate_serial(const AgentFactory& factory,
                                       const std::vector<std::shared_ptr<const Scenario>>& scenarios,
                                       const EnvConfig& env_config, const ScoringConfig& scoring,
                                       const std::vector<ScenarioRefs>& refs) {
    check_refs(refs, scenarios.size());
    std::vector<RunReport> out;
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        auto agent = factory(scenarios[i]->grid);
        out.push_back(run_episode(*agent, scenarios[i], env_config, scoring, refs_at(refs, i)));
    }
    return out;
}

std::vector<ScenarioRefs> compute_refs(const std::vector<std::shared_ptr<const Scenario>>& scenarios,
                                       const EnvConfig& env_config, const ScoringConfig& scoring) {
    std::vector<ScenarioRefs> out(scenarios.size());
    parallel_each(static_cast<long>(scenarios.size()),
                  [&](long i) { out[i] = scenario_refs(scenarios[i], env_config, scoring); });
    return out;
}

namespace {

std::unique_ptr<Agent> build_agent(const std::string& spec, const Grid& grid,
                                   const std::optional<ExpertRulesConfig>& rules, int cooldown_steps) {
    if (spec == "do-nothing") return std::make_unique<DoNothingAgent>();
    if (spec == "expert") return std::make_unique<ExpertAgent>(rules.value_or(ExpertRulesConfig{}));
    if (spec.rfind("ppo:", 0) == 0) return load_agent(spec.substr(4), grid, rules);
    if (spec == "untrained" || spec.rfind("untrained:", 0) == 0) {
        const std::uint64_t seed = spec.size() > 10 ? std::stoull(spec.substr(10)) : 0;
        auto bundle = std::make_shared<PolicyBundle>();
        bundle->network = initial_policy(grid, cooldown_steps, PpoConfig{}.hidden, seed);
        bundle->scaler = FeatureScaler(grid, cooldown_steps);
        return std::make_unique<ExpertAgent>(rules.value_or(ExpertRulesConfig{}), std::move(bundle), spec);
    }
    if (spec.rfind("mixture:", 0) == 0) {
        const std::filesystem::path dir = spec.substr(8);
        std::ifstream in(dir / "mixture.json");
        if (!in) throw std::runtime_error("cannot open " + (dir / "mixture.json").string());
        const json j = json::parse(in);
        std::vector<std::unique_ptr<Agent>> candidates;
        for (const auto& c : j.at("candidates")) {
            std::string sub = c.get<std::string>();
            for (const char* prefix : {"ppo:", "mixture:"}) {
                const std::string p = prefix;
                if (sub.rfind(p, 0) == 0 && std::filesystem::path(sub.substr(p.size())).is_relative())
                    sub = p + (dir / sub.substr(p.size())).string();
            }
            candidates.push_back(build_agent(sub, grid, rules, cooldown_steps));
        }
        return std::make_unique<MixtureAgent>(std::move(candidates), "mixture:" + dir.filename().string());
    }
    throw std::invalid_argument("unknown agent '" + spec + "'");
}

}  // namespace

std::unique_ptr<Agent> make_agent(const std::string& spec, const Grid& grid, std::optional<ExpertRulesConfig> rules,
                                  int cooldown_steps) {
    return build_agent(spec, grid, rules, cooldown_steps);
}

AgentFactory agent_factory(const std::string& spec, std::optional<ExpertRulesConfig> rules, int cooldown_steps) {
    return [spec, rules, cooldown_steps](const Grid& grid) { return build_agent(spec, grid, rules, cooldown_steps); };
}

std::shared_ptr<const Scenario> make_stress_scenario(const Grid& grid, const StressConfig& config,
                                                     std::uint64_t seed) {
    if (config.lines.empty()) throw std::invalid_argument("stress config lists no lines");
    std::mt19937_64 rng(seed * 7919 + 1);
    std::uniform_int_distribution<std::size_t> pick(0, config.lines.size() - 1);
    std::uniform_int_distribution<int> start(config.min_start, config.max_start);
    std::uniform_int_distribution<int> duration(config.min_duration, config.max_duration);
    GenConfig gen = config.base;
    MaintenanceSpec m;
    m.line_id = config.lines[pick(rng)];
    m.start_step = start(rng);
    m.n_steps = duration(rng);
    gen.maintenance.push_back(m);
    auto s = std::make_shared<Scenario>();
    s->grid = grid;
    s->chronics = generate_chronics(grid, gen, seed);
    s->id = "stress_" + std::to_string(seed);
    return s;
}

std::vector<std::shared_ptr<const Scenario>> make_stress_suite(const Grid& grid, const StressConfig& config,
                                                               std::uint64_t first_seed, int n) {
    std::vector<std::shared_ptr<const Scenario>> out(static_cast<std::size_t>(std::max(0, n)));
    parallel_each(static_cast<long>(out.size()),
                  [&](long i) { out[i] = make_stress_scenario(grid, config, first_seed + static_cast<std::uint64_t>(i)); });
    return out;
}

std::vector<int> rank_by_do_nothing(const std::vector<std::shared_ptr<const Scenario>>& scenarios,
                                    const EnvConfig& env_config) {
    std::vector<int> survived(scenarios.size());
    parallel_each(static_cast<long>(scenarios.size()), [&](long i) {
        Environment env(scenarios[i], env_config);
        while (!env.done()) env.step(DoNothing{});
        survived[i] = survived_steps(env.state());
    });
    std::vector<int> order(scenarios.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return survived[a] < survived[b]; });
    return order;
}

std::vector<std::shared_ptr<const Scenario>> load_scenario_set(const std::filesystem::path& root) {
    std::vector<std::shared_ptr<const Scenario>> out;
    if (std::filesystem::exists(root / "grid.json")) {
        out.push_back(std::make_shared<const Scenario>(load_scenario(root)));
        return out;
    }
    for (const auto& dir : list_scenarios(root)) out.push_back(std::make_shared<const Scenario>(load_scenario(dir)));
    if (out.empty()) throw std::runtime_error("no scenarios under " + root.string());
    return out;
}

std::filesystem::path default_data_dir() {
    if (const char* env = std::getenv("GRIDMDP_DATA_DIR"); env && *env) return env;
    return GRIDMDP_DEFAULT_DATA_DIR;
}

TrainingSetup training_setup_from_json(const json& j, const std::filesystem::path& base_dir) {
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path path = p;
        return path.is_relative() ? base_dir / path : path;
    };
    TrainingSetup s;
    s.seed = j.value("seed", s.seed);
    if (j.contains("ppo")) {
        const json& p = j["ppo"];
        s.ppo.total_steps = p.value("total_steps", s.ppo.total_steps);
        s.ppo.gamma = p.value("gamma", s.ppo.gamma);
        s.ppo.clip_epsilon = p.value("clip_epsilon", s.ppo.clip_epsilon);
        s.ppo.batch_size = p.value("batch_size", s.ppo.batch_size);
        s.ppo.env_steps_per_update = p.value("env_steps_per_update", s.ppo.env_steps_per_update);
        s.ppo.epochs = p.value("epochs", s.ppo.epochs);
        s.ppo.learning_rate = p.value("learning_rate", s.ppo.learning_rate);
        s.ppo.value_coef = p.value("value_coef", s.ppo.value_coef);
        s.ppo.hidden = p.value("hidden", s.ppo.hidden);
    }
    if (j.contains("rules")) {
        const json& r = j["rules"];
        s.rules.safe_max_rho = r.value("safe_max_rho", s.rules.safe_max_rho);
        if (r.contains("limit_cs_margin")) {
            if (r["limit_cs_margin"].is_string()) {
                if (r["limit_cs_margin"] != "oracle")
                    throw std::invalid_argument("limit_cs_margin must be a number or \"oracle\"");
                s.rules.oracle_limit = true;
            } else {
                s.rules.limit_cs_margin = r["limit_cs_margin"].get<double>();
                s.rules.oracle_limit = false;
            }
        }
    }
    s.ppo.validate();
    s.rules.validate();

    const json sc = j.value("scenarios", json{{"stress", json::object()}});
    if (sc.contains("dir")) {
        s.scenarios = load_scenario_set(resolve(sc["dir"].get<std::string>()));
        return s;
    }
    const Grid grid = load_grid_file(resolve(j.value("grid", std::string("default_grid.json"))).string());
    const json st = sc.value("stress", json::object());
    const auto first = st.value("first_seed", std::uint64_t{100});
    const int count = st.value("count", 16);
    const int keep = st.value("keep_hardest", 8);
    const auto starts = st.value("starts", std::vector<std::string>{"2022-01-17T00:00", "2022-02-07T00:00"});
    if (count < 1 || keep < 1 || starts.empty()) throw std::invalid_argument("bad stress scenario settings");
    std::vector<std::shared_ptr<const Scenario>> pool(static_cast<std::size_t>(count));
    parallel_each(count, [&](long i) {
        StressConfig cfg;
        cfg.base.days = st.value("days", 7);
        cfg.base.start_datetime = starts[static_cast<std::size_t>(i) % starts.size()];
        pool[i] = make_stress_scenario(grid, cfg, first + static_cast<std::uint64_t>(i));
    });
    const auto order = rank_by_do_nothing(pool, s.env);
    for (int k = 0; k < std::min(keep, count); ++k) s.scenarios.push_back(pool[order[k]]);
    return s;
}

TrainResult run_training(const TrainingSetup& setup) {
    if (setup.scenarios.empty()) throw std::invalid_argument("no training scenarios");
    const auto& sc = setup.scenarios;
    return train_ppo([&sc](int episode) { return sc[static_cast<std::size_t>(episode) % sc.size()]; }, setup.env,
                     setup.ppo, setup.rules, setup.seed);
}

void write_training_log(const std::vector<TrainingLogEntry>& log, const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out << "update,env_steps,episodes_finished,mean_survived_steps,policy_samples,policy_objective,value_mse,loss\n";
    out << std::setprecision(17);
    for (const auto& e : log)
        out << e.update << ',' << e.env_steps << ',' << e.episodes_finished << ',' << e.mean_survived_steps << ','
            << e.policy_samples << ',' << e.policy_objective << ',' << e.value_mse << ',' << e.loss << '\n';
}

SweepParam sweep_param_from_string(const std::string& name) {
    if (name == "safe-max-rho") return SweepParam::SafeMaxRho;
    if (name == "limit-cs-margin") return SweepParam::LimitCsMargin;
    throw std::invalid_argument("unknown sweep parameter '" + name + "'");
}

std::string to_string(SweepParam param) {
    return param == SweepParam::SafeMaxRho ? "safe-max-rho" : "limit-cs-margin";
}

std::vector<SweepRow> run_sweep(const std::string& agent_spec, SweepParam param, std::vector<double> values,
                                const std::vector<std::shared_ptr<const Scenario>>& scenarios,
                                const EnvConfig& env_config, const ScoringConfig& scoring) {
    if (values.empty()) throw std::invalid_argument("sweep needs at least one value");
    if (scenarios.empty()) throw std::invalid_argument("sweep needs at least one scenario");
    std::sort(values.begin(), values.end());
    const auto refs = compute_refs(scenarios, env_config, scoring);
    std::vector<SweepRow> rows;
    for (double v : values) {
        ExpertRulesConfig rules;  // 0.99 / 60
        if (param == SweepParam::SafeMaxRho) {
            rules.safe_max_rho = v;
        } else {
            rules.limit_cs_margin = v;
        }
        rules.validate();
        const auto reports = evaluate(agent_factory(agent_spec, rules, env_config.cooldown_steps), scenarios,
                                      env_config, scoring, refs);
        SweepRow row;
        row.value = v;
        row.n_scenarios = static_cast<int>(reports.size());
        for (const auto& r : reports) {
            row.mean_score += r.score;
            row.mean_survived_steps += r.survived_steps;
            row.n_survived += r.game_over ? 0 : 1;
        }
        row.mean_score /= row.n_scenarios;
        row.mean_survived_steps /= row.n_scenarios;
        rows.push_back(row);
    }
    return rows;
}

std::string format_sweep_table(SweepParam param, const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << to_string(param) << ",mean_score,mean_survived_steps,survived,scenarios\n";
    os << std::setprecision(10);
    for (const auto& r : rows)
        os << r.value << ',' << r.mean_score << ',' << r.mean_survived_steps << ',' << r.n_survived << ','
           << r.n_scenarios << '\n';
    return os.str();
}

}  // namespace gridmdp
