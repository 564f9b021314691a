#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridmdp/agents.hpp"
#include "gridmdp/scoring.hpp"

namespace gridmdp {

struct RunReport {
    std::string scenario_id;
    std::string agent;
    int survived_steps = 0;
    int horizon = 0;
    bool game_over = false;
    std::vector<StepInfo> steps;
    std::vector<nlohmann::json> actions;  // one per step, action JSON
    EpisodeCosts costs;
    ScenarioRefs refs;
    double score = 0.0;
    double wall_seconds = 0.0;

    EpisodeReport episode() const { return {horizon, steps}; }
};

nlohmann::json report_to_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& doc);
void save_report(const RunReport& report, const std::filesystem::path& file);
RunReport load_report(const std::filesystem::path& file);

/// Score from the stored step records and anchors.
double recompute_score(const RunReport& report, const Grid& grid, const ScoringConfig& scoring = {});

/// Plays `agent` until the episode ends. Anchors are computed with a
/// do-nothing run unless given.
RunReport run_episode(Agent& agent, std::shared_ptr<const Scenario> scenario, const EnvConfig& env_config = {},
                      const ScoringConfig& scoring = {}, std::optional<ScenarioRefs> refs = std::nullopt);

using AgentFactory = std::function<std::unique_ptr<Agent>(const Grid& grid)>;

/// One fresh agent per scenario, scenarios run in parallel with OpenMP.
/// Reports come back in scenario order.
std::vector<RunReport> evaluate(const AgentFactory& factory,
                                const std::vector<std::shared_ptr<const Scenario>>& scenarios,
                                const EnvConfig& env_config = {}, const ScoringConfig& scoring = {},
                                const std::vector<ScenarioRefs>& refs = {});
/// Serial reference for `evaluate`.
std::vector<RunReport> evaluate_serial(const AgentFactory& factory,
                                       const std::vector<std::shared_ptr<const Scenario>>& scenarios,
                                       const EnvConfig& env_config = {}, const ScoringConfig& scoring = {},
                                       const std::vector<ScenarioRefs>& refs = {});

/// Do-nothing anchors for every scenario, in parallel.
std::vector<ScenarioRefs> compute_refs(const std::vector<std::shared_ptr<const Scenario>>& scenarios,
                                       const EnvConfig& env_config = {}, const ScoringConfig& scoring = {});

/// Agent specs:
///   do-nothing
///   expert              rules only
///   ppo:DIR             saved agent (rules from agent.json unless `rules` is set)
///   untrained[:SEED]    rules with a freshly initialized policy
///   mixture:DIR         DIR/mixture.json = {"candidates": [spec, ...]};
///                       relative paths resolve against DIR
AgentFactory agent_factory(const std::string& spec, std::optional<ExpertRulesConfig> rules = std::nullopt,
                           int cooldown_steps = EnvConfig{}.cooldown_steps);
std::unique_ptr<Agent> make_agent(const std::string& spec, const Grid& grid,
                                  std::optional<ExpertRulesConfig> rules = std::nullopt,
                                  int cooldown_steps = EnvConfig{}.cooldown_steps);

// ---------------------------------------------------------------------------
// Scenario sets
// ---------------------------------------------------------------------------

/// Random single-line maintenance weeks. Line, start and duration are drawn
/// from `seed`; weather uses the same seed.
struct StressConfig {
    std::vector<std::string> lines{"line_03", "line_04", "line_07", "line_09", "line_10",
                                   "line_11", "line_14", "line_15", "line_16"};
    int min_start = 50;
    int max_start = 1500;
    int min_duration = 144;
    int max_duration = 576;
    GenConfig base;  // days and start date
};

std::shared_ptr<const Scenario> make_stress_scenario(const Grid& grid, const StressConfig& config,
                                                     std::uint64_t seed);

/// Indices of `scenarios` ordered hardest first by do-nothing survival
/// (ties by index).
std::vector<int> rank_by_do_nothing(const std::vector<std::shared_ptr<const Scenario>>& scenarios,
                                    const EnvConfig& env_config = {});

/// Loads every scenario directory under `root`.
std::vector<std::shared_ptr<const Scenario>> load_scenario_set(const std::filesystem::path& root);

/// Scenario root from GRIDMDP_DATA_DIR, else the build-time data directory.
std::filesystem::path default_data_dir();

/// `n` stress weeks for seeds first_seed, first_seed + 1, ...
std::vector<std::shared_ptr<const Scenario>> make_stress_suite(const Grid& grid, const StressConfig& config,
                                                               std::uint64_t first_seed, int n);

// ---------------------------------------------------------------------------
// Training runs
// ---------------------------------------------------------------------------

/// Everything `train-ppo --config` reads. JSON layout:
///
///   {"seed": 0, "grid": "default_grid.json",
///    "ppo": {"total_steps": 50000, "gamma": 0.999, "clip_epsilon": 0.2, "batch_size": 16,
///            "env_steps_per_update": 16, "epochs": 10, "learning_rate": 3e-6, "hidden": [300, 300, 300]},
///    "rules": {"safe_max_rho": 0.2, "limit_cs_margin": "oracle"},
///    "scenarios": {"dir": PATH}
///              | {"stress": {"first_seed": 100, "count": 16, "keep_hardest": 8,
///                            "starts": ["2022-01-17T00:00", ...], "days": 7}}}
///
/// Relative paths resolve against `base_dir`. Missing keys keep defaults.
struct TrainingSetup {
    std::uint64_t seed = 0;
    PpoConfig ppo;
    ExpertRulesConfig rules{0.2, 60.0, true};
    EnvConfig env;
    std::vector<std::shared_ptr<const Scenario>> scenarios;
};

TrainingSetup training_setup_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);

/// Cycles through `setup.scenarios` episode by episode.
TrainResult run_training(const TrainingSetup& setup);

void write_training_log(const std::vector<TrainingLogEntry>& log, const std::filesystem::path& file);

// ---------------------------------------------------------------------------
// Hyperparameter sweep
// ---------------------------------------------------------------------------

enum class SweepParam { SafeMaxRho, LimitCsMargin };

SweepParam sweep_param_from_string(const std::string& name);
std::string to_string(SweepParam param);

struct SweepRow {
    double value = 0.0;
    double mean_score = 0.0;
    double mean_survived_steps = 0.0;
    int n_survived = 0;
    int n_scenarios = 0;
};

/// One parameter varies, the other is held at its default (margin 60 while
/// sweeping safe_max_rho, safe_max_rho 0.99 while sweeping the margin). Rows
/// are sorted by value.
std::vector<SweepRow> run_sweep(const std::string& agent_spec, SweepParam param, std::vector<double> values,
                                const std::vector<std::shared_ptr<const Scenario>>& scenarios,
                                const EnvConfig& env_config = {}, const ScoringConfig& scoring = {});

std::string format_sweep_table(SweepParam param, const std::vector<SweepRow>& rows);

}  // namespace gridmdp
