#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "gridmdp/env.hpp"

namespace gridmdp {

class ScoringError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ScoringConfig {
    double price_mwh = 70.0;
    double blackout_multiplier = 2.0;  // beta >= 1
    double best_fraction = 0.8;        // c_best = fraction * do-nothing losses cost
    double dt_hours = kStepHours;

    void validate() const;
};

/// Per-step records of a finished episode.
struct EpisodeReport {
    int horizon = 0;
    std::vector<StepInfo> steps;

    bool survived() const;
};

struct EpisodeCosts {
    double losses_cost = 0.0;
    double operation_cost = 0.0;
    double blackout_cost = 0.0;
    double total = 0.0;
};

EpisodeCosts episode_costs(const EpisodeReport& report, const Grid& grid, const ScoringConfig& config = {});

/// Same sums over any prefix of step records, finished or not.
EpisodeCosts prefix_costs(const std::vector<StepInfo>& steps, const Grid& grid, const ScoringConfig& config = {});

struct ScenarioRefs {
    double c_dn = 0.0;
    double c_best = 0.0;
    double c_worst = 0.0;
};

/// Anchors from the do-nothing run of the scenario.
ScenarioRefs scenario_refs(std::shared_ptr<const Scenario> scenario, const EnvConfig& env_config = {},
                           const ScoringConfig& config = {});

/// Anchors from an already recorded do-nothing episode.
ScenarioRefs scenario_refs_from(const EpisodeReport& do_nothing, const Scenario& scenario,
                                const ScoringConfig& config = {});

/// Maps a total cost to [-100, 100]: do-nothing = 0, c_best = 100, c_worst = -100.
double normalize_score(double total_cost, const ScenarioRefs& refs);

struct ScoreEntry {
    std::string agent;
    std::string scenario;
    double score = 0.0;
};

struct LeaderboardRow {
    std::string agent;
    double mean_score = 0.0;
    int n_scenarios = 0;
};

/// Mean normalized score per agent, best first; ties broken by agent name.
std::vector<LeaderboardRow> leaderboard(const std::vector<ScoreEntry>& entries);

}  // namespace gridmdp
