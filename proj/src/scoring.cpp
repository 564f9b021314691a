#include "gridmdp/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace gridmdp {

void ScoringConfig::validate() const {
    if (!(price_mwh >= 0.0)) throw ScoringError("price must be non-negative");
    if (!(blackout_multiplier >= 1.0)) throw ScoringError("blackout multiplier must be >= 1");
    if (!(best_fraction >= 0.0 && best_fraction <= 1.0)) throw ScoringError("best fraction must be in [0, 1]");
}

bool EpisodeReport::survived() const {
    return !steps.empty() && !steps.back().game_over && static_cast<int>(steps.size()) == horizon;
}

EpisodeCosts episode_costs(const EpisodeReport& report, const Grid& grid, const ScoringConfig& cfg) {
    cfg.validate();
    if (report.steps.empty()) throw ScoringError("episode has no step records");
    const bool ended = report.steps.back().game_over || static_cast<int>(report.steps.size()) == report.horizon;
    if (!ended) throw ScoringError("missing step records: episode did not reach a terminal step");
    for (std::size_t i = 0; i + 1 < report.steps.size(); ++i) {
        if (report.steps[i].game_over) throw ScoringError("step records continue after game over");
    }

    return prefix_costs(report.steps, grid, cfg);
}

EpisodeCosts prefix_costs(const std::vector<StepInfo>& steps, const Grid& grid, const ScoringConfig& cfg) {
    cfg.validate();
    EpisodeCosts c;
    double blackout_mwh = 0.0;
    for (const auto& step : steps) {
        if (static_cast<int>(step.redispatch_mwh.size()) != grid.n_generators() ||
            static_cast<int>(step.storage_mwh.size()) != grid.n_storages()) {
            throw ScoringError("step record does not match grid dimensions");
        }
        c.losses_cost += step.losses_mw * cfg.dt_hours * cfg.price_mwh;
        for (int g = 0; g < grid.n_generators(); ++g)
            c.operation_cost += std::abs(step.redispatch_mwh[g]) * grid.generators()[g].marginal_cost;
        for (int s = 0; s < grid.n_storages(); ++s)
            c.operation_cost += std::abs(step.storage_mwh[s]) * grid.storages()[s].cost_per_mwh;
        c.operation_cost += std::max(0.0, step.curtailed_mwh) * cfg.price_mwh;
        blackout_mwh += step.blackout_energy_mwh;
    }
    c.blackout_cost = cfg.blackout_multiplier * cfg.price_mwh * blackout_mwh;
    c.total = c.losses_cost + c.operation_cost + c.blackout_cost;
    return c;
}

ScenarioRefs scenario_refs_from(const EpisodeReport& do_nothing, const Scenario& scenario, const ScoringConfig& cfg) {
    const EpisodeCosts dn = episode_costs(do_nothing, scenario.grid, cfg);
    ScenarioRefs refs;
    refs.c_dn = dn.total;
    refs.c_best = cfg.best_fraction * dn.losses_cost;
    refs.c_worst = cfg.blackout_multiplier * cfg.price_mwh * remaining_load_mwh(scenario.chronics, 1, cfg.dt_hours);
    return refs;
}

ScenarioRefs scenario_refs(std::shared_ptr<const Scenario> scenario, const EnvConfig& env_config,
                           const ScoringConfig& cfg) {
    Environment env(scenario, env_config);
    EpisodeReport report;
    report.horizon = env.horizon();
    while (!env.done()) report.steps.push_back(env.step(DoNothing{}).info);
    return scenario_refs_from(report, *scenario, cfg);
}

double normalize_score(double c, const ScenarioRefs& refs) {
    double score = 0.0;
    if (c <= refs.c_dn) {
        const double span = refs.c_dn - refs.c_best;
        if (span > 0.0) {
            score = 100.0 * (refs.c_dn - c) / span;
        } else {
            score = c < refs.c_dn ? 100.0 : 0.0;
        }
    } else {
        const double span = refs.c_worst - refs.c_dn;
        score = span > 0.0 ? -100.0 * (c - refs.c_dn) / span : -100.0;
    }
    return std::clamp(score, -100.0, 100.0);
}

std::vector<LeaderboardRow> leaderboard(const std::vector<ScoreEntry>& entries) {
    std::map<std::string, std::pair<double, int>> acc;
    for (const auto& e : entries) {
        auto& [sum, n] = acc[e.agent];
        sum += e.score;
        ++n;
    }
    std::vector<LeaderboardRow> rows;
    for (const auto& [agent, v] : acc) rows.push_back({agent, v.first / v.second, v.second});
    std::stable_sort(rows.begin(), rows.end(), [](const LeaderboardRow& a, const LeaderboardRow& b) {
        if (a.mean_score != b.mean_score) return a.mean_score > b.mean_score;
        return a.agent < b.agent;
    });
    return rows;
}

}  // namespace gridmdp
