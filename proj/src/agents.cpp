#include "gridmdp/agents.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace gridmdp {

using json = nlohmann::json;

void ExpertRulesConfig::validate() const {
    if (!(safe_max_rho > 0.0 && safe_max_rho <= 2.0)) throw std::invalid_argument("safe_max_rho must be in (0, 2]");
    if (!(limit_cs_margin >= 0.0)) throw std::invalid_argument("limit_cs_margin must be >= 0");
}

FeatureScaler::FeatureScaler(const Grid& grid, int cooldown_steps) {
    const auto layout = ObservationLayout::of(grid);
    scale_.assign(static_cast<std::size_t>(layout.size), 1.0);
    const double cd = std::max(1, cooldown_steps);
    double total_capacity = 0.0, ramp = 0.0;
    for (const auto& g : grid.generators()) total_capacity += g.p_max;
    for (int gi : grid.dispatchable_generators()) ramp += grid.generators()[gi].ramp_mw_per_step;
    const double load_scale = std::max(1.0, total_capacity / std::max(1, grid.n_loads()));

    for (int g = 0; g < grid.n_generators(); ++g) scale_[layout.gen_p + g] = std::max(1.0, grid.generators()[g].p_max);
    const auto& ren = grid.renewable_generators();
    for (int r = 0; r < grid.n_renewables(); ++r)
        scale_[layout.renewable_potential + r] = std::max(1.0, grid.generators()[ren[r]].p_max);
    for (int d = 0; d < grid.n_loads(); ++d) scale_[layout.load_p + d] = load_scale;
    for (int l = 0; l < grid.n_lines(); ++l) {
        scale_[layout.line_p + l] = grid.lines()[l].thermal_limit_mw;
        scale_[layout.line_cooldown + l] = cd;
    }
    for (int s = 0; s < grid.n_storages(); ++s) {
        scale_[layout.storage_energy + s] = grid.storages()[s].e_max_mwh;
        scale_[layout.storage_power + s] = grid.storages()[s].p_max_mw;
    }
    scale_[layout.redispatch] = scale_[layout.redispatch + 1] = std::max(1.0, ramp);
}

std::vector<double> FeatureScaler::apply(const std::vector<double>& encoded) const {
    if (encoded.size() != scale_.size()) throw nn::ShapeError("observation size does not match the feature scaler");
    std::vector<double> out(encoded.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = encoded[i] / scale_[i];
    return out;
}

int policy_action_size(const Grid& grid) { return grid.n_renewables() + grid.n_storages(); }

Composite decode_policy_action(const Eigen::VectorXd& a, const Grid& grid) {
    if (a.size() != policy_action_size(grid)) throw nn::ShapeError("policy action has the wrong size");
    Composite c;
    const int n_ren = grid.n_renewables();
    c.curtail.caps.resize(static_cast<std::size_t>(n_ren));
    for (int r = 0; r < n_ren; ++r) c.curtail.caps[r] = std::clamp((a[r] + 1.0) / 2.0, 0.0, 1.0);
    c.storage.power_mw.resize(static_cast<std::size_t>(grid.n_storages()));
    for (int s = 0; s < grid.n_storages(); ++s) {
        const double pmax = grid.storages()[s].p_max_mw;
        c.storage.power_mw[s] = std::clamp(a[n_ren + s] * pmax, -pmax, pmax);
    }
    return c;
}

nn::PolicyNetwork initial_policy(const Grid& grid, int cooldown_steps, const std::vector<int>& hidden,
                                 std::uint64_t seed) {
    const FeatureScaler scaler(grid, cooldown_steps);
    return nn::PolicyNetwork::initialized({scaler.size(), hidden, policy_action_size(grid)}, seed);
}

namespace {

struct ContinuousParts {
    const std::vector<double>* caps = nullptr;
    const std::vector<double>* storage = nullptr;
};

ContinuousParts continuous_parts(const Action& action) {
    ContinuousParts p;
    if (const auto* c = std::get_if<Curtail>(&action)) p.caps = &c->caps;
    if (const auto* s = std::get_if<SetStorage>(&action)) p.storage = &s->power_mw;
    if (const auto* m = std::get_if<Composite>(&action)) {
        p.caps = &m->curtail.caps;
        p.storage = &m->storage.power_mw;
    }
    return p;
}

}  // namespace

Compensation action_compensation(const Action& action, const Observation& obs, const Grid& grid) {
    Compensation c;
    const auto parts = continuous_parts(action);
    const auto& ren = grid.renewable_generators();
    if (parts.caps && static_cast<int>(parts.caps->size()) == grid.n_renewables()) {
        for (int r = 0; r < grid.n_renewables(); ++r) {
            const double pmax = grid.generators()[ren[r]].p_max;
            const double potential = obs.renewable_potential[r];
            const double before = std::min(potential, obs.curtail_caps[r] * pmax);
            const double after = std::min(potential, (*parts.caps)[r] * pmax);
            c.net_mw += before - after;
            c.demand_mw += std::abs(before - after);
        }
    }
    if (parts.storage) {
        for (double p : *parts.storage) {
            c.net_mw += p;
            c.demand_mw += std::abs(p);
        }
    }
    c.headroom_mw = c.net_mw >= 0.0 ? obs.redispatch_up_mw : obs.redispatch_down_mw;
    return c;
}

Action limit_action(const Action& action, const Observation& obs, const Grid& grid, double limit_cs_margin) {
    const auto parts = continuous_parts(action);
    if (!parts.caps && !parts.storage) return action;
    const Compensation comp = action_compensation(action, obs, grid);
    const double allowed = std::max(0.0, comp.headroom_mw - limit_cs_margin);
    if (comp.demand_mw <= allowed) return action;
    const double f = allowed / comp.demand_mw;
    if (f <= 0.0) return DoNothing{};

    Action out = action;
    auto scale_caps = [&](std::vector<double>& caps) {
        for (std::size_t r = 0; r < caps.size(); ++r) caps[r] = obs.curtail_caps[r] + f * (caps[r] - obs.curtail_caps[r]);
    };
    auto scale_storage = [&](std::vector<double>& p) {
        for (double& x : p) x *= f;
    };
    if (auto* c = std::get_if<Curtail>(&out)) scale_caps(c->caps);
    if (auto* s = std::get_if<SetStorage>(&out)) scale_storage(s->power_mw);
    if (auto* m = std::get_if<Composite>(&out)) {
        scale_caps(m->curtail.caps);
        scale_storage(m->storage.power_mw);
    }
    return out;
}

ExpertDecision expert_decision(const Observation& obs, const ExpertRulesConfig& config) {
    for (std::size_t l = 0; l < obs.line_status.size(); ++l) {
        if (!obs.line_status[l] && obs.line_cooldown[l] == 0 && !obs.line_in_maintenance[l])
            return {ExpertChoice::Reconnect, static_cast<int>(l)};
    }
    if (obs.max_rho() < config.safe_max_rho) return {ExpertChoice::DoNothing, -1};
    return {ExpertChoice::Policy, -1};
}

ExpertAgent::ExpertAgent(ExpertRulesConfig config, std::shared_ptr<const PolicyBundle> policy, std::string name)
    : config_(config), policy_(std::move(policy)), name_(std::move(name)) {
    config_.validate();
    if (name_.empty()) name_ = policy_ ? "expert+policy" : "expert";
}

Action ExpertAgent::act(const Observation& obs, const Environment& env) {
    const ExpertDecision d = expert_decision(obs, config_);
    switch (d.choice) {
        case ExpertChoice::Reconnect: return SetLineStatus{d.line, true};
        case ExpertChoice::DoNothing: return DoNothing{};
        case ExpertChoice::Policy: break;
    }
    if (!policy_) return DoNothing{};
    const auto features = policy_->scaler.apply(encode_observation(env.grid(), obs));
    const nn::PolicySample s = nn::deterministic_action(policy_->network, features);
    const Action raw = decode_policy_action(s.action, env.grid());
    if (config_.oracle_limit) return raw;
    return limit_action(raw, obs, env.grid(), config_.limit_cs_margin);
}

void save_agent(const std::filesystem::path& dir, const nn::PolicyNetwork& net, const ExpertRulesConfig& rules,
                int cooldown_steps) {
    std::filesystem::create_directories(dir);
    nn::save_checkpoint(net, dir / "policy.json");
    json j;
    j["safe_max_rho"] = rules.safe_max_rho;
    if (rules.oracle_limit) {
        j["limit_cs_margin"] = "oracle";
    } else {
        j["limit_cs_margin"] = rules.limit_cs_margin;
    }
    j["cooldown_steps"] = cooldown_steps;
    j["action_decoding"] = {{"curtail", "cap = (a + 1) / 2"}, {"storage", "p = a * p_max"},
                            {"order", "renewables then storages"}};
    std::ofstream out(dir / "agent.json");
    if (!out) throw std::runtime_error("cannot write " + (dir / "agent.json").string());
    out << j.dump(2) << '\n';
}

std::unique_ptr<ExpertAgent> load_agent(const std::filesystem::path& dir, const Grid& grid,
                                        std::optional<ExpertRulesConfig> override_rules) {
    std::ifstream in(dir / "agent.json");
    if (!in) throw std::runtime_error("cannot open " + (dir / "agent.json").string());
    const json j = json::parse(in);
    ExpertRulesConfig rules;
    rules.safe_max_rho = j.value("safe_max_rho", rules.safe_max_rho);
    if (j.contains("limit_cs_margin")) {
        if (j["limit_cs_margin"].is_string()) {
            if (j["limit_cs_margin"].get<std::string>() != "oracle")
                throw std::invalid_argument("limit_cs_margin must be a number or \"oracle\"");
            rules.oracle_limit = true;
        } else {
            rules.limit_cs_margin = j["limit_cs_margin"].get<double>();
        }
    }
    if (override_rules) rules = *override_rules;
    auto bundle = std::make_shared<PolicyBundle>();
    bundle->network = nn::load_checkpoint(dir / "policy.json");
    bundle->scaler = FeatureScaler(grid, j.value("cooldown_steps", 3));
    if (bundle->network.shape().input != bundle->scaler.size() ||
        bundle->network.shape().n_action != policy_action_size(grid)) {
        throw nn::ShapeError("agent in " + dir.string() + " was trained for a different grid");
    }
    return std::make_unique<ExpertAgent>(rules, std::move(bundle), "ppo:" + dir.filename().string());
}

int mixture_select(const std::vector<MixtureCandidate>& candidates) {
    int best = -1;
    for (int i = 0; i < static_cast<int>(candidates.size()); ++i) {
        if (best < 0) {
            best = i;
            continue;
        }
        const auto& a = candidates[i];
        const auto& b = candidates[best];
        if (a.done != b.done) {
            if (!a.done) best = i;
        } else if (a.reward != b.reward) {
            if (a.reward > b.reward) best = i;
        } else if (a.max_rho < b.max_rho) {
            best = i;
        }
    }
    return best;
}

MixtureAgent::MixtureAgent(std::vector<std::unique_ptr<Agent>> candidates, std::string name)
    : candidates_(std::move(candidates)), name_(std::move(name)) {
    if (candidates_.empty()) throw std::invalid_argument("mixture needs at least one candidate agent");
}

Action MixtureAgent::act(const Observation& obs, const Environment& env) {
    MixtureDecision d;
    for (auto& agent : candidates_) {
        MixtureCandidate c;
        c.action = agent->act(obs, env);
        const StepResult r = env.simulate(c.action);
        c.done = r.done;
        c.reward = r.reward;
        c.max_rho = r.observation.max_rho();
        d.candidates.push_back(std::move(c));
    }
    d.chosen = mixture_select(d.candidates);
    last_ = d;
    history_.push_back(std::move(d));
    return last_.candidates[last_.chosen].action;
}

}  // namespace gridmdp
