#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "gridmdp/env.hpp"
#include "gridmdp/nn.hpp"

namespace gridmdp {

struct ExpertRulesConfig {
    double safe_max_rho = 0.99;
    double limit_cs_margin = 60.0;  // MW kept free on the dispatchable units
    bool oracle_limit = false;      // leave limiting to the environment (training only)

    void validate() const;
};

// ---------------------------------------------------------------------------
// Policy plumbing: features in, actions out
// ---------------------------------------------------------------------------

/// Rescales the flat observation to O(1) features for the network.
class FeatureScaler {
public:
    FeatureScaler() = default;
    FeatureScaler(const Grid& grid, int cooldown_steps);

    int size() const { return static_cast<int>(scale_.size()); }
    std::vector<double> apply(const std::vector<double>& encoded) const;

private:
    std::vector<double> scale_;
};

/// a in (-1, 1)^n with n = n_renewable + n_storage. Curtailment cap = (a + 1) / 2,
/// storage set point = a * p_max.
int policy_action_size(const Grid& grid);
Composite decode_policy_action(const Eigen::VectorXd& a, const Grid& grid);

/// Fresh actor-critic sized for `grid`.
nn::PolicyNetwork initial_policy(const Grid& grid, int cooldown_steps, const std::vector<int>& hidden,
                                 std::uint64_t seed);

/// Dispatchable compensation an action asks for, from the observation alone.
struct Compensation {
    double demand_mw = 0.0;    // total |change| the dispatchable units must absorb
    double net_mw = 0.0;       // signed: > 0 means more dispatchable output
    double headroom_mw = 0.0;  // ramp headroom in the direction of net_mw
};
Compensation action_compensation(const Action& action, const Observation& obs, const Grid& grid);

/// Shrinks curtailment deltas and storage set points by a common factor so the
/// compensation stays within headroom minus margin. Other actions pass through.
Action limit_action(const Action& action, const Observation& obs, const Grid& grid, double limit_cs_margin);

// ---------------------------------------------------------------------------
// Agents
// ---------------------------------------------------------------------------

class Agent {
public:
    virtual ~Agent() = default;
    virtual std::string name() const = 0;
    virtual Action act(const Observation& obs, const Environment& env) = 0;
};

class DoNothingAgent : public Agent {
public:
    std::string name() const override { return "do-nothing"; }
    Action act(const Observation&, const Environment&) override { return DoNothing{}; }
};

enum class ExpertChoice { Reconnect, DoNothing, Policy };

struct ExpertDecision {
    ExpertChoice choice = ExpertChoice::DoNothing;
    int line = -1;  // for Reconnect
};

/// Rule cascade: reconnect > do nothing while safe > delegate to the policy.
ExpertDecision expert_decision(const Observation& obs, const ExpertRulesConfig& config);

struct PolicyBundle {
    nn::PolicyNetwork network;
    FeatureScaler scaler;
};

/// Expert rules with an optional policy for the delegated case. Without a
/// policy this is the ExpertOnly agent.
class ExpertAgent : public Agent {
public:
    explicit ExpertAgent(ExpertRulesConfig config, std::shared_ptr<const PolicyBundle> policy = nullptr,
                         std::string name = "");

    std::string name() const override { return name_; }
    Action act(const Observation& obs, const Environment& env) override;

    const ExpertRulesConfig& config() const { return config_; }

private:
    ExpertRulesConfig config_;
    std::shared_ptr<const PolicyBundle> policy_;
    std::string name_;
};

/// Directory layout: policy.json (network) + agent.json (rules and decoding).
void save_agent(const std::filesystem::path& dir, const nn::PolicyNetwork& net, const ExpertRulesConfig& rules,
                int cooldown_steps);
std::unique_ptr<ExpertAgent> load_agent(const std::filesystem::path& dir, const Grid& grid,
                                        std::optional<ExpertRulesConfig> override_rules = std::nullopt);

struct MixtureCandidate {
    Action action;
    bool done = false;
    double reward = 0.0;
    double max_rho = 0.0;
};

struct MixtureDecision {
    int chosen = -1;
    std::vector<MixtureCandidate> candidates;
};

/// Index of the best simulated outcome: not done first, then highest reward,
/// then lowest max rho, then lowest candidate index.
int mixture_select(const std::vector<MixtureCandidate>& candidates);

class MixtureAgent : public Agent {
public:
    explicit MixtureAgent(std::vector<std::unique_ptr<Agent>> candidates, std::string name = "mixture");

    std::string name() const override { return name_; }
    Action act(const Observation& obs, const Environment& env) override;

    const MixtureDecision& last_decision() const { return last_; }
    /// Every decision taken so far, in order.
    const std::vector<MixtureDecision>& history() const { return history_; }

private:
    std::vector<std::unique_ptr<Agent>> candidates_;
    std::string name_;
    MixtureDecision last_;
    std::vector<MixtureDecision> history_;
};

// ---------------------------------------------------------------------------
// PPO
// ---------------------------------------------------------------------------

/// A_t = sum_k gamma^k r_{t+k} - V_t over the remaining steps. `bootstrap`
/// stands in for the return after the last step of a truncated rollout.
std::vector<double> compute_advantages(const std::vector<double>& rewards, const std::vector<double>& values,
                                       double gamma, double bootstrap = 0.0);

/// min(A q, A clip(q, 1 - eps, 1 + eps)).
double clipped_objective(double advantage, double ratio, double epsilon);

struct PpoSample {
    std::vector<double> features;
    Eigen::VectorXd pre_tanh;
    double old_log_prob = 0.0;
    double advantage = 0.0;
    double value_target = 0.0;
};

struct PpoLoss {
    double loss = 0.0;              // -objective + value_coef * value_mse
    double policy_objective = 0.0;  // mean clipped surrogate, to maximize
    double value_mse = 0.0;
    double clip_fraction = 0.0;
    std::vector<double> ratios;
    Eigen::VectorXd grad;           // d loss / d params
};

/// OpenMP kernel: fixed-size sample blocks, reduced in block order.
PpoLoss ppo_loss(const nn::PolicyNetwork& net, const std::vector<PpoSample>& batch, double epsilon,
                 double value_coef = 0.5);
/// Same, reusing the buffers of `out`.
void ppo_loss(const nn::PolicyNetwork& net, const std::vector<PpoSample>& batch, double epsilon, double value_coef,
              PpoLoss& out);
/// Serial one-sample-at-a-time reference for the kernel above.
PpoLoss ppo_loss_reference(const nn::PolicyNetwork& net, const std::vector<PpoSample>& batch, double epsilon,
                           double value_coef = 0.5);

struct PpoConfig {
    double gamma = 0.999;
    double clip_epsilon = 0.2;
    int batch_size = 16;
    int env_steps_per_update = 16;
    int epochs = 10;
    double learning_rate = 3e-6;
    double value_coef = 0.5;
    long total_steps = 50000;
    std::vector<int> hidden{300, 300, 300};

    void validate() const;
};

struct TrainingLogEntry {
    int update = 0;
    long env_steps = 0;
    int episodes_finished = 0;
    double mean_survived_steps = 0.0;  // over all finished episodes so far
    int policy_samples = 0;
    double policy_objective = 0.0;     // last minibatch of the update
    double value_mse = 0.0;
    double loss = 0.0;

    friend bool operator==(const TrainingLogEntry&, const TrainingLogEntry&) = default;
};

struct TrainResult {
    nn::PolicyNetwork network;
    std::vector<TrainingLogEntry> log;
};

/// Scenario for the k-th training episode.
using ScenarioFactory = std::function<std::shared_ptr<const Scenario>(int episode)>;

TrainResult train_ppo(const ScenarioFactory& scenarios, const EnvConfig& env_config, const PpoConfig& ppo,
                      const ExpertRulesConfig& rules, std::uint64_t seed);

}  // namespace gridmdp
