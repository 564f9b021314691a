#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "gridmdp/agents.hpp"

namespace gridmdp {

std::vector<double> compute_advantages(const std::vector<double>& rewards, const std::vector<double>& values,
                                       double gamma, double bootstrap) {
    if (rewards.size() != values.size()) throw std::invalid_argument("rewards and values must align");
    std::vector<double> adv(rewards.size());
    double ret = bootstrap;
    for (std::size_t i = rewards.size(); i-- > 0;) {
        ret = rewards[i] + gamma * ret;
        adv[i] = ret - values[i];
    }
    return adv;
}

double clipped_objective(double advantage, double ratio, double epsilon) {
    return std::min(advantage * ratio, advantage * std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon));
}

void PpoConfig::validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in [0, 1]");
    if (!(clip_epsilon > 0.0)) throw std::invalid_argument("clip epsilon must be positive");
    if (batch_size < 1 || env_steps_per_update < 1 || epochs < 0) throw std::invalid_argument("bad PPO batch settings");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
    if (total_steps < 0) throw std::invalid_argument("total_steps must be >= 0");
}

namespace {

constexpr int kBlock = 8;

struct BlockResult {
    Eigen::VectorXd grad;
    std::vector<double> objective, value_sq, ratio;
    std::vector<char> clipped;
};

/// Loss terms and gradient for samples [begin, end), already divided by the
/// full batch size. `out` keeps its buffers between calls.
void block_terms(const nn::PolicyNetwork& net, const std::vector<PpoSample>& batch, std::size_t begin,
                 std::size_t end, double epsilon, double value_coef, BlockResult& out) {
    const auto n = static_cast<Eigen::Index>(end - begin);
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const int n_in = net.shape().input;
    const int n_act = net.shape().n_action;

    Eigen::MatrixXd x(n_in, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto& f = batch[begin + j].features;
        if (static_cast<int>(f.size()) != n_in) throw nn::ShapeError("sample features do not match the network");
        x.col(j) = Eigen::Map<const Eigen::VectorXd>(f.data(), n_in);
    }
    const nn::ForwardCache cache = nn::forward_batch(net, x);
    const Eigen::VectorXd log_std = net.log_std();

    out.objective.clear();
    out.value_sq.clear();
    out.ratio.clear();
    out.clipped.clear();
    Eigen::MatrixXd d_mean(n_act, n);
    Eigen::RowVectorXd d_value(n);
    Eigen::VectorXd d_log_std = Eigen::VectorXd::Zero(n_act);
    Eigen::VectorXd gm(n_act), gs(n_act);
    for (Eigen::Index j = 0; j < n; ++j) {
        const PpoSample& s = batch[begin + j];
        const Eigen::VectorXd mean = cache.mean.col(j);
        const double logp = nn::squashed_log_prob(mean, log_std, s.pre_tanh);
        const double q = std::exp(logp - s.old_log_prob);
        const double unclipped = s.advantage * q;
        const double clipped = s.advantage * std::clamp(q, 1.0 - epsilon, 1.0 + epsilon);
        // Gradient flows through the ratio only when the unclipped term is the minimum.
        const double coef = unclipped <= clipped ? unclipped : 0.0;
        nn::squashed_log_prob_grad(mean, log_std, s.pre_tanh, gm, gs);
        d_mean.col(j) = -inv_b * coef * gm;
        d_log_std += -inv_b * coef * gs;
        const double err = cache.value[j] - s.value_target;
        d_value[j] = value_coef * 2.0 * err * inv_b;
        out.objective.push_back(std::min(unclipped, clipped));
        out.value_sq.push_back(err * err);
        out.ratio.push_back(q);
        out.clipped.push_back(unclipped > clipped ? 1 : 0);
    }
    nn::backward(net, cache, d_mean, d_value, d_log_std, out.grad);
}

void assemble(const nn::PolicyNetwork& net, const std::vector<BlockResult>& blocks, std::size_t n_blocks,
              std::size_t batch_size, double value_coef, PpoLoss& r) {
    r.grad.resize(net.n_params());
    r.grad.setZero();
    r.ratios.clear();
    double obj = 0.0, vsq = 0.0;
    int n_clipped = 0;
    for (std::size_t k = 0; k < n_blocks; ++k) {
        const auto& b = blocks[k];
        r.grad += b.grad;
        for (std::size_t j = 0; j < b.objective.size(); ++j) {
            obj += b.objective[j];
            vsq += b.value_sq[j];
            n_clipped += b.clipped[j];
            r.ratios.push_back(b.ratio[j]);
        }
    }
    const double inv_b = 1.0 / static_cast<double>(batch_size);
    r.policy_objective = obj * inv_b;
    r.value_mse = vsq * inv_b;
    r.loss = -r.policy_objective + value_coef * r.value_mse;
    r.clip_fraction = n_clipped * inv_b;
}

// Gradient buffers are large; keep them per calling thread instead of
// reallocating on every minibatch.
thread_local std::vector<BlockResult> tl_blocks;

}  // namespace

void ppo_loss(const nn::PolicyNetwork& net, const std::vector<PpoSample>& batch, double epsilon, double value_coef,
              PpoLoss& out) {
    if (batch.empty()) throw std::invalid_argument("empty PPO batch");
    const auto n_blocks = static_cast<long>((batch.size() + kBlock - 1) / kBlock);
    auto& blocks = tl_blocks;
    if (blocks.size() < static_cast<std::size_t>(n_blocks)) blocks.resize(static_cast<std::size_t>(n_blocks));
#pragma omp parallel for schedule(static)
    for (long k = 0; k < n_blocks; ++k) {
        const std::size_t begin = static_cast<std::size_t>(k) * kBlock;
        const std::size_t end = std::min(batch.size(), begin + kBlock);
        block_terms(net, batch, begin, end, epsilon, value_coef, blocks[k]);
    }
    assemble(net, blocks, static_cast<std::size_t>(n_blocks), batch.size(), value_coef, out);
}

PpoLoss ppo_loss(const nn::PolicyNetwork& net, const std::vector<PpoSample>& batch, double epsilon,
                 double value_coef) {
    PpoLoss out;
    ppo_loss(net, batch, epsilon, value_coef, out);
    return out;
}

PpoLoss ppo_loss_reference(const nn::PolicyNetwork& net, const std::vector<PpoSample>& batch, double epsilon,
                           double value_coef) {
    if (batch.empty()) throw std::invalid_argument("empty PPO batch");
    std::vector<BlockResult> blocks(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) block_terms(net, batch, i, i + 1, epsilon, value_coef, blocks[i]);
    PpoLoss out;
    assemble(net, blocks, blocks.size(), batch.size(), value_coef, out);
    return out;
}

TrainResult train_ppo(const ScenarioFactory& scenarios, const EnvConfig& env_config, const PpoConfig& ppo,
                      const ExpertRulesConfig& rules, std::uint64_t seed) {
    ppo.validate();
    rules.validate();
    EnvConfig cfg = env_config;
    cfg.oracle_action_limit = rules.oracle_limit;

    int episode = 0;
    auto env = std::make_unique<Environment>(scenarios(episode), cfg);
    const Grid& grid0 = env->grid();
    const FeatureScaler scaler(grid0, cfg.cooldown_steps);
    TrainResult result{initial_policy(grid0, cfg.cooldown_steps, ppo.hidden, seed), {}};
    if (ppo.total_steps == 0) return result;
    nn::PolicyNetwork& net = result.network;

    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    nn::AdamState adam = nn::AdamState::zeros(net.n_params());
    Observation obs = env->observe();
    PpoLoss loss;
    std::vector<PpoSample> mb;
    long steps = 0;
    int finished = 0;
    double survived_total = 0.0;

    for (int update = 0; steps < ppo.total_steps; ++update) {
        const long n = std::min<long>(ppo.env_steps_per_update, ppo.total_steps - steps);
        std::vector<double> rewards, values;
        std::vector<char> dones;
        std::vector<PpoSample> samples;
        std::vector<std::size_t> sample_step;
        double tail_value = 0.0;

        for (long i = 0; i < n; ++i) {
            const auto features = scaler.apply(encode_observation(env->grid(), obs));
            const ExpertDecision d = expert_decision(obs, rules);
            Action action = DoNothing{};
            double value = 0.0;
            if (d.choice == ExpertChoice::Policy) {
                nn::PolicySample s = nn::sample_action(net, features, rng);
                value = s.value;
                action = decode_policy_action(s.action, env->grid());
                if (!rules.oracle_limit) action = limit_action(action, obs, env->grid(), rules.limit_cs_margin);
                sample_step.push_back(rewards.size());
                samples.push_back({features, std::move(s.pre_tanh), s.log_prob, 0.0, 0.0});
            } else {
                if (d.choice == ExpertChoice::Reconnect) action = SetLineStatus{d.line, true};
                value = nn::forward(net, features).value;
            }
            const StepResult r = env->step(action);
            ++steps;
            rewards.push_back(r.reward);
            values.push_back(value);
            dones.push_back(r.done ? 1 : 0);
            if (r.done) {
                ++finished;
                survived_total += survived_steps(env->state());
                env = std::make_unique<Environment>(scenarios(++episode), cfg);
                obs = env->observe();
            } else {
                obs = r.observation;
            }
        }
        if (!dones.back()) tail_value = nn::forward(net, scaler.apply(encode_observation(env->grid(), obs))).value;

        // Advantages per episode piece inside the rollout.
        std::vector<double> adv(rewards.size());
        std::size_t start = 0;
        for (std::size_t i = 0; i < rewards.size(); ++i) {
            const bool last = i + 1 == rewards.size();
            if (!dones[i] && !last) continue;
            const std::vector<double> r(rewards.begin() + start, rewards.begin() + i + 1);
            const std::vector<double> v(values.begin() + start, values.begin() + i + 1);
            const auto a = compute_advantages(r, v, ppo.gamma, dones[i] ? 0.0 : tail_value);
            std::copy(a.begin(), a.end(), adv.begin() + start);
            start = i + 1;
        }
        for (std::size_t k = 0; k < samples.size(); ++k) {
            samples[k].advantage = adv[sample_step[k]];
            samples[k].value_target = adv[sample_step[k]] + values[sample_step[k]];
        }

        TrainingLogEntry entry;
        entry.update = update;
        entry.env_steps = steps;
        entry.episodes_finished = finished;
        entry.mean_survived_steps = finished > 0 ? survived_total / finished : 0.0;
        entry.policy_samples = static_cast<int>(samples.size());
        if (!samples.empty()) {
            std::vector<std::size_t> order(samples.size());
            std::iota(order.begin(), order.end(), 0);
            for (int epoch = 0; epoch < ppo.epochs; ++epoch) {
                std::shuffle(order.begin(), order.end(), rng);
                for (std::size_t b = 0; b < order.size(); b += ppo.batch_size) {
                    mb.clear();
                    for (std::size_t k = b; k < std::min(order.size(), b + ppo.batch_size); ++k)
                        mb.push_back(samples[order[k]]);
                    ppo_loss(net, mb, ppo.clip_epsilon, ppo.value_coef, loss);
                    nn::adam_step(net.theta(), loss.grad, adam, ppo.learning_rate);
                    entry.policy_objective = loss.policy_objective;
                    entry.value_mse = loss.value_mse;
                    entry.loss = loss.loss;
                }
            }
        }
        result.log.push_back(entry);
    }
    return result;
}

}  // namespace gridmdp
