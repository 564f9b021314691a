#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace gridmdp::nn {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct MlpShape {
    int input = 0;
    std::vector<int> hidden{300, 300, 300};
    int n_action = 0;

    friend bool operator==(const MlpShape&, const MlpShape&) = default;
};

/// Actor-critic MLP: a shared tanh trunk feeding a linear policy-mean head and
/// a linear value head, plus a state-independent log-std vector. All
/// parameters live in one flat vector so optimisers and gradient checks can
/// treat them uniformly.
class PolicyNetwork {
public:
    using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXd>;
    using MatrixMap = Eigen::Map<Eigen::MatrixXd>;
    using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;
    using VectorMap = Eigen::Map<Eigen::VectorXd>;

    PolicyNetwork() = default;
    explicit PolicyNetwork(MlpShape shape);  // all parameters zero

    /// Glorot-uniform trunk and value head, mean head scaled by 0.01, biases 0,
    /// log-std = -0.5.
    static PolicyNetwork initialized(MlpShape shape, std::uint64_t seed);

    const MlpShape& shape() const { return shape_; }
    int n_trunk_layers() const { return static_cast<int>(shape_.hidden.size()); }
    Eigen::Index n_params() const { return theta_.size(); }

    Eigen::VectorXd& theta() { return theta_; }
    const Eigen::VectorXd& theta() const { return theta_; }

    // Views into `theta` (or any vector with the same layout, e.g. gradients).
    ConstMatrixMap trunk_weight(int layer) const { return cmat(theta_, trunk_w_[layer]); }
    ConstVectorMap trunk_bias(int layer) const { return cvec(theta_, trunk_b_[layer]); }
    ConstMatrixMap mean_weight() const { return cmat(theta_, mean_w_); }
    ConstVectorMap mean_bias() const { return cvec(theta_, mean_b_); }
    ConstMatrixMap value_weight() const { return cmat(theta_, value_w_); }
    double value_bias() const { return theta_[value_b_.offset]; }
    ConstVectorMap log_std() const { return cvec(theta_, log_std_); }

    MatrixMap trunk_weight(Eigen::VectorXd& v, int layer) const { return mat(v, trunk_w_[layer]); }
    VectorMap trunk_bias(Eigen::VectorXd& v, int layer) const { return vec(v, trunk_b_[layer]); }
    MatrixMap mean_weight(Eigen::VectorXd& v) const { return mat(v, mean_w_); }
    VectorMap mean_bias(Eigen::VectorXd& v) const { return vec(v, mean_b_); }
    MatrixMap value_weight(Eigen::VectorXd& v) const { return mat(v, value_w_); }
    double& value_bias(Eigen::VectorXd& v) const { return v[value_b_.offset]; }
    VectorMap log_std(Eigen::VectorXd& v) const { return vec(v, log_std_); }

    struct Block {
        Eigen::Index offset = 0;
        Eigen::Index rows = 0;
        Eigen::Index cols = 1;
    };
    /// Named parameter blocks in storage order (used by checkpoints).
    std::vector<std::pair<std::string, Block>> blocks() const;

private:
    static ConstMatrixMap cmat(const Eigen::VectorXd& v, Block b) { return {v.data() + b.offset, b.rows, b.cols}; }
    static ConstVectorMap cvec(const Eigen::VectorXd& v, Block b) { return {v.data() + b.offset, b.rows}; }
    static MatrixMap mat(Eigen::VectorXd& v, Block b) { return {v.data() + b.offset, b.rows, b.cols}; }
    static VectorMap vec(Eigen::VectorXd& v, Block b) { return {v.data() + b.offset, b.rows}; }

    MlpShape shape_;
    Eigen::VectorXd theta_;
    std::vector<Block> trunk_w_, trunk_b_;
    Block mean_w_, mean_b_, value_w_, value_b_, log_std_;
};

struct PolicyOutput {
    Eigen::VectorXd mean;
    Eigen::VectorXd log_std;
    double value = 0.0;
};

/// Activations of a batch pass; columns are samples.
struct ForwardCache {
    std::vector<Eigen::MatrixXd> layers;  // layers[0] = input, layers[i] = tanh output of trunk layer i
    Eigen::MatrixXd mean;
    Eigen::RowVectorXd value;
};

PolicyOutput forward(const PolicyNetwork& net, std::span<const double> observation);
ForwardCache forward_batch(const PolicyNetwork& net, const Eigen::MatrixXd& inputs);

/// Reverse pass: gradient of a scalar loss with respect to every parameter,
/// given the loss's partial derivatives with respect to the network outputs.
Eigen::VectorXd backward(const PolicyNetwork& net, const ForwardCache& cache, const Eigen::MatrixXd& d_mean,
                         const Eigen::RowVectorXd& d_value, const Eigen::VectorXd& d_log_std);
/// Same, writing into `grad` (resized when needed, every entry overwritten).
void backward(const PolicyNetwork& net, const ForwardCache& cache, const Eigen::MatrixXd& d_mean,
              const Eigen::RowVectorXd& d_value, const Eigen::VectorXd& d_log_std, Eigen::VectorXd& grad);

// ---------------------------------------------------------------------------
// tanh-squashed diagonal Gaussian
// ---------------------------------------------------------------------------

/// log(1 - tanh(u)^2), stable for large |u|.
double log_one_minus_tanh_sq(double u);

/// Log-density of a = tanh(u) where u ~ N(mean, exp(log_std)^2), including
/// the change-of-variables term.
double squashed_log_prob(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std, const Eigen::VectorXd& pre_tanh);

/// d log_prob / d mean and d log_prob / d log_std (the squash term does not
/// depend on either).
void squashed_log_prob_grad(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std,
                            const Eigen::VectorXd& pre_tanh, Eigen::Ref<Eigen::VectorXd> d_mean,
                            Eigen::Ref<Eigen::VectorXd> d_log_std);

struct PolicySample {
    Eigen::VectorXd action;    // tanh(pre_tanh), strictly inside (-1, 1)
    Eigen::VectorXd pre_tanh;
    double log_prob = 0.0;
    double value = 0.0;
};

PolicySample sample_action(const PolicyNetwork& net, std::span<const double> observation, std::mt19937_64& rng);
/// tanh(mean): the mode of the squashed policy, used at evaluation time.
PolicySample deterministic_action(const PolicyNetwork& net, std::span<const double> observation);

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    long step = 0;

    static AdamState zeros(Eigen::Index n);
};

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state, double lr,
               const AdamConfig& config = {});

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(const PolicyNetwork& net, const std::filesystem::path& file);
PolicyNetwork load_checkpoint(const std::filesystem::path& file);

}  // namespace gridmdp::nn
