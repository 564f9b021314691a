#include "gridmdp/nn.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

namespace gridmdp::nn {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

void check_shape(const MlpShape& shape) {
    if (shape.input <= 0) throw ShapeError("network input size must be positive");
    if (shape.n_action <= 0) throw ShapeError("network action size must be positive");
    if (shape.hidden.empty()) throw ShapeError("network needs at least one hidden layer");
    for (int h : shape.hidden) {
        if (h <= 0) throw ShapeError("hidden layer sizes must be positive");
    }
}

}  // namespace

PolicyNetwork::PolicyNetwork(MlpShape shape) : shape_(std::move(shape)) {
    check_shape(shape_);
    Eigen::Index offset = 0;
    auto take = [&offset](Eigen::Index rows, Eigen::Index cols) {
        Block b{offset, rows, cols};
        offset += rows * cols;
        return b;
    };
    int in = shape_.input;
    for (int h : shape_.hidden) {
        trunk_w_.push_back(take(h, in));
        trunk_b_.push_back(take(h, 1));
        in = h;
    }
    mean_w_ = take(shape_.n_action, in);
    mean_b_ = take(shape_.n_action, 1);
    value_w_ = take(1, in);
    value_b_ = take(1, 1);
    log_std_ = take(shape_.n_action, 1);
    theta_ = Eigen::VectorXd::Zero(offset);
}

std::vector<std::pair<std::string, PolicyNetwork::Block>> PolicyNetwork::blocks() const {
    std::vector<std::pair<std::string, Block>> out;
    for (int i = 0; i < n_trunk_layers(); ++i) {
        out.emplace_back("trunk." + std::to_string(i) + ".weight", trunk_w_[i]);
        out.emplace_back("trunk." + std::to_string(i) + ".bias", trunk_b_[i]);
    }
    out.emplace_back("mean.weight", mean_w_);
    out.emplace_back("mean.bias", mean_b_);
    out.emplace_back("value.weight", value_w_);
    out.emplace_back("value.bias", value_b_);
    out.emplace_back("log_std", log_std_);
    return out;
}

PolicyNetwork PolicyNetwork::initialized(MlpShape shape, std::uint64_t seed) {
    PolicyNetwork net(std::move(shape));
    std::mt19937_64 rng(seed);
    auto glorot = [&rng](MatrixMap w, double scale) {
        const double limit = scale * std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (Eigen::Index c = 0; c < w.cols(); ++c)
            for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = u(rng);
    };
    auto& th = net.theta_;
    for (int i = 0; i < net.n_trunk_layers(); ++i) glorot(net.trunk_weight(th, i), 1.0);
    glorot(net.mean_weight(th), 0.01);
    glorot(net.value_weight(th), 1.0);
    net.log_std(th).setConstant(-0.5);
    return net;
}

ForwardCache forward_batch(const PolicyNetwork& net, const Eigen::MatrixXd& inputs) {
    if (inputs.rows() != net.shape().input) throw ShapeError("observation size does not match the network input");
    ForwardCache cache;
    cache.layers.reserve(net.n_trunk_layers() + 1);
    cache.layers.push_back(inputs);
    for (int i = 0; i < net.n_trunk_layers(); ++i) {
        Eigen::MatrixXd z = net.trunk_weight(i) * cache.layers.back();
        z.colwise() += net.trunk_bias(i);
        cache.layers.push_back(z.array().tanh().matrix());
    }
    const auto& h = cache.layers.back();
    cache.mean = net.mean_weight() * h;
    cache.mean.colwise() += net.mean_bias();
    cache.value = (net.value_weight() * h).row(0).array() + net.value_bias();
    return cache;
}

PolicyOutput forward(const PolicyNetwork& net, std::span<const double> observation) {
    const Eigen::Map<const Eigen::VectorXd> x(observation.data(), static_cast<Eigen::Index>(observation.size()));
    const ForwardCache cache = forward_batch(net, Eigen::MatrixXd(x));
    return {cache.mean.col(0), net.log_std(), cache.value[0]};
}

Eigen::VectorXd backward(const PolicyNetwork& net, const ForwardCache& cache, const Eigen::MatrixXd& d_mean,
                         const Eigen::RowVectorXd& d_value, const Eigen::VectorXd& d_log_std) {
    Eigen::VectorXd grad;
    backward(net, cache, d_mean, d_value, d_log_std, grad);
    return grad;
}

void backward(const PolicyNetwork& net, const ForwardCache& cache, const Eigen::MatrixXd& d_mean,
              const Eigen::RowVectorXd& d_value, const Eigen::VectorXd& d_log_std, Eigen::VectorXd& grad) {
    const Eigen::Index batch = cache.layers.front().cols();
    if (d_mean.rows() != net.shape().n_action || d_mean.cols() != batch || d_value.size() != batch ||
        d_log_std.size() != net.shape().n_action) {
        throw ShapeError("upstream gradient shape does not match the forward pass");
    }
    grad.resize(net.n_params());
    const auto& h_last = cache.layers.back();

    net.mean_weight(grad).noalias() = d_mean * h_last.transpose();
    net.mean_bias(grad) = d_mean.rowwise().sum();
    net.value_weight(grad).noalias() = d_value * h_last.transpose();
    net.value_bias(grad) = d_value.sum();
    net.log_std(grad) = d_log_std;

    Eigen::MatrixXd d_h = net.mean_weight().transpose() * d_mean;
    d_h.noalias() += net.value_weight().transpose() * d_value;
    for (int i = net.n_trunk_layers() - 1; i >= 0; --i) {
        const auto& h = cache.layers[i + 1];
        const Eigen::MatrixXd d_z = (d_h.array() * (1.0 - h.array().square())).matrix();
        net.trunk_weight(grad, i).noalias() = d_z * cache.layers[i].transpose();
        net.trunk_bias(grad, i) = d_z.rowwise().sum();
        if (i > 0) d_h.noalias() = net.trunk_weight(i).transpose() * d_z;
    }
}

double log_one_minus_tanh_sq(double u) {
    // 1 - tanh(u)^2 = 4 / (e^u + e^-u)^2  =>  2 (log 2 - |u| - log1p(e^{-2|u|}))
    const double a = std::abs(u);
    return 2.0 * (std::numbers::ln2 - a - std::log1p(std::exp(-2.0 * a)));
}

double squashed_log_prob(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std, const Eigen::VectorXd& pre_tanh) {
    double lp = 0.0;
    for (Eigen::Index i = 0; i < mean.size(); ++i) {
        const double z = (pre_tanh[i] - mean[i]) * std::exp(-log_std[i]);
        lp += -0.5 * z * z - log_std[i] - kHalfLog2Pi - log_one_minus_tanh_sq(pre_tanh[i]);
    }
    return lp;
}

void squashed_log_prob_grad(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std,
                            const Eigen::VectorXd& pre_tanh, Eigen::Ref<Eigen::VectorXd> d_mean,
                            Eigen::Ref<Eigen::VectorXd> d_log_std) {
    for (Eigen::Index i = 0; i < mean.size(); ++i) {
        const double inv_sigma = std::exp(-log_std[i]);
        const double z = (pre_tanh[i] - mean[i]) * inv_sigma;
        d_mean[i] = z * inv_sigma;
        d_log_std[i] = z * z - 1.0;
    }
}

PolicySample sample_action(const PolicyNetwork& net, std::span<const double> observation, std::mt19937_64& rng) {
    const PolicyOutput out = forward(net, observation);
    std::normal_distribution<double> normal(0.0, 1.0);
    PolicySample s;
    s.pre_tanh.resize(out.mean.size());
    for (Eigen::Index i = 0; i < out.mean.size(); ++i) s.pre_tanh[i] = out.mean[i] + std::exp(out.log_std[i]) * normal(rng);
    s.action = s.pre_tanh.array().tanh().matrix();
    s.log_prob = squashed_log_prob(out.mean, out.log_std, s.pre_tanh);
    s.value = out.value;
    return s;
}

PolicySample deterministic_action(const PolicyNetwork& net, std::span<const double> observation) {
    const PolicyOutput out = forward(net, observation);
    PolicySample s;
    s.pre_tanh = out.mean;
    s.action = out.mean.array().tanh().matrix();
    s.log_prob = squashed_log_prob(out.mean, out.log_std, s.pre_tanh);
    s.value = out.value;
    return s;
}

AdamState AdamState::zeros(Eigen::Index n) { return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0}; }

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state, double lr,
               const AdamConfig& cfg) {
    if (grad.size() != params.size()) throw ShapeError("gradient size does not match the parameters");
    if (state.m.size() != params.size()) state = AdamState::zeros(params.size());
    ++state.step;
    state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
    state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.epsilon);
}

void save_checkpoint(const PolicyNetwork& net, const std::filesystem::path& file) {
    nlohmann::json j;
    j["format"] = "gridmdp-mlp";
    j["version"] = 1;
    j["input"] = net.shape().input;
    j["hidden"] = net.shape().hidden;
    j["n_action"] = net.shape().n_action;
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& [name, b] : net.blocks()) {
        std::vector<double> data(net.theta().data() + b.offset, net.theta().data() + b.offset + b.rows * b.cols);
        tensors.push_back({{"name", name}, {"shape", {b.rows, b.cols}}, {"data", data}});
    }
    j["tensors"] = std::move(tensors);
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    std::ofstream out(file);
    if (!out) throw std::runtime_error("cannot write checkpoint " + file.string());
    // nlohmann prints doubles with max_digits10, so values round-trip exactly.
    out << j.dump() << '\n';
}

PolicyNetwork load_checkpoint(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open checkpoint " + file.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ShapeError("checkpoint " + file.string() + " is not valid JSON: " + e.what());
    }
    if (j.value("format", "") != "gridmdp-mlp") throw ShapeError("not a network checkpoint: " + file.string());
    MlpShape shape;
    try {
        shape.input = j.at("input").get<int>();
        shape.hidden = j.at("hidden").get<std::vector<int>>();
        shape.n_action = j.at("n_action").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ShapeError(std::string("checkpoint shape: ") + e.what());
    }
    PolicyNetwork net(shape);
    const auto blocks = net.blocks();
    const auto& tensors = j.at("tensors");
    if (tensors.size() != blocks.size()) throw ShapeError("checkpoint has the wrong number of tensors");
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto& [name, b] = blocks[i];
        const auto& t = tensors[i];
        if (t.at("name").get<std::string>() != name) throw ShapeError("checkpoint tensor order mismatch at " + name);
        const auto data = t.at("data").get<std::vector<double>>();
        const auto dims = t.at("shape").get<std::vector<Eigen::Index>>();
        if (dims.size() != 2 || dims[0] != b.rows || dims[1] != b.cols ||
            static_cast<Eigen::Index>(data.size()) != b.rows * b.cols) {
            throw ShapeError("checkpoint tensor " + name + " has the wrong shape");
        }
        std::copy(data.begin(), data.end(), net.theta().data() + b.offset);
    }
    return net;
}

}  // namespace gridmdp::nn
