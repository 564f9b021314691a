#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gridmdp/nn.hpp"

using namespace gridmdp::nn;

namespace {

MlpShape small_shape() { return {5, {7, 6}, 3}; }

/// Plain loops over the parameter views: W h + b, tanh on the trunk.
PolicyOutput loop_forward(const PolicyNetwork& net, const std::vector<double>& x) {
    std::vector<double> h = x;
    for (int layer = 0; layer < net.n_trunk_layers(); ++layer) {
        const auto w = net.trunk_weight(layer);
        const auto b = net.trunk_bias(layer);
        std::vector<double> next(static_cast<std::size_t>(w.rows()));
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            double s = b[i];
            for (Eigen::Index j = 0; j < w.cols(); ++j) s += w(i, j) * h[j];
            next[i] = std::tanh(s);
        }
        h = next;
    }
    PolicyOutput out;
    const auto mw = net.mean_weight();
    out.mean.resize(mw.rows());
    for (Eigen::Index i = 0; i < mw.rows(); ++i) {
        double s = net.mean_bias()[i];
        for (Eigen::Index j = 0; j < mw.cols(); ++j) s += mw(i, j) * h[j];
        out.mean[i] = s;
    }
    out.value = net.value_bias();
    for (Eigen::Index j = 0; j < net.value_weight().cols(); ++j) out.value += net.value_weight()(0, j) * h[j];
    out.log_std = net.log_std();
    return out;
}

std::vector<double> random_input(std::mt19937_64& rng, int n) {
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<double> x(n);
    for (auto& v : x) v = z(rng);
    return x;
}

/// Scalar test loss of the outputs over a batch.
struct ToyLoss {
    Eigen::MatrixXd c_mean;
    Eigen::RowVectorXd c_value;
    Eigen::VectorXd c_std;

    double operator()(const PolicyNetwork& net, const Eigen::MatrixXd& x) const {
        const ForwardCache f = forward_batch(net, x);
        return (f.mean.array() * f.mean.array() * c_mean.array()).sum() + (f.value.array() * c_value.array()).sum() +
               (net.log_std().array() * c_std.array()).sum();
    }
    Eigen::VectorXd grad(const PolicyNetwork& net, const Eigen::MatrixXd& x) const {
        const ForwardCache f = forward_batch(net, x);
        const Eigen::MatrixXd d_mean = 2.0 * (f.mean.array() * c_mean.array()).matrix();
        return backward(net, f, d_mean, c_value, c_std);
    }
};

}  // namespace

TEST(Network, ZeroWeightsGiveZeroOutputs) {
    const PolicyNetwork net(small_shape());
    const std::vector<double> x{1, 2, 3, 4, 5};
    const PolicyOutput o = forward(net, x);
    EXPECT_EQ(o.mean, Eigen::VectorXd::Zero(3));
    EXPECT_EQ(o.value, 0.0);
    EXPECT_EQ(net.n_params(), (5 * 7 + 7) + (7 * 6 + 6) + (6 * 3 + 3) + (6 + 1) + 3);
}

TEST(Network, ForwardMatchesLoops) {
    std::mt19937_64 rng(1);
    const PolicyNetwork net = PolicyNetwork::initialized(small_shape(), 9);
    for (int trial = 0; trial < 20; ++trial) {
        const auto x = random_input(rng, 5);
        const PolicyOutput a = forward(net, x), b = loop_forward(net, x);
        for (int i = 0; i < 3; ++i) EXPECT_NEAR(a.mean[i], b.mean[i], 1e-12);
        EXPECT_NEAR(a.value, b.value, 1e-12);
        EXPECT_EQ(a.log_std, b.log_std);
    }
}

TEST(Network, InitializationIsSeeded) {
    const PolicyNetwork a = PolicyNetwork::initialized(small_shape(), 3);
    const PolicyNetwork b = PolicyNetwork::initialized(small_shape(), 3);
    const PolicyNetwork c = PolicyNetwork::initialized(small_shape(), 4);
    EXPECT_EQ(a.theta(), b.theta());
    EXPECT_NE(a.theta(), c.theta());
    EXPECT_TRUE((a.log_std().array() == -0.5).all());
    EXPECT_TRUE((a.mean_bias().array() == 0.0).all());
}

TEST(Network, BackwardMatchesFiniteDifferences) {
    std::mt19937_64 rng(2);
    PolicyNetwork net = PolicyNetwork::initialized(small_shape(), 5);
    net.theta() += 0.3 * Eigen::VectorXd::Random(net.n_params());
    Eigen::MatrixXd x(5, 4);
    for (int c = 0; c < 4; ++c) x.col(c) = Eigen::Map<const Eigen::VectorXd>(random_input(rng, 5).data(), 5);
    const ToyLoss loss{Eigen::MatrixXd::Random(3, 4), Eigen::RowVectorXd::Random(4), Eigen::VectorXd::Random(3)};
    const Eigen::VectorXd g = loss.grad(net, x);
    ASSERT_EQ(g.size(), net.n_params());
    const double h = 1e-6;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < net.n_params(); ++i) {
        PolicyNetwork p = net, m = net;
        p.theta()[i] += h;
        m.theta()[i] -= h;
        const double fd = (loss(p, x) - loss(m, x)) / (2 * h);
        worst = std::max(worst, std::abs(fd - g[i]) / std::max(1.0, std::abs(fd)));
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(Network, ConstantLossHasZeroGradient) {
    const PolicyNetwork net = PolicyNetwork::initialized(small_shape(), 5);
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 3);
    const ForwardCache f = forward_batch(net, x);
    const Eigen::VectorXd g = backward(net, f, Eigen::MatrixXd::Zero(3, 3), Eigen::RowVectorXd::Zero(3),
                                       Eigen::VectorXd::Zero(3));
    EXPECT_EQ(g, Eigen::VectorXd::Zero(net.n_params()));
}

TEST(Network, ShapeErrors) {
    EXPECT_THROW(PolicyNetwork(MlpShape{0, {4}, 2}), ShapeError);
    EXPECT_THROW(PolicyNetwork(MlpShape{3, {}, 2}), ShapeError);
    EXPECT_THROW(PolicyNetwork(MlpShape{3, {0}, 2}), ShapeError);
    const PolicyNetwork net(small_shape());
    const std::vector<double> wrong(4, 0.0);
    EXPECT_THROW(forward(net, wrong), ShapeError);
    const ForwardCache f = forward_batch(net, Eigen::MatrixXd::Zero(5, 2));
    EXPECT_THROW(backward(net, f, Eigen::MatrixXd::Zero(3, 1), Eigen::RowVectorXd::Zero(2), Eigen::VectorXd::Zero(3)),
                 ShapeError);
}

TEST(SquashedGaussian, DensityIntegratesToOne) {
    for (double mu : {-1.5, 0.0, 0.7}) {
        for (double ls : {-1.0, 0.0, 0.5}) {
            const Eigen::VectorXd mean = Eigen::VectorXd::Constant(1, mu), log_std = Eigen::VectorXd::Constant(1, ls);
            // a = tanh(u), da = (1 - tanh(u)^2) du
            double integral = 0.0;
            const double du = 1e-3;
            for (double u = -25.0; u < 25.0; u += du) {
                const Eigen::VectorXd pre = Eigen::VectorXd::Constant(1, u + 0.5 * du);
                integral += std::exp(squashed_log_prob(mean, log_std, pre) + log_one_minus_tanh_sq(pre[0])) * du;
            }
            EXPECT_NEAR(integral, 1.0, 1e-6) << mu << " " << ls;
        }
    }
}

TEST(SquashedGaussian, StableSquashTerm) {
    for (double u : {-3.0, -0.2, 0.0, 1.0, 4.0})
        EXPECT_NEAR(log_one_minus_tanh_sq(u), std::log(1.0 - std::tanh(u) * std::tanh(u)), 1e-9);
    EXPECT_TRUE(std::isfinite(log_one_minus_tanh_sq(400.0)));
    EXPECT_NEAR(log_one_minus_tanh_sq(50.0), std::log(4.0) - 100.0, 1e-9);
}

TEST(SquashedGaussian, GradientMatchesFiniteDifferences) {
    Eigen::VectorXd mean(3), log_std(3), pre(3);
    mean << 0.1, -0.4, 1.2;
    log_std << -0.5, 0.2, -1.0;
    pre << 0.3, -1.1, 0.9;
    Eigen::VectorXd dm(3), ds(3);
    squashed_log_prob_grad(mean, log_std, pre, dm, ds);
    const double h = 1e-6;
    for (int i = 0; i < 3; ++i) {
        Eigen::VectorXd mp = mean, mm = mean, sp = log_std, sm = log_std;
        mp[i] += h;
        mm[i] -= h;
        sp[i] += h;
        sm[i] -= h;
        EXPECT_NEAR(dm[i], (squashed_log_prob(mp, log_std, pre) - squashed_log_prob(mm, log_std, pre)) / (2 * h), 1e-7);
        EXPECT_NEAR(ds[i], (squashed_log_prob(mean, sp, pre) - squashed_log_prob(mean, sm, pre)) / (2 * h), 1e-7);
    }
}

TEST(SquashedGaussian, SamplesStayInsideAndMatchLogProb) {
    std::mt19937_64 rng(8);
    const PolicyNetwork net = PolicyNetwork::initialized(small_shape(), 1);
    const std::vector<double> x{0.5, -0.5, 1.0, 0.0, 2.0};
    const PolicyOutput o = forward(net, x);
    for (int k = 0; k < 100; ++k) {
        const PolicySample s = sample_action(net, x, rng);
        EXPECT_TRUE((s.action.array().abs() < 1.0).all());
        EXPECT_NEAR(s.log_prob, squashed_log_prob(o.mean, o.log_std, s.pre_tanh), 1e-12);
    }
    const PolicySample d = deterministic_action(net, x);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(d.action[i], std::tanh(o.mean[i]), 1e-15);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    Eigen::VectorXd p(3);
    p << 1.0, -2.0, 0.5;
    const Eigen::VectorXd start = p;
    Eigen::VectorXd g(3);
    g << 0.3, -5.0, 0.0;
    AdamState st = AdamState::zeros(3);
    adam_step(p, g, st, 0.01);
    EXPECT_EQ(st.step, 1);
    EXPECT_NEAR(p[0] - start[0], -0.01, 1e-9);
    EXPECT_NEAR(p[1] - start[1], 0.01, 1e-9);
    EXPECT_EQ(p[2], start[2]);
}

TEST(Adam, ZeroGradientLeavesParameters) {
    Eigen::VectorXd p = Eigen::VectorXd::Random(10);
    const Eigen::VectorXd start = p;
    AdamState st = AdamState::zeros(10);
    for (int i = 0; i < 5; ++i) adam_step(p, Eigen::VectorXd::Zero(10), st, 0.1);
    EXPECT_EQ(p, start);
    EXPECT_THROW(adam_step(p, Eigen::VectorXd::Zero(3), st, 0.1), ShapeError);
}

TEST(Adam, MinimizesAQuadratic) {
    Eigen::VectorXd p = Eigen::VectorXd::Constant(4, 3.0);
    AdamState st = AdamState::zeros(4);
    for (int i = 0; i < 3000; ++i) adam_step(p, 2.0 * p, st, 0.01);
    EXPECT_LT(p.norm(), 1e-2);
}

TEST(Checkpoint, RoundTripIsExact) {
    const auto file = std::filesystem::temp_directory_path() / "gridmdp_ckpt.json";
    PolicyNetwork net = PolicyNetwork::initialized(small_shape(), 77);
    net.theta()[0] = 1.0 / 3.0;
    save_checkpoint(net, file);
    const PolicyNetwork back = load_checkpoint(file);
    EXPECT_EQ(back.shape(), net.shape());
    EXPECT_EQ(back.theta(), net.theta());
    std::filesystem::remove(file);
}

TEST(Checkpoint, RejectsForeignFiles) {
    const auto file = std::filesystem::temp_directory_path() / "gridmdp_not_ckpt.json";
    { std::ofstream(file) << "{\"format\": \"other\"}"; }
    EXPECT_THROW(load_checkpoint(file), ShapeError);
    { std::ofstream(file) << "not json"; }
    EXPECT_THROW(load_checkpoint(file), ShapeError);
    std::filesystem::remove(file);
}
