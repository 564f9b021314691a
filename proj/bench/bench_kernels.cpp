// Parallel kernels against their serial references.
//
//   ./gridmdp_bench --benchmark_filter=Batch
//   OMP_NUM_THREADS=4 ./gridmdp_bench

#include <benchmark/benchmark.h>

#include <map>
#include <random>

#include "gridmdp/harness.hpp"
#include "support.hpp"

using namespace gridmdp;

namespace {

struct FlowInputs {
    Grid grid;
    TopologyState topology;
    std::vector<InjectionVector> injections;
};

const FlowInputs& flow_inputs(int buses) {
    static std::map<int, FlowInputs> cache;
    auto it = cache.find(buses);
    if (it == cache.end()) {
        std::mt19937_64 rng(buses);
        FlowInputs in{fx::random_grid(rng, buses), {}, {}};
        in.topology = TopologyState::initial(in.grid);
        for (int k = 0; k < 256; ++k) in.injections.push_back(fx::random_injections(rng, in.grid));
        it = cache.emplace(buses, std::move(in)).first;
    }
    return it->second;
}

void BM_BatchFlow(benchmark::State& state) {
    const auto& in = flow_inputs(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(solve_dc_batch(in.grid, in.topology, in.injections));
    state.SetItemsProcessed(state.iterations() * static_cast<long>(in.injections.size()));
}

void BM_BatchFlowSerial(benchmark::State& state) {
    const auto& in = flow_inputs(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(solve_dc_batch_serial(in.grid, in.topology, in.injections));
    state.SetItemsProcessed(state.iterations() * static_cast<long>(in.injections.size()));
}

std::vector<PpoSample> ppo_batch(const nn::PolicyNetwork& net, int n) {
    std::mt19937_64 rng(n);
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<PpoSample> batch(static_cast<std::size_t>(n));
    for (auto& s : batch) {
        s.features.resize(static_cast<std::size_t>(net.shape().input));
        for (auto& f : s.features) f = z(rng);
        s.pre_tanh = Eigen::VectorXd::NullaryExpr(net.shape().n_action, [&] { return 0.5 * z(rng); });
        s.old_log_prob = -1.0;
        s.advantage = z(rng);
        s.value_target = z(rng);
    }
    return batch;
}

const nn::PolicyNetwork& bench_net() {
    static const nn::PolicyNetwork net = initial_policy(fx::default_grid(), 3, {300, 300, 300}, 1);
    return net;
}

void BM_PpoLoss(benchmark::State& state) {
    const auto batch = ppo_batch(bench_net(), static_cast<int>(state.range(0)));
    PpoLoss out;
    for (auto _ : state) {
        ppo_loss(bench_net(), batch, 0.2, 0.5, out);
        benchmark::DoNotOptimize(out.loss);
    }
}

void BM_PpoLossReference(benchmark::State& state) {
    const auto batch = ppo_batch(bench_net(), static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(ppo_loss_reference(bench_net(), batch, 0.2).loss);
}

const std::vector<std::shared_ptr<const Scenario>>& eval_suite() {
    static const auto suite = [] {
        StressConfig cfg;
        cfg.base.days = 2;
        return make_stress_suite(fx::default_grid(), cfg, 2000, 8);
    }();
    return suite;
}

void BM_Evaluate(benchmark::State& state) {
    const auto factory = agent_factory("expert");
    const auto refs = compute_refs(eval_suite());
    for (auto _ : state) benchmark::DoNotOptimize(evaluate(factory, eval_suite(), {}, {}, refs));
}

void BM_EvaluateSerial(benchmark::State& state) {
    const auto factory = agent_factory("expert");
    const auto refs = compute_refs(eval_suite());
    for (auto _ : state) benchmark::DoNotOptimize(evaluate_serial(factory, eval_suite(), {}, {}, refs));
}

}  // namespace

BENCHMARK(BM_BatchFlow)->Arg(14)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchFlowSerial)->Arg(14)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PpoLoss)->Arg(16)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PpoLossReference)->Arg(16)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Evaluate)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EvaluateSerial)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
