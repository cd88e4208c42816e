#include <benchmark/benchmark.h>

#include "cropcast/nn/layers.hpp"
#include "cropcast/nn/params.hpp"
#include "cropcast/rng.hpp"

using namespace cropcast;
using namespace cropcast::nn;

namespace {

Seq random_seq(Rng& rng, int steps, Eigen::Index batch, Eigen::Index channels) {
    Seq seq(steps);
    for (auto& step : seq) {
        step.resize(batch, channels);
        for (Eigen::Index c = 0; c < channels; ++c)
            for (Eigen::Index r = 0; r < batch; ++r) step(r, c) = rng.uniform(-1.0, 1.0);
    }
    return seq;
}

} // namespace

static void AttentionForward(benchmark::State& state) {
    const auto steps = static_cast<int>(state.range(0));
    ParamLayout layout;
    AdditiveAttention attn(layout, "attn", 32, 32);
    const ParamVec params = init_params(layout, 7);
    Rng rng(1);
    const Seq x = random_seq(rng, steps, 32, 32);
    for (auto _ : state) {
        Seq y = attn.forward(params, x, nullptr);
        benchmark::DoNotOptimize(y);
    }
    state.SetComplexityN(steps);
}
BENCHMARK(AttentionForward)->RangeMultiplier(2)->Range(16, 128)->Complexity();

static void AttentionTrainStep(benchmark::State& state) {
    ParamLayout layout;
    AdditiveAttention attn(layout, "attn", 32, 32);
    ParamVec params = init_params(layout, 7);
    Rng rng(1);
    const Seq x = random_seq(rng, 140, 32, 32);
    for (auto _ : state) {
        AdditiveAttention::Cache cache;
        Seq y = attn.forward(params, x, &cache);
        ParamVec grad = ParamVec::Zero(params.size());
        Seq dx = attn.backward(params, grad, y, cache);
        benchmark::DoNotOptimize(dx);
    }
}
BENCHMARK(AttentionTrainStep)->Unit(benchmark::kMillisecond);

static void LstmForward(benchmark::State& state) {
    ParamLayout layout;
    Lstm lstm(layout, "lstm", 36, 64);
    const ParamVec params = init_params(layout, 7);
    Rng rng(2);
    const Seq x = random_seq(rng, 140, 32, 36);
    for (auto _ : state) {
        Seq y = lstm.forward(params, x, nullptr);
        benchmark::DoNotOptimize(y);
    }
}
BENCHMARK(LstmForward)->Unit(benchmark::kMillisecond);

static void DilatedConvStack(benchmark::State& state) {
    ParamLayout layout;
    std::vector<Conv1D> stack;
    int in_ch = 36;
    for (int b = 0; b < 8; ++b) {
        stack.emplace_back(layout, "conv" + std::to_string(b), in_ch, 32, 2, 1 << b,
                           Activation::relu);
        in_ch = 32;
    }
    const ParamVec params = init_params(layout, 7);
    Rng rng(3);
    const Seq x = random_seq(rng, 140, 32, 36);
    for (auto _ : state) {
        Seq h = x;
        for (const auto& conv : stack) h = conv.forward(params, h, nullptr);
        benchmark::DoNotOptimize(h);
    }
}
BENCHMARK(DilatedConvStack)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
