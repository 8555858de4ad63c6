// Serial reference kernels vs their OpenMP counterparts, plus end-to-end
// forward and simulator throughput. Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include "lclab/kernels.hpp"
#include "lclab/model.hpp"
#include "lclab/noise.hpp"
#include "lclab/quant.hpp"
#include "lclab/rng.hpp"

namespace {

using namespace lclab;

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({r, c});
  for (float& v : t.data()) v = static_cast<float>(rng.normal());
  return t;
}

void BM_MatmulSerial(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_matrix(t, 128, 1), b = random_matrix(128, 384, 2);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::serial::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(t * 128 * 384));
}

void BM_MatmulOmp(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_matrix(t, 128, 1), b = random_matrix(128, 384, 2);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(t * 128 * 384));
}

void BM_AttentionSerial(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  const Tensor q = random_matrix(t, 128, 3), k = random_matrix(t, 128, 4), v = random_matrix(t, 128, 5);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::serial::causal_attention(q, k, v, 4));
}

void BM_AttentionOmp(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  const Tensor q = random_matrix(t, 128, 3), k = random_matrix(t, 128, 4), v = random_matrix(t, 128, 5);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::causal_attention(q, k, v, 4));
}

void BM_SoftmaxSerial(benchmark::State& state) {
  const Tensor x = random_matrix(static_cast<std::size_t>(state.range(0)), 256, 6);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::serial::softmax_rows(x));
}

void BM_SoftmaxOmp(benchmark::State& state) {
  const Tensor x = random_matrix(static_cast<std::size_t>(state.range(0)), 256, 6);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::softmax_rows(x));
}

void BM_QuantizeWeights(benchmark::State& state) {
  const Tensor w = random_matrix(384, 128, 7);
  QuantSpec spec;
  spec.weight_bits = 3;
  for (auto _ : state) benchmark::DoNotOptimize(quantize_weights(w, spec));
}

void BM_Forward(benchmark::State& state) {
  const PreparedModel model(gen_toy_model(ModelConfig{}, 42));
  TokenSequence tokens(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i] = static_cast<std::int32_t>(i % 256);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(tokens));
}

void BM_SimulateFullAttention(benchmark::State& state) {
  NoiseSimConfig c;
  c.interpretation = Interpretation::kFullAttention;
  c.t_max = 512;
  c.t_stride = 16;
  c.trials = 256;
  for (auto _ : state) benchmark::DoNotOptimize(simulate(c));
}

BENCHMARK(BM_MatmulSerial)->Arg(512)->Arg(4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MatmulOmp)->Arg(512)->Arg(4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AttentionSerial)->Arg(512)->Arg(2048)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AttentionOmp)->Arg(512)->Arg(2048)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SoftmaxSerial)->Arg(4096)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_SoftmaxOmp)->Arg(4096)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_QuantizeWeights)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Forward)->Arg(512)->Arg(4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SimulateFullAttention)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
