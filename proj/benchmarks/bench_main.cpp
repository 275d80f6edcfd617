#include <benchmark/benchmark.h>

#include <random>

#include "illama/illama.hpp"

using namespace illama;

namespace {

Tensor<float> random_tensor(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  Tensor<float> t(std::move(shape));
  for (auto& v : t.data()) v = n(rng);
  return t;
}

ModelConfig micro(std::size_t channels) {
  ModelConfig c = ModelConfig::preset("micro");
  c.in_channels = channels;
  return c;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_tensor({n, n}, 1);
  const auto b = random_tensor({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.counters["GFLOPS"] =
      benchmark::Counter(2.0 * n * n * n, benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256)->Arg(512)->Unit(benchmark::kMicrosecond);

void BM_Attention(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const MaskKind kind = state.range(1) ? MaskKind::soft(0.5) : MaskKind::causal();
  constexpr std::size_t n = 65, d = 128, heads = 4;
  AttentionParams<float> p{random_tensor({d, d}, 1), random_tensor({d, d}, 2), random_tensor({d, d}, 3),
                           random_tensor({d, d}, 4), heads};
  Tensor<float> x = random_tensor({batch * n, d}, 5);
  RoPECache<float> rope(n, d / heads);
  for (auto _ : state) {
    Tape<float> tape;
    auto y = mhsa_forward(tape.constant(x), batch, p, kind, &rope);
    benchmark::DoNotOptimize(y.value().data().data());
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_Attention)->Args({1, 0})->Args({32, 0})->Args({32, 1})->Unit(benchmark::kMillisecond);

void BM_MicroForward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto m = build_model<float>(micro(3), 1);
  const auto img = random_tensor({batch, 3, 32, 32}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(predict(m, img, MaskKind::causal()));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_MicroForward)->Arg(1)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_MicroTrainStep(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  auto m = build_model<float>(micro(3), 1);
  const auto img = random_tensor({batch, 3, 32, 32}, 2);
  std::vector<std::uint8_t> labels(batch);
  for (std::size_t i = 0; i < batch; ++i) labels[i] = static_cast<std::uint8_t>(i % 10);
  const auto targets = one_hot<float>(labels, 10);
  ForwardOptions o;
  o.mask = MaskKind::soft(0.5);
  for (auto _ : state) {
    for_each_parameter(m, [](const std::string&, Tensor<float>& t) { t.zero_grad(); });
    Tape<float> tape;
    auto loss = cross_entropy_smoothed(forward(m, tape.constant(img), o), targets, 0.1);
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.value().data().data());
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_MicroTrainStep)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
