// Hot paths: backbone forward/backward, critic scoring + DV loss, CKA and MIG.

#include "kfactor/losses.hpp"
#include "kfactor/metrics.hpp"
#include "kfactor/models.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

using namespace kf;

Tensor uniform(std::vector<std::size_t> shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

void BM_BackboneForward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  models::Backbone net(models::BackboneSpec::cnn3(1, 32, 32), 1);
  const Tensor x = uniform({batch, 1, 32, 32}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_BackboneForward)->Arg(1)->Arg(32)->Unit(benchmark::kMicrosecond);

void BM_BackboneForwardBackward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  models::Backbone net(models::BackboneSpec::cnn3(1, 32, 32), 1);
  const Tensor x = uniform({batch, 1, 32, 32}, 2);
  for (auto _ : state) {
    models::Trace trace;
    const Tensor y = net.forward(x, &trace);
    net.params().zero_grad();
    benchmark::DoNotOptimize(net.backward(trace, y));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_BackboneForwardBackward)->Arg(32)->Unit(benchmark::kMicrosecond);

void BM_CriticDv(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto critic = models::CriticAligner::make(64, 64, {}, -1, 3);
  const Tensor teacher = uniform({n, 64}, 4), ckn = uniform({n, 64}, 5);
  for (auto _ : state) {
    const Tensor scores = models::critic_score(critic, teacher, ckn);
    const auto dv = loss::dv_lower_bound(scores);
    benchmark::DoNotOptimize(models::critic_score_backward(critic, teacher, ckn, dv.grad));
  }
}
BENCHMARK(BM_CriticDv)->Arg(32)->Arg(128)->Unit(benchmark::kMicrosecond);

void BM_LinearCka(benchmark::State& state) {
  const auto n = state.range(0);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  RowMatrix x(n, 64), y(n, 32);
  for (auto& v : x.reshaped()) v = g(rng);
  for (auto& v : y.reshaped()) v = g(rng);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::linear_cka(x, y));
}
BENCHMARK(BM_LinearCka)->Arg(1000)->Arg(6000)->Unit(benchmark::kMicrosecond);

void BM_Mig(benchmark::State& state) {
  const auto n = state.range(0);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> f(0, 9);
  metrics::CodeMatrix cm{RowMatrix(n, 24), metrics::IndexMatrix(n, 3)};
  for (auto& v : cm.codes.reshaped()) v = g(rng);
  for (auto& v : cm.factors.reshaped()) v = f(rng);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::mig(cm));
}
BENCHMARK(BM_Mig)->Arg(6000)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
