#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "oodf/distshift.hpp"
#include "oodf/graph.hpp"
#include "oodf/metrics.hpp"
#include "oodf/models.hpp"

using namespace oodf;

namespace {

Tensor noise(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Forward and backward through the default image network on one batch.
void BM_CnnStep(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  Model m = build_cnn(CnnConfig{}, 1);
  Graph g(m.parameters());
  const NodeId loss = g.weighted_nll(m.attach(g, g.input("x", {0, 3, 32, 32})),
                                     g.input("y", {0}), {1.0, 1.0});
  std::vector<double> labels(batch);
  for (std::size_t i = 0; i < batch; ++i) labels[i] = static_cast<double>(i % 2);
  const NamedTensors in{{"x", noise(Shape{batch, 3, 32, 32}, 2)},
                        {"y", Tensor(Shape{batch}, labels)}};
  for (auto _ : state) {
    g.forward(in);
    g.backward(loss);
    benchmark::DoNotOptimize(g.value(loss));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_CnnStep)->Arg(1)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_Auroc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> scores(n);
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = u(rng);
    labels[i] = u(rng) < 0.4 ? 1 : 0;
  }
  for (auto _ : state) benchmark::DoNotOptimize(roc_auc(scores, labels).auroc);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Auroc)->Range(1 << 10, 1 << 18);

void BM_PixelHistogramKl(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> byte(0, 255);
  Raster a(side, side), b(side, side);
  for (auto& v : a.rgb) v = static_cast<std::uint8_t>(byte(rng));
  for (auto& v : b.rgb) v = static_cast<std::uint8_t>(byte(rng) / 2);
  for (auto _ : state) {
    const PixelHistogram p = image_pixel_histogram(a);
    const PixelHistogram q = image_pixel_histogram(b);
    benchmark::DoNotOptimize(kl_divergence(p, q));
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(2 * 3 * side * side));
}
BENCHMARK(BM_PixelHistogramKl)->Arg(32)->Arg(256);

}  // namespace
BENCHMARK_MAIN();
