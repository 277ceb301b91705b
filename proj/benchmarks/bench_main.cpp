#include <benchmark/benchmark.h>

#include <random>

#include "hykey/matching.hpp"
#include "hykey/model.hpp"
#include "hykey/ops.hpp"
#include "hykey/robust.hpp"

using namespace hykey;

namespace {

Tensor uniform(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Tensor t(shape);
  for (float& v : t.mutable_data()) v = u(rng);
  return t;
}

void BM_DenseForward(benchmark::State& state) {
  const auto side = state.range(0);
  model::HyKeyNetwork net({}, 1);
  const Tensor x = uniform({1, 16, side, side}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(net.dense_forward(x, false));
  state.SetItemsProcessed(state.iterations() * side * side);
}
BENCHMARK(BM_DenseForward)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  model::HyKeyNetwork net({}, 1);
  net.set_requires_grad(true);
  const Tensor x = uniform({1, 16, 32, 32}, 3);
  for (auto _ : state) {
    Tape tape;
    TapeScope scope(tape);
    const auto out = net.dense_forward(x, true);
    tape.backward(sum(out.score_map));
    net.zero_grad();
  }
}
BENCHMARK(BM_ForwardBackward)->Unit(benchmark::kMillisecond);

void BM_MutualNearestNeighbour(benchmark::State& state) {
  const auto n = state.range(0);
  const Tensor a = l2_normalize(uniform({n, 64}, 4), 1).value;
  const Tensor b = l2_normalize(uniform({n, 64}, 5), 1).value;
  for (auto _ : state) benchmark::DoNotOptimize(matching::mnn_match(matching::similarity(a, b)));
}
BENCHMARK(BM_MutualNearestNeighbour)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_RobustHomography(benchmark::State& state) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 512.0);
  geometry::Homography h;
  h.m(0, 2) = 12.0;
  geometry::CorrespondenceSet m;
  for (int i = 0; i < 400; ++i) {
    const geometry::Vec2 p(u(rng), u(rng) * 0.53);
    m.push_back({p, i % 2 ? geometry::apply_homography(h, p) : geometry::Vec2(u(rng), u(rng) * 0.53), 1.0});
  }
  geometry::RobustOptions o;
  o.threshold = 3.0;
  for (auto _ : state) benchmark::DoNotOptimize(geometry::estimate_homography_robust(m, o));
}
BENCHMARK(BM_RobustHomography)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
