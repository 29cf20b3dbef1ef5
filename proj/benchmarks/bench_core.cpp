// Microbenchmarks for the hot paths: convolution lowering, kernel basis
// construction, encoder forward, dense query + heads, and the deformable
// steerable layer.
#include <benchmark/benchmark.h>

#include "c4g/model.hpp"

using namespace c4g;

namespace {

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng) {
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.uniform(-1, 1));
  return Tensor<T>::from_values(std::move(shape), std::move(v));
}

}  // namespace

static void BM_Conv2d_8x40x40(benchmark::State& state) {
  Rng rng(1);
  auto x = random_tensor<float>({8, 40, 40}, rng);
  auto k = random_tensor<float>({8, 8, 3, 3}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k, 1, 1));
}
BENCHMARK(BM_Conv2d_8x40x40);

static void BM_Conv3d_Lift40(benchmark::State& state) {
  Rng rng(2);
  auto x = random_tensor<float>({1, 40, 40, 40}, rng);
  auto k = random_tensor<float>({8, 1, 3, 3, 3}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv3d(x, k, 1, 1));
}
BENCHMARK(BM_Conv3d_Lift40);

static void BM_PairBasisRegularRegular3(benchmark::State& state) {
  CyclicGroup c4(4);
  for (auto _ : state)
    benchmark::DoNotOptimize(
        detail::build_pair_basis(c4, RepBlock::regular(), RepBlock::regular(), 3));
}
BENCHMARK(BM_PairBasisRegularRegular3);

static void BM_SteerableConvForward(benchmark::State& state) {
  CyclicGroup c4(4);
  RepresentationSpec spec = RepresentationSpec::regulars(c4, 2);
  ParamRegistry<float> reg;
  Rng rng(3);
  SteerableConv2d<float> conv("c", spec, spec, 3, true, reg, rng);
  auto x = random_tensor<float>({spec.dim(), 40, 40}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x));
}
BENCHMARK(BM_SteerableConvForward);

static void BM_DscnForward(benchmark::State& state) {
  CyclicGroup c4(4);
  RepresentationSpec spec = RepresentationSpec::regulars(c4, 2);
  ParamRegistry<float> reg;
  Rng rng(4);
  DeformableSteerableConv2d<float> layer("d", spec, spec, 3, reg, rng);
  auto x = random_tensor<float>({spec.dim(), 40, 40}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(layer.forward(x));
}
BENCHMARK(BM_DscnForward);

static void BM_EncoderForward40(benchmark::State& state) {
  RunConfig cfg;
  GraspModel<float> model(cfg, 5);
  Rng rng(6);
  auto tsdf = random_tensor<float>({1, 40, 40, 40}, rng);
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(model.encoder().encode(tsdf));
}
BENCHMARK(BM_EncoderForward40);

static void BM_QueryAndHeads4096(benchmark::State& state) {
  RunConfig cfg;
  GraspModel<float> model(cfg, 7);
  Rng rng(8);
  auto tsdf = random_tensor<float>({1, 40, 40, 40}, rng);
  NoGradGuard ng;
  auto tri = model.encoder().encode(tsdf);
  auto pts = random_tensor<float>({4096, 3}, rng);
  for (int64_t i = 0; i < pts.numel(); ++i)
    pts.mutable_data()[i] = static_cast<float>(0.03 + 0.24 * (pts.data()[i] + 1) / 2);
  for (auto _ : state) {
    auto c = query_features(tri, pts);
    benchmark::DoNotOptimize(model.heads().graspness(c));
    benchmark::DoNotOptimize(model.heads().rotation6d(c));
  }
}
BENCHMARK(BM_QueryAndHeads4096);

BENCHMARK_MAIN();
