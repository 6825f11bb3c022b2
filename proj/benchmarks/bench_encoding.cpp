#include <benchmark/benchmark.h>

#include "hashsurf/hash_grid.hpp"
#include "hashsurf/nn.hpp"

using namespace hashsurf;

namespace {

template <class S>
void BM_encode(benchmark::State& state) {
  ParameterStore<S> store;
  typename MultiResHashGrid<S>::Config cfg;
  cfg.levels = 8;
  cfg.n_min = 16;
  cfg.n_max = 256;
  cfg.feature_dim = 4;
  cfg.table_size = 1 << 16;
  Rng rng(1);
  MultiResHashGrid<S> grid(store, "g", cfg, rng, 1e-4);

  const int64_t n = state.range(0);
  MatX<S> pts(3, n);
  Rng prng(2);
  for (int64_t i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) pts(k, i) = static_cast<S>(prng.next_range(-1, 1));
  }
  EncodeCache<S> cache;
  MatX<S> out;
  for (auto _ : state) {
    grid.encode(store, pts, cfg.levels, cache, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}

template <class S>
void BM_encode_backward(benchmark::State& state) {
  ParameterStore<S> store;
  typename MultiResHashGrid<S>::Config cfg;
  cfg.levels = 8;
  cfg.n_min = 16;
  cfg.n_max = 256;
  cfg.feature_dim = 4;
  cfg.table_size = 1 << 16;
  Rng rng(1);
  MultiResHashGrid<S> grid(store, "g", cfg, rng, 1e-4);

  const int64_t n = state.range(0);
  MatX<S> pts(3, n);
  Rng prng(2);
  for (int64_t i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) pts(k, i) = static_cast<S>(prng.next_range(-1, 1));
  }
  EncodeCache<S> cache;
  MatX<S> out;
  grid.encode(store, pts, cfg.levels, cache, out);
  const MatX<S> upstream = MatX<S>::Ones(grid.output_dim(), n);
  GradBuffer<S> sink(store, true);
  for (auto _ : state) {
    grid.encode_backward(store, cache, upstream, sink);
    benchmark::DoNotOptimize(sink.grad(grid.table_handle(0)));
  }
  state.SetItemsProcessed(state.iterations() * n);
}

void BM_dense_forward(benchmark::State& state) {
  ParameterStore<float> store;
  DenseLayer<float> layer(store, "l", 35, 64, Activation::Softplus, 100.0f);
  Rng rng(3);
  fill_normal(store.values(layer.weight_handle()), rng, 0.0, 0.1);
  const int64_t n = state.range(0);
  MatX<float> x = MatX<float>::Random(35, n);
  DenseCache<float> cache;
  MatX<float> y;
  for (auto _ : state) {
    layer.forward(store, x, cache, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}

}  // namespace

BENCHMARK(BM_encode<float>)->Arg(1024)->Arg(16384);
BENCHMARK(BM_encode<double>)->Arg(16384);
BENCHMARK(BM_encode_backward<float>)->Arg(16384);
BENCHMARK(BM_dense_forward)->Arg(4096)->Arg(32768);
