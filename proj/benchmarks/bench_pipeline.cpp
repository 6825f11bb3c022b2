#include <benchmark/benchmark.h>

#include <filesystem>

#include "hashsurf/training.hpp"

using namespace hashsurf;
namespace fs = std::filesystem;

namespace {

const Dataset<float>& bench_dataset() {
  static Dataset<float> data = [] {
    const fs::path dir = fs::temp_directory_path() / "hashsurf_bench_ds";
    if (!fs::exists(dir / "manifest.json")) {
      DatasetOptions opt;
      opt.n_views = 12;
      opt.resolution = 64;
      generate_dataset(AnalyticScene::by_name("sphere-box"), opt, dir);
    }
    return Dataset<float>::load(dir);
  }();
  return data;
}

void BM_train_step_desk(benchmark::State& state) {
  RunConfig cfg = RunConfig::defaults("desk");
  cfg.train.seed = 3;
  auto model = ReconstructionModel<float>::build(cfg.train);
  ThreadPool pool(static_cast<int>(state.range(0)));
  Trainer<float> trainer(*model, bench_dataset(), pool);
  for (auto _ : state) {
    const auto m = trainer.step();
    benchmark::DoNotOptimize(m.total);
  }
  state.SetItemsProcessed(state.iterations() * cfg.train.rays_per_step *
                          cfg.train.samples_per_ray);
}

void BM_sdf_eval_batch(benchmark::State& state) {
  RunConfig cfg = RunConfig::defaults("desk");
  auto model = ReconstructionModel<float>::build(cfg.train);
  const int64_t n = state.range(0);
  MatX<float> pts(3, n);
  Rng rng(4);
  for (int64_t i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) pts(k, i) = static_cast<float>(rng.next_range(-1, 1));
  }
  auto fn = model->sdf_fn(model->level_count());
  VecX<float> sdf;
  for (auto _ : state) {
    fn(pts, sdf);
    benchmark::DoNotOptimize(sdf.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}

}  // namespace

BENCHMARK(BM_train_step_desk)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_sdf_eval_batch)->Arg(65536)->Unit(benchmark::kMillisecond);
