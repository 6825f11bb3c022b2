#include "acceptance_common.hpp"

#include <algorithm>
#include <cstring>

namespace acceptance {

std::vector<Criterion>& registry() {
  static std::vector<Criterion> r;
  return r;
}

double checkpoint_chamfer(const fs::path& ckpt, const std::string& scene_name,
                          int mesh_resolution, int n_points, uint64_t seed) {
  auto model = load_model_from<float>(ckpt);
  ThreadPool pool(ThreadPool::default_workers());
  const TriangleMesh mesh =
      marching_cubes(model->field_fn(), mesh_resolution, kDomainBound, pool);
  if (mesh.triangles.empty()) return std::numeric_limits<double>::infinity();
  const auto predicted = mesh_to_points(mesh, n_points, seed);
  const auto reference = sample_surface(AnalyticScene::by_name(scene_name), n_points, seed);
  return chamfer_l1(predicted, reference);
}

}  // namespace acceptance

int main(int argc, char** argv) {
  using namespace acceptance;
  Context ctx;
  ctx.runs_dir = fs::path("acceptance_runs");
  ctx.cli_path = HASHSURF_CLI_PATH;
  std::vector<int> selected;
  bool list_only = false;
  for (int i = 1; i < argc; ++i) {
    if (!std::strcmp(argv[i], "--criterion") && i + 1 < argc) {
      selected.push_back(std::atoi(argv[++i]));
    } else if (!std::strcmp(argv[i], "--runs-dir") && i + 1 < argc) {
      ctx.runs_dir = argv[++i];
    } else if (!std::strcmp(argv[i], "--list")) {
      list_only = true;
    } else {
      std::fprintf(stderr, "usage: %s [--criterion N]... [--runs-dir DIR] [--list]\n", argv[0]);
      return 2;
    }
  }
  fs::create_directories(ctx.runs_dir);

  auto& all = registry();
  std::sort(all.begin(), all.end(),
            [](const Criterion& a, const Criterion& b) { return a.number < b.number; });
  if (list_only) {
    for (const auto& c : all) std::printf("c%d: %s\n", c.number, c.title.c_str());
    return 0;
  }

  int failures = 0;
  for (const auto& c : all) {
    if (!selected.empty() &&
        std::find(selected.begin(), selected.end(), c.number) == selected.end()) {
      continue;
    }
    std::printf("[c%d] %s ...\n", c.number, c.title.c_str());
    std::fflush(stdout);
    CriterionResult result;
    try {
      result = c.fn(ctx);
    } catch (const std::exception& e) {
      result.pass = false;
      result.detail = std::string("exception: ") + e.what();
    }
    std::printf("[c%d] %s: %s (%s)\n", c.number, result.pass ? "PASS" : "FAIL", c.title.c_str(),
                result.detail.c_str());
    std::fflush(stdout);
    if (!result.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
