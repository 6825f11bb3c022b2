// Criteria built on full desk-preset reconstructions: end-to-end accuracy,
// ablation directions, and mask spatial adaptivity. Training runs are cached
// under the runs directory and shared between criteria.

#include "acceptance_common.hpp"

#include <algorithm>
#include <cmath>

namespace acceptance {
namespace {

char buf[512];

constexpr int kSeeds[3] = {1, 2, 3};
constexpr int kEvalPoints = 20000;
constexpr int kMeshResolution = 256;

// ---- c6: end-to-end reconstruction against the sanity bound and baseline ----

CriterionResult c6(const Context& ctx) {
  int pass_seeds = 0;
  double worst_time = 0.0;
  std::string detail;
  for (const int seed : kSeeds) {
    double t_adaptive = 0.0, t_baseline = 0.0;
    const auto adaptive = cached_training(
        ctx, {.name = "adaptive_s" + std::to_string(seed), .seed = static_cast<uint64_t>(seed)},
        &t_adaptive);
    const auto baseline = cached_training(
        ctx, {.name = "baseline_s" + std::to_string(seed), .seed = static_cast<uint64_t>(seed),
              .mask_mode = MaskMode::PinnedOne},
        &t_baseline);
    worst_time = std::max({worst_time, t_adaptive, t_baseline});

    const double cd_adaptive =
        checkpoint_chamfer(adaptive, "sphere-box", kMeshResolution, kEvalPoints, 1);
    const double cd_baseline =
        checkpoint_chamfer(baseline, "sphere-box", kMeshResolution, kEvalPoints, 1);
    const bool ok = cd_adaptive < 0.05 && cd_adaptive <= cd_baseline;
    if (ok) ++pass_seeds;
    std::snprintf(buf, sizeof(buf), "seed %d: adaptive %.5f %s baseline %.5f, bound %s; ", seed,
                  cd_adaptive, cd_adaptive <= cd_baseline ? "<=" : ">", cd_baseline,
                  cd_adaptive < 0.05 ? "ok" : "VIOLATED");
    detail += buf;
  }
  std::snprintf(buf, sizeof(buf), "%d/3 seeds pass; slowest fresh training %.0fs (budget 3600s)",
                pass_seeds, worst_time);
  detail += buf;
  CriterionResult r;
  r.pass = pass_seeds >= 2 && worst_time < 3600.0;
  r.detail = detail;
  return r;
}
Register reg6(6, "end-to-end reconstruction: Chamfer bound and adaptive vs all-ones baseline",
              c6);

// ---- c7: ablation directions (softmax vs sigmoid, curvature on vs off) ----

double surface_curvature_mean(const fs::path& ckpt) {
  auto model = load_model_from<float>(ckpt);
  ThreadPool pool(ThreadPool::default_workers());
  const TriangleMesh mesh = marching_cubes(model->field_fn(), 192, kDomainBound, pool);
  if (mesh.triangles.empty()) return std::numeric_limits<double>::infinity();
  const auto pts = mesh_to_points(mesh, 1000, 5);
  const int levels = model->level_count();
  const float eps = static_cast<float>(epsilon_for_level(levels, model->grid->levels()));
  double acc = 0.0;
  for (const auto& p : pts) {
    acc += std::abs(static_cast<double>(
        model->sdf->discrete_laplacian(model->store, p.cast<float>(), levels, eps)));
  }
  return acc / static_cast<double>(pts.size());
}

CriterionResult c7(const Context& ctx) {
  int softmax_pass = 0, curvature_pass = 0;
  std::string detail;
  for (const int seed : kSeeds) {
    const auto sigmoid_ckpt = cached_training(
        ctx, {.name = "adaptive_s" + std::to_string(seed), .seed = static_cast<uint64_t>(seed)});
    const auto softmax_ckpt = cached_training(
        ctx, {.name = "softmax_s" + std::to_string(seed), .seed = static_cast<uint64_t>(seed),
              .activation = MaskActivation::Softmax});
    const double cd_sigmoid =
        checkpoint_chamfer(sigmoid_ckpt, "sphere-box", kMeshResolution, kEvalPoints, 1);
    const double cd_softmax =
        checkpoint_chamfer(softmax_ckpt, "sphere-box", kMeshResolution, kEvalPoints, 1);
    if (cd_sigmoid <= cd_softmax) ++softmax_pass;

    const auto curvoff_ckpt = cached_training(
        ctx, {.name = "curvoff_s" + std::to_string(seed), .seed = static_cast<uint64_t>(seed),
              .curvature = false});
    const double lap_on = surface_curvature_mean(sigmoid_ckpt);
    const double lap_off = surface_curvature_mean(curvoff_ckpt);
    if (lap_off > lap_on) ++curvature_pass;

    std::snprintf(buf, sizeof(buf),
                  "seed %d: CD sigmoid %.5f vs softmax %.5f; mean|lap| on %.3f vs off %.3f; ",
                  seed, cd_sigmoid, cd_softmax, lap_on, lap_off);
    detail += buf;
  }
  std::snprintf(buf, sizeof(buf), "sigmoid<=softmax on %d/3, curvature-off rougher on %d/3",
                softmax_pass, curvature_pass);
  detail += buf;
  CriterionResult r;
  r.pass = softmax_pass >= 2 && curvature_pass >= 2;
  r.detail = detail;
  return r;
}
Register reg7(7, "ablation directions: sigmoid vs softmax, curvature regularization", c7);

// ---- c8: mask spatial adaptivity on edges vs smooth regions ----

// Points along the twelve box edges of the sphere-box scene, slightly inset
// from the corners; all lie on the scene surface.
std::vector<Vec3d> box_edge_points(int n, uint64_t seed) {
  const Vec3d c(0.3, 0.0, 0.0);
  const Vec3d he(0.25, 0.25, 0.25);
  const AnalyticScene scene = AnalyticScene::by_name("sphere-box");
  std::vector<Vec3d> pts;
  Rng rng(derive_seed(seed, "box-edges"));
  while (static_cast<int>(pts.size()) < n) {
    const int axis = static_cast<int>(rng.next_below(3));  // edge direction
    const double sa = rng.next_below(2) ? 1.0 : -1.0;
    const double sb = rng.next_below(2) ? 1.0 : -1.0;
    const double t = rng.next_range(-0.95, 0.95);
    Vec3d p = c;
    p[axis] += t * he[axis];
    p[(axis + 1) % 3] += sa * he[(axis + 1) % 3];
    p[(axis + 2) % 3] += sb * he[(axis + 2) % 3];
    if (std::abs(scene.sdf(p)) > 1e-9) continue;  // swallowed by the union
    pts.push_back(p);
  }
  return pts;
}

// Sphere-surface points of the union (the cap inside the box is rejected).
std::vector<Vec3d> sphere_surface_points(int n, uint64_t seed) {
  const AnalyticScene scene = AnalyticScene::by_name("sphere-box");
  const Vec3d center(-0.25, 0.0, 0.0);
  std::vector<Vec3d> pts;
  Rng rng(derive_seed(seed, "sphere-pts"));
  while (static_cast<int>(pts.size()) < n) {
    Vec3d d(rng.next_normal(), rng.next_normal(), rng.next_normal());
    const double norm = d.norm();
    if (norm < 1e-9) continue;
    const Vec3d p = center + 0.35 * d / norm;
    if (std::abs(scene.sdf(p)) > 1e-9) continue;
    pts.push_back(p);
  }
  return pts;
}

CriterionResult c8(const Context& ctx) {
  const auto ckpt = cached_training(ctx, {.name = "adaptive_s1", .seed = 1});
  auto model = load_model_from<float>(ckpt);
  const int levels = model->level_count();
  const int high = std::max(1, levels / 8);
  const int band_lo = levels - high + 1;

  auto band_mean = [&](const std::vector<Vec3d>& pts) {
    MatX<float> p(3, static_cast<Eigen::Index>(pts.size()));
    for (size_t i = 0; i < pts.size(); ++i) {
      p.col(static_cast<Eigen::Index>(i)) = pts[i].cast<float>();
    }
    VecX<float> vals;
    model->mask_band_max(p, band_lo, levels, vals);
    return static_cast<double>(vals.sum()) / static_cast<double>(vals.size());
  };
  const double edge_mean = band_mean(box_edge_points(1000, 3));
  const double smooth_mean = band_mean(sphere_surface_points(1000, 3));

  std::snprintf(buf, sizeof(buf),
                "high band (levels %d-%d): box edges %.4f vs sphere surface %.4f", band_lo,
                levels, edge_mean, smooth_mean);
  CriterionResult r;
  r.pass = edge_mean > smooth_mean;
  r.detail = buf;
  return r;
}
Register reg8(8, "mask spatial adaptivity: high band stronger on box edges than sphere", c8);

}  // namespace
}  // namespace acceptance
