// Criteria that run in minutes: gradient integrity, compositing identity,
// mask identity reduction, gradient blocking, regularizer oracles, the
// Chamfer evaluator, and command determinism.

#include "acceptance_common.hpp"

#include <algorithm>
#include <cmath>

#include "oracles.hpp"

namespace acceptance {
namespace {

char buf[512];

// ---- c1: finite differences through the full loss on 8 random rays ----

CriterionResult c1(const Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig cfg = desk_run_config(ctx, {.name = "scratch_c1", .seed = 5});
  cfg.train.rays_per_step = 8;
  cfg.train.learning_rate = 0.0;
  cfg.train.curvature_warmup_steps = 0;
  auto model = ReconstructionModel<double>::build(cfg.train);

  // A mid-training-like state: populated tables and live encoding columns,
  // so every parameter group is on the gradient path.
  Rng noise(3);
  for (int l = 0; l < model->grid->level_count(); ++l) {
    fill_uniform(model->store.values(model->grid->table_handle(l)), noise, -0.05, 0.05);
  }
  {
    auto w = model->store.values(model->sdf->hidden_layer().weight_handle());
    const int in_dim = model->sdf->hidden_layer().in_dim();
    for (int r = 0; r < model->sdf->hidden_layer().out_dim(); ++r) {
      for (int c = 3; c < in_dim; ++c) {
        w[static_cast<size_t>(r) * in_dim + c] = noise.next_range(-0.05, 0.05);
      }
    }
  }

  const auto data = Dataset<double>::load(cfg.dataset_dir);
  ThreadPool pool(1);
  Trainer<double> trainer(*model, data, pool);
  const Rng snapshot = trainer.rng();
  auto loss = [&](bool) {
    trainer.set_rng(snapshot);
    trainer.set_step(0);
    return trainer.step().total;
  };
  const auto report = grad_check<double>(model->store, loss, 1e-4, 1e-5, 24, 17);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::snprintf(buf, sizeof(buf),
                "max rel err %.3g over %lld probes across %d parameter groups, %.0fs",
                report.max_rel_error, static_cast<long long>(report.checked),
                model->store.count(), secs);
  CriterionResult r;
  r.pass = report.max_rel_error < 1e-4 && secs < 300.0;
  r.detail = buf;
  return r;
}
Register reg1(1, "gradient integrity through the full loss (64-bit)", c1);

// ---- c2: compositing identity over 1e4 random rays at 32-bit ----

CriterionResult c2(const Context& ctx) {
  RunConfig cfg = desk_run_config(ctx, {.name = "scratch_c2", .seed = 2});
  auto model = ReconstructionModel<float>::build(cfg.train);
  Rng noise(11);
  for (int l = 0; l < model->grid->level_count(); ++l) {
    fill_uniform(model->store.values(model->grid->table_handle(l)), noise, -0.3, 0.3);
  }
  model->store.values(model->opacity.zeta_handle)[0] = 0.55f;  // sharpness ~ 245
  const float sharpness = model->opacity.sharpness(model->store);
  auto sdf_fn = model->sdf_fn(model->level_count());

  Rng rng(123);
  const int n_rays = 10000, m = 128;
  double worst = 0.0;
  int64_t clamp_hits = 0;
  std::vector<float> alphas(m), weights(m), u(m);
  for (int ray = 0; ray < n_rays; ++ray) {
    Vec3<float> o(static_cast<float>(rng.next_normal()), static_cast<float>(rng.next_normal()),
                  static_cast<float>(rng.next_normal()));
    o = o.normalized() * 2.5f;
    Vec3<float> target(static_cast<float>(rng.next_range(-0.5, 0.5)),
                       static_cast<float>(rng.next_range(-0.5, 0.5)),
                       static_cast<float>(rng.next_range(-0.5, 0.5)));
    const Vec3<float> d = (target - o).normalized();
    float tn, tf;
    if (!intersect_unit_sphere(o, d, tn, tf)) continue;
    for (int i = 0; i < m; ++i) u[static_cast<size_t>(i)] = static_cast<float>(rng.next_double());
    std::vector<float> depths(m);
    stratified_depths<float>(tn, tf, u, depths.data());
    MatX<float> pts(3, m);
    for (int i = 0; i < m; ++i) pts.col(i) = o + depths[static_cast<size_t>(i)] * d;
    VecX<float> sdf;
    sdf_fn(pts, sdf);
    for (int i = 0; i < m; ++i) {
      const float si = sdf[i];
      const float sn = i + 1 < m ? sdf[i + 1] : si;
      if (stable_sigmoid(sharpness * sn) > stable_sigmoid(sharpness * si)) ++clamp_hits;
      alphas[static_cast<size_t>(i)] = OpacityConverter<float>::alpha(sharpness, si, sn);
    }
    MatX<float> colors = MatX<float>::Constant(3, m, 0.5f);
    Vec3<float> c_out;
    const float resid = composite<float>(alphas, colors, Vec3<float>::Zero(), c_out, weights);
    double sum = resid;
    for (float w : weights) sum += w;
    worst = std::max(worst, std::abs(sum - 1.0));
  }

  const double oracle = OpacityConverter<double>::alpha(1.0, 0.1, -0.1);
  const bool oracle_ok = std::abs(oracle - 0.09516258196404052) < 1e-6;
  std::snprintf(buf, sizeof(buf),
                "max |sum w + T - 1| = %.3g over %d rays; clamp branch hit %lld times; "
                "alpha(1, 0.1, -0.1) = %.6f",
                worst, n_rays, static_cast<long long>(clamp_hits), oracle);
  CriterionResult r;
  r.pass = worst < 1e-5 && clamp_hits > 0 && oracle_ok;
  r.detail = buf;
  return r;
}
Register reg2(2, "compositing identity and the opacity clamp oracle (32-bit)", c2);

// ---- c3: pinned-one masks match the unmasked baseline bitwise ----

CriterionResult c3(const Context& ctx) {
  RunConfig base = desk_run_config(ctx, {.name = "scratch_c3", .seed = 17});
  base.train.total_steps = 100;

  auto run = [&](MaskMode mode) {
    RunConfig cfg = base;
    cfg.train.mask_mode = mode;
    auto model = ReconstructionModel<float>::build(cfg.train);
    const auto data = Dataset<float>::load(cfg.dataset_dir);
    ThreadPool pool(1);
    Trainer<float> trainer(*model, data, pool);
    for (int i = 0; i < 100; ++i) trainer.step();
    return model;
  };

  auto pinned = run(MaskMode::PinnedOne);
  auto none = run(MaskMode::Disabled);

  // Forward agreement on fresh models.
  RunConfig fwd_cfg = base;
  fwd_cfg.train.mask_mode = MaskMode::PinnedOne;
  auto fwd_pinned = ReconstructionModel<float>::build(fwd_cfg.train);
  fwd_cfg.train.mask_mode = MaskMode::Disabled;
  auto fwd_none = ReconstructionModel<float>::build(fwd_cfg.train);
  Rng rng(5);
  MatX<float> pts(3, 64);
  for (int i = 0; i < 64; ++i) {
    for (int k = 0; k < 3; ++k) pts(k, i) = static_cast<float>(rng.next_range(-1, 1));
  }
  SdfCache<float> ca, cb;
  VecX<float> sa, sb;
  fwd_pinned->sdf->forward(fwd_pinned->store, pts, fwd_pinned->level_count(), ca, sa);
  fwd_none->sdf->forward(fwd_none->store, pts, fwd_none->level_count(), cb, sb);
  bool forward_ok = true;
  for (int i = 0; i < 64; ++i) forward_ok = forward_ok && (sa[i] == sb[i]);

  // Trajectory agreement on every shared array after 100 steps.
  int64_t compared = 0;
  bool trajectory_ok = true;
  for (int h = 0; h < none->store.count(); ++h) {
    const auto& a = none->store.array(h);
    const int hp = pinned->store.find(a.name);
    if (hp < 0) {
      trajectory_ok = false;
      break;
    }
    const auto& b = pinned->store.array(hp);
    for (size_t i = 0; i < a.value.size(); ++i) {
      trajectory_ok = trajectory_ok && (a.value[i] == b.value[i]);
      ++compared;
    }
  }
  std::snprintf(buf, sizeof(buf),
                "forward bitwise %s; 100-step trajectory bitwise %s over %lld shared scalars",
                forward_ok ? "equal" : "DIFFERS", trajectory_ok ? "equal" : "DIFFERS",
                static_cast<long long>(compared));
  CriterionResult r;
  r.pass = forward_ok && trajectory_ok;
  r.detail = buf;
  return r;
}
Register reg3(3, "mask identity reduction (pinned-one vs unmasked baseline)", c3);

// ---- c4: gradient blocking over a 2k-step desk run ----

CriterionResult c4(const Context& ctx) {
  RunConfig cfg = desk_run_config(ctx, {.name = "scratch_c4", .seed = 4});
  cfg.train.total_steps = 2000;
  auto model = ReconstructionModel<float>::build(cfg.train);
  const auto data = Dataset<float>::load(cfg.dataset_dir);
  ThreadPool pool(ThreadPool::default_workers());
  Trainer<float> trainer(*model, data, pool);

  const int out_w = model->mask->output_layer().weight_handle();
  const int out_b = model->mask->output_layer().bias_handle();
  const int width = model->mask->output_layer().in_dim();
  const int levels = cfg.train.sdf_levels;
  int64_t violations = 0;
  int64_t checks = 0;
  trainer.post_backward_hook = [&](Trainer<float>& t) {
    const int active = t.state().active_levels;
    const auto wg = t.model().store.grads(out_w);
    const auto bg = t.model().store.grads(out_b);
    for (int l = active; l < levels; ++l) {
      ++checks;
      if (bg[static_cast<size_t>(l)] != 0.0f) ++violations;
      for (int i = 0; i < width; ++i) {
        if (wg[static_cast<size_t>(l * width + i)] != 0.0f) ++violations;
      }
    }
  };
  for (int i = 0; i < 2000; ++i) trainer.step();
  std::snprintf(buf, sizeof(buf),
                "%lld inactive-level rows checked across 2000 steps, %lld nonzero gradients",
                static_cast<long long>(checks), static_cast<long long>(violations));
  CriterionResult r;
  r.pass = violations == 0 && checks > 0;
  r.detail = buf;
  return r;
}
Register reg4(4, "exact gradient blocking of inactive mask levels (2k-step run)", c4);

// ---- c5: regularizer oracles ----

CriterionResult c5(const Context&) {
  AnalyticScene sphere = AnalyticScene::by_name("sphere");
  auto field = [&](const Vec3d& x) { return sphere.sdf(x); };

  Rng rng(31);
  MatX<double> grads(3, 1000);
  int got = 0;
  while (got < 1000) {
    Vec3d x(rng.next_range(-0.9, 0.9), rng.next_range(-0.9, 0.9), rng.next_range(-0.9, 0.9));
    if (x.norm() < 0.05) continue;
    grads.col(got++) = central_gradient(field, x, 1e-3);
  }
  const double eik = loss_eikonal<double>(grads);

  const double quad = stencil_laplacian([](const Vec3d& x) { return x.squaredNorm(); },
                                        Vec3d(0.25, 0.5, 0.125), 0.25);
  const double lap_sphere = stencil_laplacian(field, Vec3d(0.4, 0.0, 0.0), 1e-3);

  std::snprintf(buf, sizeof(buf),
                "eikonal(sphere, eps 1e-3) = %.3g; laplacian(|x|^2) = %.17g; "
                "laplacian(sphere at 0.4) = %.6f",
                eik, quad, lap_sphere);
  CriterionResult r;
  r.pass = eik < 1e-6 && quad == 6.0 && std::abs(lap_sphere - 5.0) / 5.0 < 0.01;
  r.detail = buf;
  return r;
}
Register reg5(5, "regularizer oracles (eikonal and discrete laplacian)", c5);

// ---- c9: grid-accelerated chamfer equals brute force ----

CriterionResult c9(const Context&) {
  Rng rng(77);
  std::vector<Vec3d> a, b;
  std::vector<std::array<double, 3>> ao, bo;
  for (int i = 0; i < 200; ++i) {
    const Vec3d pa(rng.next_range(-1, 1), rng.next_range(-1, 1), rng.next_range(-1, 1));
    const Vec3d pb(rng.next_range(-0.8, 1.1), rng.next_range(-1.2, 0.6), rng.next_range(-1, 1));
    a.push_back(pa);
    b.push_back(pb);
    ao.push_back({pa.x(), pa.y(), pa.z()});
    bo.push_back({pb.x(), pb.y(), pb.z()});
  }
  const double fast = chamfer_l1(a, b);
  const double brute = oracles::chamfer_bruteforce(ao, bo);
  std::snprintf(buf, sizeof(buf), "grid %.17g vs brute force %.17g, |diff| = %.3g", fast, brute,
                std::abs(fast - brute));
  CriterionResult r;
  r.pass = std::abs(fast - brute) < 1e-12;
  r.detail = buf;
  return r;
}
Register reg9(9, "chamfer evaluator exactness (grid vs O(n^2) brute force)", c9);

// ---- c10: determinism of every command in single-worker mode ----

CriterionResult c10(const Context& ctx) {
  const fs::path root = ctx.runs_dir / "scratch_c10";
  fs::remove_all(root);
  fs::create_directories(root);
  const auto p = [&](const std::string& rel) { return (root / rel).string(); };

  std::vector<std::string> problems;
  auto expect_same = [&](const fs::path& x, const fs::path& y, const std::string& what) {
    const std::string sx = slurp(x), sy = slurp(y);
    if (sx.empty() || sx != sy) problems.push_back(what);
  };

  // generate twice.
  if (run_cli(ctx, "generate --scene sphere-box --views 6 --res 32 --seed 9 --out " + p("gen_a"),
              true) != 0 ||
      run_cli(ctx, "generate --scene sphere-box --views 6 --res 32 --seed 9 --out " + p("gen_b"),
              true) != 0) {
    problems.push_back("generate failed");
  } else {
    for (const auto& e : fs::directory_iterator(p("gen_a"))) {
      expect_same(e.path(), fs::path(p("gen_b")) / e.path().filename(),
                  "generate:" + e.path().filename().string());
    }
  }

  // Small but real config reused by both invocations of each command.
  const std::string overrides =
      " --set sdf_levels=4 --set sdf_n_min=8 --set sdf_n_max=32 --set sdf_feature_dim=2"
      " --set sdf_log2_table=12 --set mask_levels=2 --set mask_d_min=3 --set mask_d_max=4"
      " --set mask_log2_table=10 --set sdf_hidden_width=16 --set geo_feature_dim=8"
      " --set rgb_hidden_width=16 --set rgb_hidden_layers=2 --set rays_per_step=32"
      " --set samples_per_ray=16 --set l_init=2 --set unveil_interval=25"
      " --set mesh_resolution=32 --set eval_points=500";
  const std::string train_cmd = "train --dataset " + p("gen_a") + " --out " + p("run") +
                                " --steps 80 --seed 6" + overrides;
  // Repeat the identical command into the identical out_dir; snapshot between.
  if (run_cli(ctx, train_cmd, true) != 0) problems.push_back("train A failed");
  fs::copy_file(p("run") + "/checkpoint_00000080.bin", p("ckpt_a.bin"));
  fs::copy_file(p("run") + "/metrics.csv", p("metrics_a.csv"));
  fs::remove_all(p("run"));
  if (run_cli(ctx, train_cmd, true) != 0) problems.push_back("train B failed");
  expect_same(p("run") + "/checkpoint_00000080.bin", p("ckpt_a.bin"), "train:checkpoint");
  expect_same(p("run") + "/metrics.csv", p("metrics_a.csv"), "train:metrics");

  const std::string ckpt = p("run") + "/checkpoint_latest.bin";
  // extract-mesh twice (obj and ply).
  run_cli(ctx, "extract-mesh --checkpoint " + ckpt + " --out " + p("m_a.obj"), true);
  run_cli(ctx, "extract-mesh --checkpoint " + ckpt + " --out " + p("m_b.obj"), true);
  expect_same(p("m_a.obj"), p("m_b.obj"), "extract-mesh:obj");
  run_cli(ctx, "extract-mesh --format ply --checkpoint " + ckpt + " --out " + p("m_a.ply"), true);
  run_cli(ctx, "extract-mesh --format ply --checkpoint " + ckpt + " --out " + p("m_b.ply"), true);
  expect_same(p("m_a.ply"), p("m_b.ply"), "extract-mesh:ply");

  // render twice.
  run_cli(ctx, "render --checkpoint " + ckpt + " --camera 2 --samples 24 --out " + p("r_a.ppm"),
          true);
  run_cli(ctx, "render --checkpoint " + ckpt + " --camera 2 --samples 24 --out " + p("r_b.ppm"),
          true);
  expect_same(p("r_a.ppm"), p("r_b.ppm"), "render");

  // eval twice.
  run_cli(ctx, "eval --checkpoint " + ckpt + " --scene sphere-box --points 400 --seed 3 --out " +
                   p("e_a.json"),
          true);
  run_cli(ctx, "eval --checkpoint " + ckpt + " --scene sphere-box --points 400 --seed 3 --out " +
                   p("e_b.json"),
          true);
  expect_same(p("e_a.json"), p("e_b.json"), "eval");

  // dump-masks twice.
  run_cli(ctx, "dump-masks --checkpoint " + ckpt + " --camera 1 --samples 16 --out " + p("dm_a"),
          true);
  run_cli(ctx, "dump-masks --checkpoint " + ckpt + " --camera 1 --samples 16 --out " + p("dm_b"),
          true);
  int mask_images = 0;
  for (const auto& e : fs::directory_iterator(p("dm_a"))) {
    expect_same(e.path(), fs::path(p("dm_b")) / e.path().filename(),
                "dump-masks:" + e.path().filename().string());
    ++mask_images;
  }
  if (mask_images == 0) problems.push_back("dump-masks produced nothing");

  CriterionResult r;
  r.pass = problems.empty();
  if (problems.empty()) {
    r.detail = "generate/train/extract-mesh/render/eval/dump-masks all byte-identical on repeat";
  } else {
    std::string d = "mismatches:";
    for (const auto& s : problems) d += " " + s;
    r.detail = d;
  }
  return r;
}
Register reg10(10, "single-worker determinism of every command", c10);

}  // namespace
}  // namespace acceptance
