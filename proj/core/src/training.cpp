#include "hashsurf/training.hpp"

#include <cmath>

namespace hashsurf {

template <class S>
double loss_rgb(const MatX<S>& rendered, const MatX<S>& target) {
  if (rendered.rows() != 3 || rendered.rows() != target.rows() ||
      rendered.cols() != target.cols()) {
    throw ConfigError("loss_rgb shape mismatch");
  }
  if (rendered.cols() == 0) throw ConfigError("loss_rgb on an empty batch");
  double acc = 0.0;
  for (Eigen::Index c = 0; c < rendered.cols(); ++c) {
    for (int k = 0; k < 3; ++k) {
      acc += std::abs(static_cast<double>(rendered(k, c)) - static_cast<double>(target(k, c)));
    }
  }
  return acc / (3.0 * static_cast<double>(rendered.cols()));
}

template <class S>
double loss_eikonal(const MatX<S>& gradients) {
  if (gradients.rows() != 3) throw ConfigError("loss_eikonal expects 3 x N gradients");
  if (gradients.cols() == 0) throw ConfigError("loss_eikonal on an empty batch");
  double acc = 0.0;
  for (Eigen::Index c = 0; c < gradients.cols(); ++c) {
    const double n = gradients.col(c).template cast<double>().norm();
    acc += (n - 1.0) * (n - 1.0);
  }
  return acc / static_cast<double>(gradients.cols());
}

template <class S>
double loss_curvature(const VecX<S>& laplacians) {
  if (laplacians.size() == 0) throw ConfigError("loss_curvature on an empty batch");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < laplacians.size(); ++i) {
    acc += std::abs(static_cast<double>(laplacians[i]));
  }
  return acc / static_cast<double>(laplacians.size());
}

double total_loss(double rgb, double eik, double curv, double w_eik, double w_curv) {
  return rgb + w_eik * eik + w_curv * curv;
}

Schedule unveil_schedule(int64_t step, int l_init, int64_t unveil_interval,
                         const std::vector<GridLevelSpec>& levels) {
  if (step < 0) throw ConfigError("negative step");
  const int L = static_cast<int>(levels.size());
  Schedule s;
  s.active_levels = static_cast<int>(
      std::min<int64_t>(l_init + step / unveil_interval, static_cast<int64_t>(L)));
  s.epsilon = epsilon_for_level(s.active_levels, levels);
  return s;
}

double lr_schedule(int64_t step, double lr_max, int64_t warmup, int64_t total) {
  if (warmup > 0 && step < warmup) {
    return lr_max * static_cast<double>(step + 1) / static_cast<double>(warmup);
  }
  const double t = static_cast<double>(step - warmup);
  const double span = std::max<double>(1.0, static_cast<double>(total - warmup));
  return lr_max * 0.5 * (1.0 + std::cos(M_PI * std::min(1.0, t / span)));
}

template <class S>
std::unique_ptr<ReconstructionModel<S>> ReconstructionModel<S>::build(const TrainConfig& cfg) {
  cfg.validate();
  auto model = std::make_unique<ReconstructionModel<S>>();
  model->cfg = cfg;
  auto& store = model->store;

  typename MultiResHashGrid<S>::Config gc;
  gc.levels = cfg.sdf_levels;
  gc.n_min = cfg.sdf_n_min;
  gc.n_max = cfg.sdf_n_max;
  gc.feature_dim = cfg.sdf_feature_dim;
  gc.table_size = int64_t(1) << cfg.sdf_log2_table;
  Rng grid_rng(derive_seed(cfg.seed, "init/sdf-grid"));
  model->grid =
      std::make_unique<MultiResHashGrid<S>>(store, "sdf_grid", gc, grid_rng, cfg.feature_init_scale);

  if (cfg.mask_mode != MaskMode::Disabled) {
    typename SpatialMaskField<S>::Config mc;
    mc.grid.levels = cfg.mask_levels;
    mc.grid.n_min = 1 << cfg.mask_d_min;
    mc.grid.n_max = 1 << cfg.mask_d_max;
    mc.grid.feature_dim = cfg.mask_feature_dim;
    mc.grid.table_size = int64_t(1) << cfg.mask_log2_table;
    mc.hidden_width = cfg.mask_hidden_width;
    mc.sdf_levels = cfg.sdf_levels;
    mc.activation = cfg.mask_activation;
    mc.softplus_beta = cfg.softplus_beta;
    mc.output_bias_init = cfg.mask_bias_init;
    mc.feature_init_scale = cfg.feature_init_scale;
    Rng mask_rng(derive_seed(cfg.seed, "init/mask"));
    model->mask = std::make_unique<SpatialMaskField<S>>(store, "mask", mc, mask_rng);
  }

  typename SdfNetwork<S>::Config sc;
  sc.hidden_width = cfg.sdf_hidden_width;
  sc.geo_feature_dim = cfg.geo_feature_dim;
  sc.softplus_beta = cfg.softplus_beta;
  sc.geo_init_radius = cfg.geo_init_radius;
  Rng sdf_rng(derive_seed(cfg.seed, "init/sdf-mlp"));
  model->sdf = std::make_unique<SdfNetwork<S>>(store, "sdf_mlp", sc, model->grid.get(),
                                               model->mask.get(), cfg.mask_mode, sdf_rng);

  typename RadianceNetwork<S>::Config rc;
  rc.hidden_width = cfg.rgb_hidden_width;
  rc.hidden_layers = cfg.rgb_hidden_layers;
  rc.geo_feature_dim = cfg.geo_feature_dim;
  Rng rgb_rng(derive_seed(cfg.seed, "init/rgb-mlp"));
  model->rgb = std::make_unique<RadianceNetwork<S>>(store, "rgb_mlp", rc, rgb_rng);

  model->opacity = OpacityConverter<S>(store, "opacity.zeta", cfg.zeta_init);
  return model;
}

template <class S>
BatchSdfFn<S> ReconstructionModel<S>::sdf_fn(int active_levels) const {
  return [this, active_levels](const MatX<S>& pts, VecX<S>& sdf) {
    SdfCache<S> cache;
    this->sdf->forward(this->store, pts, active_levels, cache, sdf);
  };
}

template <class S>
BatchShadeFn<S> ReconstructionModel<S>::shade_fn(int active_levels, S eps) const {
  return [this, active_levels, eps](const MatX<S>& pts, const MatX<S>& dirs, MatX<S>& colors) {
    const int64_t n = pts.cols();
    const int G = this->cfg.geo_feature_dim;

    // Stencil batch: center plus six axis offsets per point.
    MatX<S> stencil(3, n * 7);
    for (int64_t i = 0; i < n; ++i) {
      stencil.col(7 * i) = pts.col(i);
      for (int k = 0; k < 3; ++k) {
        Vec3<S> a = pts.col(i), b = pts.col(i);
        a[k] += eps;
        b[k] -= eps;
        stencil.col(7 * i + 1 + 2 * k) = a;
        stencil.col(7 * i + 2 + 2 * k) = b;
      }
    }
    SdfCache<S> cache;
    VecX<S> sdf_vals;
    this->sdf->forward(this->store, stencil, active_levels, cache, sdf_vals);
    std::vector<int64_t> centers(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) centers[static_cast<size_t>(i)] = 7 * i;
    MatX<S> feats;
    this->sdf->forward_features(this->store, cache, centers, feats);

    MatX<S> rgb_in(this->rgb->input_dim(), n);
    for (int64_t i = 0; i < n; ++i) {
      Vec3<S> g;
      for (int k = 0; k < 3; ++k) {
        g[k] = (sdf_vals[7 * i + 1 + 2 * k] - sdf_vals[7 * i + 2 + 2 * k]) / (S(2) * eps);
      }
      const S norm = std::max(g.norm(), S(1e-12));
      rgb_in.template block<3, 1>(0, i) = pts.col(i);
      S sh[kShDim];
      sh_encode<S>(dirs.col(i), sh);
      for (int k = 0; k < kShDim; ++k) rgb_in(3 + k, i) = sh[k];
      rgb_in.template block<3, 1>(RadianceNetwork<S>::normal_offset(), i) = g / norm;
      rgb_in.block(this->rgb->feature_offset(), i, G, 1) = feats.col(i);
    }
    typename RadianceNetwork<S>::Cache rgb_cache;
    this->rgb->forward(this->store, rgb_in, rgb_cache, colors);
  };
}

template <class S>
void ReconstructionModel<S>::mask_band_max(const MatX<S>& pts, int band_lo, int band_hi,
                                           VecX<S>& out) const {
  const int L = level_count();
  if (band_lo < 1 || band_hi > L || band_lo > band_hi) {
    throw ConfigError("mask band out of range");
  }
  out.resize(pts.cols());
  if (cfg.mask_mode == MaskMode::Learned) {
    MaskCache<S> cache;
    MatX<S> s;
    mask->forward(store, pts, cache, s);
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
      out[i] = s.col(i).segment(band_lo - 1, band_hi - band_lo + 1).maxCoeff();
    }
  } else {
    const S v = cfg.mask_mode == MaskMode::PinnedZero ? S(0) : S(1);
    out.setConstant(v);
  }
}

template <class S>
BatchFieldFn ReconstructionModel<S>::field_fn() const {
  return [this](const std::vector<Vec3d>& pts, std::vector<double>& values) {
    MatX<S> p(3, static_cast<Eigen::Index>(pts.size()));
    for (size_t i = 0; i < pts.size(); ++i) {
      p.col(static_cast<Eigen::Index>(i)) = pts[i].cast<S>();
    }
    SdfCache<S> cache;
    VecX<S> sdf;
    this->sdf->forward(this->store, p, this->level_count(), cache, sdf);
    values.resize(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) {
      values[i] = static_cast<double>(sdf[static_cast<Eigen::Index>(i)]);
    }
  };
}

template <class S>
void Dataset<S>::lookup(int64_t pixel_index, int& view, int& px, int& py) const {
  const int64_t per_view = static_cast<int64_t>(manifest.width) * manifest.height;
  view = static_cast<int>(pixel_index / per_view);
  const int64_t rem = pixel_index % per_view;
  py = static_cast<int>(rem / manifest.width);
  px = static_cast<int>(rem % manifest.width);
}

template <class S>
Vec3<S> Dataset<S>::target(int view, int px, int py) const {
  const float* p = images[static_cast<size_t>(view)].pixel(px, py);
  return Vec3<S>(static_cast<S>(p[0]), static_cast<S>(p[1]), static_cast<S>(p[2]));
}

template <class S>
Dataset<S> Dataset<S>::load(const std::filesystem::path& dir) {
  Dataset d;
  d.manifest = SceneManifest::load(dir / "manifest.json");
  d.background = d.manifest.background.cast<S>();
  for (const auto& frame : d.manifest.frames) {
    CameraModel<S> cam;
    cam.fx = static_cast<S>(d.manifest.fx);
    cam.fy = static_cast<S>(d.manifest.fy);
    cam.cx = static_cast<S>(d.manifest.cx);
    cam.cy = static_cast<S>(d.manifest.cy);
    cam.width = d.manifest.width;
    cam.height = d.manifest.height;
    cam.rotation = frame.camera_to_world.template leftCols<3>().template cast<S>();
    cam.center = frame.camera_to_world.col(3).template cast<S>();
    cam.validate();
    d.cameras.push_back(cam);
    Image img = read_ppm(dir / frame.file);
    if (img.width != d.manifest.width || img.height != d.manifest.height) {
      throw ConfigError("image size does not match manifest: " + frame.file);
    }
    d.images.push_back(std::move(img));
  }
  if (d.images.empty()) throw ConfigError("dataset has no frames");
  return d;
}

namespace {

// Per-ray bookkeeping prepared on the driver thread.
template <class S>
struct RayPlan {
  Vec3<S> origin;
  Vec3<S> dir;
  S near = 0, far = 0;
  bool hit = false;
  Vec3<S> target;
  int64_t sample_base = -1;  // global hit-sample index of this ray's first sample
};

}  // namespace

template <class S>
Trainer<S>::Trainer(ReconstructionModel<S>& model, const Dataset<S>& data, ThreadPool& pool)
    : model_(&model), data_(&data), pool_(&pool), rng_(derive_seed(model.cfg.seed, "train")) {
  state_.step = 0;
  const auto sched =
      unveil_schedule(0, model.cfg.l_init, model.cfg.unveil_interval, model.grid->levels());
  state_.active_levels = sched.active_levels;
  state_.epsilon = sched.epsilon;
  const bool single = pool.worker_count() == 1;
  for (int w = 0; w < pool.worker_count(); ++w) {
    worker_grads_.push_back(std::make_unique<GradBuffer<S>>(model.store, single));
  }
}

template <class S>
StepMetrics Trainer<S>::step() {
  auto& model = *model_;
  const TrainConfig& cfg = model.cfg;
  const auto& data = *data_;
  const int R = cfg.rays_per_step;
  const int M = cfg.samples_per_ray;

  const auto sched = unveil_schedule(state_.step, cfg.l_init, cfg.unveil_interval,
                                     model.grid->levels());
  state_.active_levels = sched.active_levels;
  state_.epsilon = sched.epsilon;
  const S eps = static_cast<S>(sched.epsilon);
  const int active = sched.active_levels;

  const double lr = lr_schedule(state_.step, cfg.learning_rate, cfg.lr_warmup_steps,
                                cfg.total_steps);
  double w_curv_eff = 0.0;
  if (cfg.curvature_enabled) {
    w_curv_eff = cfg.w_curv;
    if (cfg.curvature_warmup_steps > 0 && state_.step < cfg.curvature_warmup_steps) {
      w_curv_eff *= static_cast<double>(state_.step) /
                    static_cast<double>(cfg.curvature_warmup_steps);
    }
  }

  // Draw the whole step's randomness on one stream: per ray a pixel index and
  // M stratified offsets. Rays go through pixel centers.
  std::vector<RayPlan<S>> rays(static_cast<size_t>(R));
  std::vector<S> strata(static_cast<size_t>(R) * M);
  const int64_t total_px = data.total_pixels();
  int64_t hit_rays = 0;
  for (int r = 0; r < R; ++r) {
    const int64_t pix = static_cast<int64_t>(rng_.next_below(static_cast<uint64_t>(total_px)));
    for (int i = 0; i < M; ++i) {
      strata[static_cast<size_t>(r) * M + i] = static_cast<S>(rng_.next_double());
    }
    int view, px, py;
    data.lookup(pix, view, px, py);
    RayPlan<S>& plan = rays[static_cast<size_t>(r)];
    data.cameras[static_cast<size_t>(view)].generate_ray(static_cast<S>(px) + S(0.5),
                                                         static_cast<S>(py) + S(0.5),
                                                         plan.origin, plan.dir);
    plan.target = data.target(view, px, py);
    plan.hit = intersect_unit_sphere(plan.origin, plan.dir, plan.near, plan.far);
    if (plan.hit) {
      plan.sample_base = hit_rays * M;
      ++hit_rays;
    }
  }
  const int64_t n_samples = hit_rays * M;

  for (auto& g : worker_grads_) g->zero();

  const S sharpness = model.opacity.sharpness(model.store);
  const S rgb_norm = S(1) / (S(3) * static_cast<S>(R));
  const S eik_norm = n_samples > 0 ? S(cfg.w_eik) / static_cast<S>(n_samples) : S(0);
  const S curv_norm = n_samples > 0 ? static_cast<S>(w_curv_eff) / static_cast<S>(n_samples) : S(0);
  const int G = cfg.geo_feature_dim;

  std::vector<double> part_rgb(static_cast<size_t>(pool_->worker_count()), 0.0);
  std::vector<double> part_eik(static_cast<size_t>(pool_->worker_count()), 0.0);
  std::vector<double> part_curv(static_cast<size_t>(pool_->worker_count()), 0.0);

  pool_->run(R, [&](int worker, int64_t rb, int64_t re) {
    GradBuffer<S>& sink = *worker_grads_[static_cast<size_t>(worker)];
    // Local hit rays in [rb, re).
    std::vector<int64_t> local;
    for (int64_t r = rb; r < re; ++r) {
      if (rays[static_cast<size_t>(r)].hit) {
        local.push_back(r);
      } else {
        const Vec3<S> diff = data.background - rays[static_cast<size_t>(r)].target;
        part_rgb[static_cast<size_t>(worker)] +=
            std::abs(static_cast<double>(diff[0])) + std::abs(static_cast<double>(diff[1])) +
            std::abs(static_cast<double>(diff[2]));
      }
    }
    if (local.empty()) return;
    const int64_t ns = static_cast<int64_t>(local.size()) * M;
    const int64_t np = ns * 7;

    // Sample positions and their stencil offsets.
    MatX<S> pts(3, np);
    std::vector<S> depths(static_cast<size_t>(M));
    for (size_t li = 0; li < local.size(); ++li) {
      const RayPlan<S>& plan = rays[static_cast<size_t>(local[li])];
      stratified_depths<S>(plan.near, plan.far,
                           std::span<const S>(strata.data() + local[li] * M, static_cast<size_t>(M)),
                           depths.data());
      for (int i = 0; i < M; ++i) {
        const int64_t s_idx = static_cast<int64_t>(li) * M + i;
        const Vec3<S> x = plan.origin + depths[static_cast<size_t>(i)] * plan.dir;
        pts.col(7 * s_idx) = x;
        for (int k = 0; k < 3; ++k) {
          Vec3<S> a = x, b = x;
          a[k] += eps;
          b[k] -= eps;
          pts.col(7 * s_idx + 1 + 2 * k) = a;
          pts.col(7 * s_idx + 2 + 2 * k) = b;
        }
      }
    }

    // SDF pipeline over the stencil batch.
    SdfCache<S> cache;
    VecX<S> sdf_vals;
    model.sdf->forward(model.store, pts, active, cache, sdf_vals);
    std::vector<int64_t> centers(static_cast<size_t>(ns));
    for (int64_t i = 0; i < ns; ++i) centers[static_cast<size_t>(i)] = 7 * i;
    MatX<S> feats;
    model.sdf->forward_features(model.store, cache, centers, feats);

    // Numerical gradients, laplacians, unit normals.
    MatX<S> grads(3, ns), normals(3, ns);
    VecX<S> laps(ns), grad_norms(ns);
    for (int64_t i = 0; i < ns; ++i) {
      Vec3<S> g;
      S lap = S(0);
      for (int k = 0; k < 3; ++k) {
        const S sp = sdf_vals[7 * i + 1 + 2 * k];
        const S sm = sdf_vals[7 * i + 2 + 2 * k];
        g[k] = (sp - sm) / (S(2) * eps);
        lap += sp + sm - S(2) * sdf_vals[7 * i];
      }
      lap /= eps * eps;
      grads.col(i) = g;
      laps[i] = lap;
      const S n = g.norm();
      grad_norms[i] = n;
      normals.col(i) = g / std::max(n, S(1e-12));
    }

    // RGB forward over sample centers.
    MatX<S> rgb_in(model.rgb->input_dim(), ns);
    for (size_t li = 0; li < local.size(); ++li) {
      const RayPlan<S>& plan = rays[static_cast<size_t>(local[li])];
      S sh[kShDim];
      sh_encode<S>(plan.dir, sh);
      for (int i = 0; i < M; ++i) {
        const int64_t s_idx = static_cast<int64_t>(li) * M + i;
        rgb_in.template block<3, 1>(0, s_idx) = pts.col(7 * s_idx);
        for (int k = 0; k < kShDim; ++k) rgb_in(3 + k, s_idx) = sh[k];
        rgb_in.template block<3, 1>(RadianceNetwork<S>::normal_offset(), s_idx) =
            normals.col(s_idx);
        rgb_in.block(model.rgb->feature_offset(), s_idx, G, 1) = feats.col(s_idx);
      }
    }
    typename RadianceNetwork<S>::Cache rgb_cache;
    MatX<S> colors;
    model.rgb->forward(model.store, rgb_in, rgb_cache, colors);

    // Compositing, color loss, and the alpha-path backward per ray.
    MatX<S> d_colors = MatX<S>::Zero(3, ns);
    VecX<S> d_sdf_center = VecX<S>::Zero(ns);
    S d_zeta_sharp = S(0);  // dL/d(sharpness)
    std::vector<S> alphas(static_cast<size_t>(M));
    std::vector<S> weights(static_cast<size_t>(M));
    std::vector<S> d_alphas(static_cast<size_t>(M));
    for (size_t li = 0; li < local.size(); ++li) {
      const RayPlan<S>& plan = rays[static_cast<size_t>(local[li])];
      const int64_t base = static_cast<int64_t>(li) * M;
      for (int i = 0; i < M; ++i) {
        const S si = sdf_vals[7 * (base + i)];
        const S sn = (i + 1 < M) ? sdf_vals[7 * (base + i + 1)] : si;
        alphas[static_cast<size_t>(i)] = OpacityConverter<S>::alpha(sharpness, si, sn);
      }
      const MatX<S> ray_colors = colors.middleCols(base, M);
      Vec3<S> c_hat;
      composite<S>(alphas, ray_colors, data.background, c_hat, weights);

      const Vec3<S> diff = c_hat - plan.target;
      part_rgb[static_cast<size_t>(worker)] += std::abs(static_cast<double>(diff[0])) +
                                               std::abs(static_cast<double>(diff[1])) +
                                               std::abs(static_cast<double>(diff[2]));
      Vec3<S> d_c;
      for (int k = 0; k < 3; ++k) {
        d_c[k] = diff[k] > S(0) ? rgb_norm : (diff[k] < S(0) ? -rgb_norm : S(0));
      }
      MatX<S> d_ray_colors;
      composite_backward<S>(alphas, ray_colors, data.background, d_c, d_alphas, d_ray_colors);
      d_colors.middleCols(base, M) = d_ray_colors;

      for (int i = 0; i < M; ++i) {
        if (i + 1 >= M) continue;  // duplicated-last-sample pair has alpha = 0
        const S si = sdf_vals[7 * (base + i)];
        const S sn = sdf_vals[7 * (base + i + 1)];
        S d_si, d_sn, d_sharp;
        OpacityConverter<S>::alpha_backward(sharpness, si, sn, d_alphas[static_cast<size_t>(i)],
                                            d_si, d_sn, d_sharp);
        d_sdf_center[base + i] += d_si;
        d_sdf_center[base + i + 1] += d_sn;
        d_zeta_sharp += d_sharp;
      }
    }

    // RGB backward: color gradients into the net, normal/feature gradients out.
    MatX<S> d_rgb_in;
    model.rgb->backward(model.store, rgb_cache, d_colors, sink, d_rgb_in);

    // Eikonal + curvature losses and the full d_sdf assembly.
    MatX<S> d_sdf = MatX<S>::Zero(1, np);
    MatX<S> d_feat(G, ns);
    for (int64_t i = 0; i < ns; ++i) {
      const S n = grad_norms[i];
      part_eik[static_cast<size_t>(worker)] +=
          (static_cast<double>(n) - 1.0) * (static_cast<double>(n) - 1.0);
      part_curv[static_cast<size_t>(worker)] += std::abs(static_cast<double>(laps[i]));

      Vec3<S> d_g = Vec3<S>::Zero();
      if (n > S(1e-12)) {
        const Vec3<S> nh = normals.col(i);
        d_g += eik_norm * S(2) * (n - S(1)) * nh;
        // Unit-normal backward from the RGB input path.
        const Vec3<S> d_nh =
            d_rgb_in.template block<3, 1>(RadianceNetwork<S>::normal_offset(), i);
        d_g += (d_nh - nh * nh.dot(d_nh)) / n;
      }
      const S d_lap = laps[i] > S(0) ? curv_norm : (laps[i] < S(0) ? -curv_norm : S(0));

      d_sdf(0, 7 * i) = d_sdf_center[i] - S(6) * d_lap / (eps * eps);
      for (int k = 0; k < 3; ++k) {
        d_sdf(0, 7 * i + 1 + 2 * k) = d_g[k] / (S(2) * eps) + d_lap / (eps * eps);
        d_sdf(0, 7 * i + 2 + 2 * k) = -d_g[k] / (S(2) * eps) + d_lap / (eps * eps);
      }
      d_feat.col(i) = d_rgb_in.block(model.rgb->feature_offset(), i, G, 1);
    }

    model.sdf->backward(model.store, cache, d_sdf, d_feat, centers, sink);
    // d(sharpness) -> d(zeta) through s = exp(10 zeta).
    sink.grad(model.opacity.zeta_handle)[0] += d_zeta_sharp * S(10) * sharpness;
  });

  // Deterministic merge in worker order.
  if (!worker_grads_[0]->aliases_store()) {
    model.store.zero_grad();
    for (auto& g : worker_grads_) g->merge_into(model.store);
  }

  if (post_backward_hook) post_backward_hook(*this);

  double rgb_sum = 0.0, eik_sum = 0.0, curv_sum = 0.0;
  for (int w = 0; w < pool_->worker_count(); ++w) {
    rgb_sum += part_rgb[static_cast<size_t>(w)];
    eik_sum += part_eik[static_cast<size_t>(w)];
    curv_sum += part_curv[static_cast<size_t>(w)];
  }
  StepMetrics m;
  m.loss_rgb = rgb_sum / (3.0 * R);
  m.loss_eik = n_samples > 0 ? eik_sum / static_cast<double>(n_samples) : 0.0;
  m.loss_curv = n_samples > 0 ? curv_sum / static_cast<double>(n_samples) : 0.0;
  m.total = m.loss_rgb + cfg.w_eik * m.loss_eik + w_curv_eff * m.loss_curv;
  m.active_levels = active;
  m.epsilon = sched.epsilon;
  m.sharpness = static_cast<double>(sharpness);
  m.lr = lr;

  if (!std::isfinite(m.total)) {
    m.skipped = true;
    ++state_.skip_streak;
    ++state_.total_skips;
    if (state_.skip_streak > kMaxConsecutiveSkips) {
      throw DivergenceError("aborting: " + std::to_string(state_.skip_streak) +
                            " consecutive non-finite steps");
    }
  } else {
    state_.skip_streak = 0;
    typename ParameterStore<S>::AdamConfig adam;
    adam.lr = static_cast<S>(lr);
    adam.beta1 = static_cast<S>(cfg.adam_beta1);
    adam.beta2 = static_cast<S>(cfg.adam_beta2);
    adam.eps = static_cast<S>(cfg.adam_eps);
    model.store.adam_step(adam);
  }
  ++state_.step;
  return m;
}

template double loss_rgb<float>(const MatX<float>&, const MatX<float>&);
template double loss_rgb<double>(const MatX<double>&, const MatX<double>&);
template double loss_eikonal<float>(const MatX<float>&);
template double loss_eikonal<double>(const MatX<double>&);
template double loss_curvature<float>(const VecX<float>&);
template double loss_curvature<double>(const VecX<double>&);
template struct ReconstructionModel<float>;
template struct ReconstructionModel<double>;
template struct Dataset<float>;
template struct Dataset<double>;
template class Trainer<float>;
template class Trainer<double>;

}  // namespace hashsurf
