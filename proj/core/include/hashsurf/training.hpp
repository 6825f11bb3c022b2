#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include "hashsurf/config.hpp"
#include "hashsurf/meshing.hpp"
#include "hashsurf/parallel.hpp"
#include "hashsurf/radiance.hpp"
#include "hashsurf/renderer.hpp"
#include "hashsurf/scene_oracle.hpp"
#include "hashsurf/sdf_field.hpp"

namespace hashsurf {

// Pixel-wise L1 (Eq.-style color loss): mean over rays and channels.
template <class S>
double loss_rgb(const MatX<S>& rendered, const MatX<S>& target);
// Mean of (|grad| - 1)^2 over the batch.
template <class S>
double loss_eikonal(const MatX<S>& gradients);
// Mean of |laplacian| over the batch.
template <class S>
double loss_curvature(const VecX<S>& laplacians);
// L = L_rgb + w_eik * L_eik + w_curv * L_curv.
double total_loss(double rgb, double eik, double curv, double w_eik, double w_curv);

struct Schedule {
  int active_levels = 0;
  double epsilon = 0.0;
};
// active = min(l_init + step / unveil_interval, levels); epsilon follows the
// finest active level.
Schedule unveil_schedule(int64_t step, int l_init, int64_t unveil_interval,
                         const std::vector<GridLevelSpec>& levels);

// Cosine-decayed learning rate with a linear warmup.
double lr_schedule(int64_t step, double lr_max, int64_t warmup, int64_t total);

// The full trainable assembly; all parameters live in one store.
template <class S>
struct ReconstructionModel {
  TrainConfig cfg;
  ParameterStore<S> store;
  std::unique_ptr<MultiResHashGrid<S>> grid;
  std::unique_ptr<SpatialMaskField<S>> mask;  // null when mask_mode == Disabled
  std::unique_ptr<SdfNetwork<S>> sdf;
  std::unique_ptr<RadianceNetwork<S>> rgb;
  OpacityConverter<S> opacity;

  static std::unique_ptr<ReconstructionModel> build(const TrainConfig& cfg);

  int level_count() const { return grid->level_count(); }
  // Batched SDF evaluation with live masks; for meshing and rendering.
  BatchSdfFn<S> sdf_fn(int active_levels) const;
  // Full shading (numerical-gradient normals + geometry features + RGB MLP).
  BatchShadeFn<S> shade_fn(int active_levels, S eps) const;
  // Per-point maximum of s_l over a 1-based inclusive level band.
  void mask_band_max(const MatX<S>& pts, int band_lo, int band_hi, VecX<S>& out) const;
  // Double-precision field adapter for marching cubes.
  BatchFieldFn field_fn() const;
};

template <class S>
struct Dataset {
  SceneManifest manifest;
  std::vector<CameraModel<S>> cameras;
  std::vector<Image> images;
  Vec3<S> background = Vec3<S>::Zero();

  int64_t total_pixels() const {
    return static_cast<int64_t>(images.size()) * manifest.width * manifest.height;
  }
  void lookup(int64_t pixel_index, int& view, int& px, int& py) const;
  Vec3<S> target(int view, int px, int py) const;
  static Dataset load(const std::filesystem::path& dir);
};

struct TrainState {
  int64_t step = 0;  // next step to run
  int active_levels = 0;
  double epsilon = 0.0;
  int64_t skip_streak = 0;
  int64_t total_skips = 0;
};

struct StepMetrics {
  double loss_rgb = 0.0;
  double loss_eik = 0.0;
  double loss_curv = 0.0;
  double total = 0.0;
  int active_levels = 0;
  double epsilon = 0.0;
  double sharpness = 0.0;
  double lr = 0.0;
  bool skipped = false;
};

// One-optimizer-step training driver. Rays are drawn on a single RNG stream
// before workers fan out, so the trajectory in single-worker mode is a pure
// function of (config, seed).
template <class S>
class Trainer {
 public:
  Trainer(ReconstructionModel<S>& model, const Dataset<S>& data, ThreadPool& pool);

  StepMetrics step();

  const TrainState& state() const { return state_; }
  Rng& rng() { return rng_; }
  void set_rng(const Rng& r) { rng_ = r; }
  void set_step(int64_t step) { state_.step = step; }
  ReconstructionModel<S>& model() { return *model_; }

  // Test hook: runs after gradients are merged, before the Adam update.
  std::function<void(Trainer&)> post_backward_hook;

  static constexpr int64_t kMaxConsecutiveSkips = 100;

 private:
  ReconstructionModel<S>* model_;
  const Dataset<S>* data_;
  ThreadPool* pool_;
  Rng rng_;
  TrainState state_;
  std::vector<std::unique_ptr<GradBuffer<S>>> worker_grads_;
};

}  // namespace hashsurf
