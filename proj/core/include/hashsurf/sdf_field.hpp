#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hashsurf/common.hpp"
#include "hashsurf/hash_grid.hpp"
#include "hashsurf/nn.hpp"
#include "hashsurf/spatial_mask.hpp"

namespace hashsurf {

// Step size for numerical gradients: the cell size of the finest active
// level in the [-1,1] domain.
double epsilon_for_level(int active_levels, const std::vector<GridLevelSpec>& levels);

// Central differences of an arbitrary scalar field; F is point -> scalar.
template <class F>
Vec3d central_gradient(F&& field, const Vec3d& x, double eps) {
  Vec3d g;
  for (int k = 0; k < 3; ++k) {
    Vec3d a = x, b = x;
    a[k] += eps;
    b[k] -= eps;
    g[k] = (field(a) - field(b)) / (2.0 * eps);
  }
  return g;
}

// 7-point stencil Laplacian of an arbitrary scalar field.
template <class F>
double stencil_laplacian(F&& field, const Vec3d& x, double eps) {
  const double c = field(x);
  double acc = 0.0;
  for (int k = 0; k < 3; ++k) {
    Vec3d a = x, b = x;
    a[k] += eps;
    b[k] -= eps;
    acc += field(a) + field(b) - 2.0 * c;
  }
  return acc / (eps * eps);
}

template <class S>
struct SdfCache {
  EncodeCache<S> grid;
  MaskCache<S> mask;
  MatX<S> f;           // raw grid encoding, (L*F) x B
  MatX<S> s;           // masks, L x B (empty unless learned)
  MatX<S> h;           // masked encoding fed to the MLP
  DenseCache<S> hidden;
  MatX<S> hidden_out;  // post-activation, W x B
  MatX<S> pts;         // 3 x B (skip-connection input)
  int active_levels = 0;
  bool valid = false;
};

// SDF head assembly: masked multi-resolution encoding with a coordinate skip
// connection into a one-hidden-layer softplus MLP, emitting the SDF scalar
// for every point and a geometry feature for selected points.
template <class S>
class SdfNetwork {
 public:
  struct Config {
    int hidden_width = 256;
    int geo_feature_dim = 256;
    double softplus_beta = 100.0;
    double geo_init_radius = 0.5;
  };

  SdfNetwork(ParameterStore<S>& store, const std::string& prefix, const Config& cfg,
             MultiResHashGrid<S>* grid, SpatialMaskField<S>* mask, MaskMode mask_mode,
             Rng& init_rng);

  int geo_feature_dim() const { return geo_dim_; }
  MaskMode mask_mode() const { return mask_mode_; }
  const MultiResHashGrid<S>& grid() const { return *grid_; }

  // pts is 3 x B. Returns SDF values for every column; geometry features are
  // computed lazily via forward_features.
  void forward(const ParameterStore<S>& store, const MatX<S>& pts, int active_levels,
               SdfCache<S>& cache, VecX<S>& sdf) const;
  // Geometry features for the given cached columns (G x cols.size()).
  void forward_features(const ParameterStore<S>& store, const SdfCache<S>& cache,
                        std::span<const int64_t> cols, MatX<S>& feat) const;
  // d_sdf is 1 x B; d_feat pairs with feature_cols (may both be empty).
  void backward(const ParameterStore<S>& store, const SdfCache<S>& cache, const MatX<S>& d_sdf,
                const MatX<S>& d_feat, std::span<const int64_t> feature_cols,
                GradBuffer<S>& sink) const;

  // Single-point convenience used by extraction, oracles, and diagnostics.
  S value(const ParameterStore<S>& store, const Vec3<S>& x, int active_levels) const;
  // Eq.-style central difference of the full masked pipeline; six offset
  // evaluations around x.
  Vec3<S> numerical_gradient(const ParameterStore<S>& store, const Vec3<S>& x,
                             int active_levels, S eps) const;
  // Sum of the three second differences, reusing the same six offsets plus
  // the center sample.
  S discrete_laplacian(const ParameterStore<S>& store, const Vec3<S>& x, int active_levels,
                       S eps) const;

  int sdf_weight_handle() const { return sdf_w_; }
  int sdf_bias_handle() const { return sdf_b_; }
  int feat_weight_handle() const { return feat_w_; }
  int feat_bias_handle() const { return feat_b_; }
  const DenseLayer<S>& hidden_layer() const { return hidden_; }

 private:
  MultiResHashGrid<S>* grid_ = nullptr;
  SpatialMaskField<S>* mask_ = nullptr;
  MaskMode mask_mode_ = MaskMode::Disabled;
  DenseLayer<S> hidden_;
  int sdf_w_ = -1, sdf_b_ = -1;    // 1 x W head
  int feat_w_ = -1, feat_b_ = -1;  // G x W head
  int geo_dim_ = 0;
  int width_ = 0;
};

}  // namespace hashsurf
