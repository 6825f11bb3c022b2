#include "hashsurf/sdf_field.hpp"

#include <cmath>

namespace hashsurf {

double epsilon_for_level(int active_levels, const std::vector<GridLevelSpec>& levels) {
  if (active_levels < 1 || active_levels > static_cast<int>(levels.size())) {
    throw ConfigError("active_levels out of range");
  }
  return 2.0 / levels[static_cast<size_t>(active_levels) - 1].resolution;
}

namespace {

// Quasi-uniform directions (Fibonacci sphere) for the hidden-layer coordinate
// weights. Compared to i.i.d. gaussian directions this keeps the initial
// level set much closer to an actual sphere at small hidden widths.
Vec3d fibonacci_direction(int i, int n) {
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  const double z = 1.0 - 2.0 * (i + 0.5) / n;
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  const double a = golden * i;
  return {r * std::cos(a), r * std::sin(a), z};
}

}  // namespace

template <class S>
SdfNetwork<S>::SdfNetwork(ParameterStore<S>& store, const std::string& prefix,
                          const Config& cfg, MultiResHashGrid<S>* grid,
                          SpatialMaskField<S>* mask, MaskMode mask_mode, Rng& init_rng)
    : grid_(grid),
      mask_(mask),
      mask_mode_(mask_mode),
      geo_dim_(cfg.geo_feature_dim),
      width_(cfg.hidden_width) {
  if (mask_mode != MaskMode::Disabled && mask == nullptr) {
    throw ConfigError("mask mode requires a mask field");
  }
  const int in_dim = 3 + grid->output_dim();
  hidden_ = DenseLayer<S>(store, prefix + ".hidden", in_dim, cfg.hidden_width,
                          Activation::Softplus, static_cast<S>(cfg.softplus_beta));
  sdf_w_ = store.add(prefix + ".sdf_head.weight", cfg.hidden_width);
  sdf_b_ = store.add(prefix + ".sdf_head.bias", 1);
  feat_w_ = store.add(prefix + ".feat_head.weight",
                      static_cast<int64_t>(cfg.geo_feature_dim) * cfg.hidden_width);
  feat_b_ = store.add(prefix + ".feat_head.bias", cfg.geo_feature_dim);

  // Geometric initialization: the network starts out approximating
  // |x| - geo_init_radius. Encoding columns start at zero so the early field
  // is carried by the coordinate skip alone.
  const int w = cfg.hidden_width;
  auto hw = store.values(hidden_.weight_handle());
  std::fill(hw.begin(), hw.end(), S(0));
  const double wlen = std::sqrt(6.0 / w);
  for (int i = 0; i < w; ++i) {
    const Vec3d dir = fibonacci_direction(i, w) * wlen;
    for (int k = 0; k < 3; ++k) {
      hw[static_cast<size_t>(i) * in_dim + static_cast<size_t>(k)] = static_cast<S>(dir[k]);
    }
  }
  const double head_mean = 4.0 / std::sqrt(6.0 * w);
  fill_normal(store.values(sdf_w_), init_rng, head_mean, 1e-4);
  store.values(sdf_b_)[0] = static_cast<S>(-cfg.geo_init_radius);
  fill_normal(store.values(feat_w_), init_rng, 0.0, std::sqrt(1.0 / w));
}

template <class S>
void SdfNetwork<S>::forward(const ParameterStore<S>& store, const MatX<S>& pts,
                            int active_levels, SdfCache<S>& cache, VecX<S>& sdf) const {
  const int64_t B = pts.cols();
  cache.pts = pts;
  cache.active_levels = active_levels;

  if (mask_mode_ == MaskMode::PinnedZero) {
    cache.h.setZero(grid_->output_dim(), B);
  } else {
    grid_->encode(store, pts, active_levels, cache.grid, cache.f);
    if (mask_mode_ == MaskMode::Learned) {
      mask_->forward(store, pts, cache.mask, cache.s);
      apply_mask(cache.s, cache.f, active_levels, grid_->feature_dim(), cache.h);
    } else {
      // PinnedOne and Disabled: the encoding passes through bitwise.
      cache.h = cache.f;
    }
  }

  MatX<S> in(3 + grid_->output_dim(), B);
  in.topRows(3) = pts;
  in.bottomRows(grid_->output_dim()) = cache.h;
  hidden_.forward(store, in, cache.hidden, cache.hidden_out);

  Eigen::Map<const VecX<S>> wv(store.values(sdf_w_).data(), width_);
  const S b = store.values(sdf_b_)[0];
  sdf.noalias() = cache.hidden_out.transpose() * wv;
  sdf.array() += b;
  cache.valid = true;
}

template <class S>
void SdfNetwork<S>::forward_features(const ParameterStore<S>& store, const SdfCache<S>& cache,
                                     std::span<const int64_t> cols, MatX<S>& feat) const {
  if (!cache.valid) throw ContractError("forward_features before forward");
  using RowMajorMap =
      Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  RowMajorMap wf(store.values(feat_w_).data(), geo_dim_, width_);
  Eigen::Map<const VecX<S>> bf(store.values(feat_b_).data(), geo_dim_);
  MatX<S> hc(width_, static_cast<Eigen::Index>(cols.size()));
  for (size_t i = 0; i < cols.size(); ++i) {
    hc.col(static_cast<Eigen::Index>(i)) = cache.hidden_out.col(cols[i]);
  }
  feat.noalias() = wf * hc;
  feat.colwise() += bf;
}

template <class S>
void SdfNetwork<S>::backward(const ParameterStore<S>& store, const SdfCache<S>& cache,
                             const MatX<S>& d_sdf, const MatX<S>& d_feat,
                             std::span<const int64_t> feature_cols, GradBuffer<S>& sink) const {
  if (!cache.valid) throw ContractError("sdf backward without cached forward");
  const int64_t B = cache.pts.cols();
  const int enc_dim = grid_->output_dim();

  // Head gradients and the hidden-output gradient.
  MatX<S> dH = MatX<S>::Zero(width_, B);
  if (d_sdf.size() > 0) {
    Eigen::Map<const VecX<S>> wv(store.values(sdf_w_).data(), width_);
    Eigen::Map<VecX<S>> dwv(sink.grad(sdf_w_), width_);
    dwv.noalias() += cache.hidden_out * d_sdf.transpose().col(0);
    sink.grad(sdf_b_)[0] += d_sdf.sum();
    dH.noalias() += wv * d_sdf;
  }
  if (d_feat.size() > 0) {
    using RowMajorMap =
        Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    using RowMajorMutMap =
        Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    RowMajorMap wf(store.values(feat_w_).data(), geo_dim_, width_);
    RowMajorMutMap dwf(sink.grad(feat_w_), geo_dim_, width_);
    Eigen::Map<VecX<S>> dbf(sink.grad(feat_b_), geo_dim_);
    MatX<S> hc(width_, static_cast<Eigen::Index>(feature_cols.size()));
    for (size_t i = 0; i < feature_cols.size(); ++i) {
      hc.col(static_cast<Eigen::Index>(i)) = cache.hidden_out.col(feature_cols[i]);
    }
    dwf.noalias() += d_feat * hc.transpose();
    dbf.noalias() += d_feat.rowwise().sum();
    MatX<S> dhc = wf.transpose() * d_feat;
    for (size_t i = 0; i < feature_cols.size(); ++i) {
      dH.col(feature_cols[i]) += dhc.col(static_cast<Eigen::Index>(i));
    }
  }

  MatX<S> d_in;
  hidden_.backward(store, cache.hidden, dH, sink, d_in);
  if (mask_mode_ == MaskMode::PinnedZero) return;  // encoding contributed nothing

  const MatX<S> dh = d_in.bottomRows(enc_dim);
  if (mask_mode_ == MaskMode::Learned) {
    MatX<S> ds, df;
    apply_mask_backward(cache.s, cache.f, dh, cache.active_levels, grid_->feature_dim(), ds, df);
    mask_->backward(store, cache.mask, ds, cache.active_levels, sink);
    grid_->encode_backward(store, cache.grid, df, sink);
  } else {
    grid_->encode_backward(store, cache.grid, dh, sink);
  }
}

template <class S>
S SdfNetwork<S>::value(const ParameterStore<S>& store, const Vec3<S>& x,
                       int active_levels) const {
  MatX<S> pts(3, 1);
  pts.col(0) = x;
  SdfCache<S> cache;
  VecX<S> sdf;
  forward(store, pts, active_levels, cache, sdf);
  return sdf[0];
}

template <class S>
Vec3<S> SdfNetwork<S>::numerical_gradient(const ParameterStore<S>& store, const Vec3<S>& x,
                                          int active_levels, S eps) const {
  if (!(eps > S(0))) throw ConfigError("numerical gradient requires eps > 0");
  MatX<S> pts(3, 6);
  for (int k = 0; k < 3; ++k) {
    Vec3<S> a = x, b = x;
    a[k] += eps;
    b[k] -= eps;
    pts.col(2 * k) = a;
    pts.col(2 * k + 1) = b;
  }
  SdfCache<S> cache;
  VecX<S> sdf;
  forward(store, pts, active_levels, cache, sdf);
  Vec3<S> g;
  for (int k = 0; k < 3; ++k) g[k] = (sdf[2 * k] - sdf[2 * k + 1]) / (S(2) * eps);
  return g;
}

template <class S>
S SdfNetwork<S>::discrete_laplacian(const ParameterStore<S>& store, const Vec3<S>& x,
                                    int active_levels, S eps) const {
  if (!(eps > S(0))) throw ConfigError("discrete laplacian requires eps > 0");
  MatX<S> pts(3, 7);
  pts.col(0) = x;
  for (int k = 0; k < 3; ++k) {
    Vec3<S> a = x, b = x;
    a[k] += eps;
    b[k] -= eps;
    pts.col(1 + 2 * k) = a;
    pts.col(2 + 2 * k) = b;
  }
  SdfCache<S> cache;
  VecX<S> sdf;
  forward(store, pts, active_levels, cache, sdf);
  S acc = S(0);
  for (int k = 0; k < 3; ++k) acc += sdf[1 + 2 * k] + sdf[2 + 2 * k] - S(2) * sdf[0];
  return acc / (eps * eps);
}

template class SdfNetwork<float>;
template class SdfNetwork<double>;

}  // namespace hashsurf
