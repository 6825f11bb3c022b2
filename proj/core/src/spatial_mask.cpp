#include "hashsurf/spatial_mask.hpp"

#include <cmath>

namespace hashsurf {

template <class S>
SpatialMaskField<S>::SpatialMaskField(ParameterStore<S>& store, const std::string& prefix,
                                      const Config& cfg, Rng& init_rng)
    : sdf_levels_(cfg.sdf_levels), activation_(cfg.activation) {
  if (cfg.sdf_levels < 1) throw ConfigError("mask field needs the gated level count");
  grid_ = std::make_unique<MultiResHashGrid<S>>(store, prefix + ".grid", cfg.grid, init_rng,
                                                cfg.feature_init_scale);
  hidden_ = DenseLayer<S>(store, prefix + ".hidden", grid_->output_dim(), cfg.hidden_width,
                          Activation::Softplus, static_cast<S>(cfg.softplus_beta));
  out_ = DenseLayer<S>(store, prefix + ".out", cfg.hidden_width, cfg.sdf_levels,
                       Activation::None);

  const double hidden_std = std::sqrt(2.0 / cfg.hidden_width);
  fill_normal(store.values(hidden_.weight_handle()), init_rng, 0.0, hidden_std);
  const double out_std = std::sqrt(2.0 / cfg.sdf_levels);
  fill_normal(store.values(out_.weight_handle()), init_rng, 0.0, out_std);
  auto bias = store.values(out_.bias_handle());
  for (S& b : bias) b = static_cast<S>(cfg.output_bias_init);
}

template <class S>
void SpatialMaskField<S>::forward(const ParameterStore<S>& store, const MatX<S>& pts,
                                  MaskCache<S>& cache, MatX<S>& s_out) const {
  MatX<S> enc, hid;
  grid_->encode(store, pts, grid_->level_count(), cache.grid, enc);
  hidden_.forward(store, enc, cache.hidden, hid);
  MatX<S> pre;
  out_.forward(store, hid, cache.out, pre);
  if (activation_ == MaskActivation::Sigmoid) {
    s_out = pre.unaryExpr([](S v) { return stable_sigmoid(v); });
  } else {
    // Column-wise softmax with the usual max shift.
    s_out.resize(pre.rows(), pre.cols());
    for (Eigen::Index c = 0; c < pre.cols(); ++c) {
      const S mx = pre.col(c).maxCoeff();
      VecX<S> e = (pre.col(c).array() - mx).exp();
      s_out.col(c) = e / e.sum();
    }
  }
  cache.s = s_out;
  cache.valid = true;
}

template <class S>
void SpatialMaskField<S>::backward(const ParameterStore<S>& store, const MaskCache<S>& cache,
                                   const MatX<S>& ds, int active_sdf_levels,
                                   GradBuffer<S>& sink) const {
  if (!cache.valid) throw ContractError("mask backward without cached forward");
  MatX<S> dpre(ds.rows(), ds.cols());
  if (activation_ == MaskActivation::Sigmoid) {
    dpre = ds.binaryExpr(cache.s, [](S g, S s) { return g * s * (S(1) - s); });
  } else {
    for (Eigen::Index c = 0; c < ds.cols(); ++c) {
      const S dot = ds.col(c).dot(cache.s.col(c));
      dpre.col(c) = cache.s.col(c).cwiseProduct(ds.col(c) - VecX<S>::Constant(ds.rows(), dot));
    }
  }
  if (active_sdf_levels < sdf_levels_) {
    dpre.bottomRows(sdf_levels_ - active_sdf_levels).setZero();
  }
  MatX<S> dhid, denc;
  out_.backward(store, cache.out, dpre, sink, dhid);
  hidden_.backward(store, cache.hidden, dhid, sink, denc);
  grid_->encode_backward(store, cache.grid, denc, sink);
}

template <class S>
void apply_mask(const MatX<S>& s, const MatX<S>& f, int active_levels, int feature_dim,
                MatX<S>& h) {
  const Eigen::Index L = s.rows();
  if (f.rows() != L * feature_dim || f.cols() != s.cols()) {
    throw ConfigError("apply_mask shape mismatch");
  }
  h.setZero(f.rows(), f.cols());
  for (int l = 0; l < active_levels; ++l) {
    h.middleRows(l * feature_dim, feature_dim) =
        f.middleRows(l * feature_dim, feature_dim).array().rowwise() *
        s.row(l).array();
  }
}

template <class S>
void apply_mask_backward(const MatX<S>& s, const MatX<S>& f, const MatX<S>& dh,
                         int active_levels, int feature_dim, MatX<S>& ds, MatX<S>& df) {
  const Eigen::Index L = s.rows();
  if (dh.rows() != f.rows() || dh.cols() != f.cols()) {
    throw ConfigError("apply_mask_backward shape mismatch");
  }
  ds.setZero(L, s.cols());
  df.setZero(f.rows(), f.cols());
  for (int l = 0; l < active_levels; ++l) {
    const auto fb = f.middleRows(l * feature_dim, feature_dim);
    const auto db = dh.middleRows(l * feature_dim, feature_dim);
    ds.row(l) = (fb.array() * db.array()).colwise().sum();
    df.middleRows(l * feature_dim, feature_dim) = db.array().rowwise() * s.row(l).array();
  }
}

template class SpatialMaskField<float>;
template class SpatialMaskField<double>;
template void apply_mask<float>(const MatX<float>&, const MatX<float>&, int, int, MatX<float>&);
template void apply_mask<double>(const MatX<double>&, const MatX<double>&, int, int,
                                 MatX<double>&);
template void apply_mask_backward<float>(const MatX<float>&, const MatX<float>&,
                                         const MatX<float>&, int, int, MatX<float>&,
                                         MatX<float>&);
template void apply_mask_backward<double>(const MatX<double>&, const MatX<double>&,
                                          const MatX<double>&, int, int, MatX<double>&,
                                          MatX<double>&);

}  // namespace hashsurf
