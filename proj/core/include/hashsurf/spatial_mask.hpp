#pragma once

#include <memory>
#include <string>

#include "hashsurf/common.hpp"
#include "hashsurf/hash_grid.hpp"
#include "hashsurf/nn.hpp"

namespace hashsurf {

enum class MaskActivation { Sigmoid, Softmax };

// How the per-level mask multiplies into the SDF encoding. PinnedOne and
// PinnedZero are diagnostic modes; Disabled builds no mask field at all
// (the baseline pipeline).
enum class MaskMode { Learned, PinnedOne, PinnedZero, Disabled };

template <class S>
struct MaskCache {
  EncodeCache<S> grid;
  DenseCache<S> hidden;
  DenseCache<S> out;
  MatX<S> s;  // L x B activated masks
  bool valid = false;
};

// Learned per-level scalar field s(x) in (0,1)^L: a small hash grid feeding a
// one-hidden-layer MLP whose L outputs gate the SDF grid levels.
template <class S>
class SpatialMaskField {
 public:
  struct Config {
    typename MultiResHashGrid<S>::Config grid;
    int hidden_width = 16;
    int sdf_levels = 0;  // L, the gated grid's level count
    MaskActivation activation = MaskActivation::Sigmoid;
    double softplus_beta = 100.0;
    double output_bias_init = 1.0;  // masks start near sigmoid(1) ~ 0.73
    double feature_init_scale = 1e-4;
  };

  SpatialMaskField(ParameterStore<S>& store, const std::string& prefix, const Config& cfg,
                   Rng& init_rng);

  int sdf_levels() const { return sdf_levels_; }
  MaskActivation activation() const { return activation_; }
  const MultiResHashGrid<S>& grid() const { return *grid_; }
  const DenseLayer<S>& output_layer() const { return out_; }
  const DenseLayer<S>& hidden_layer() const { return hidden_; }

  // All mask-grid levels stay active regardless of the SDF unveiling schedule.
  void forward(const ParameterStore<S>& store, const MatX<S>& pts, MaskCache<S>& cache,
               MatX<S>& s_out) const;
  // Gradients to the masks of inactive levels are blocked: pre-activation
  // rows >= active_sdf_levels receive exact zero, so the output-layer rows
  // for those levels accumulate nothing. (With sigmoid this is already
  // implied by the zeroed ds rows; softmax couples rows and needs the
  // explicit block.)
  void backward(const ParameterStore<S>& store, const MaskCache<S>& cache, const MatX<S>& ds,
                int active_sdf_levels, GradBuffer<S>& sink) const;

 private:
  std::unique_ptr<MultiResHashGrid<S>> grid_;
  DenseLayer<S> hidden_;
  DenseLayer<S> out_;
  int sdf_levels_ = 0;
  MaskActivation activation_ = MaskActivation::Sigmoid;
};

// h block l = s_l * f_l elementwise for l < active_levels; later blocks are
// exact zero regardless of s.
template <class S>
void apply_mask(const MatX<S>& s, const MatX<S>& f, int active_levels, int feature_dim,
                MatX<S>& h);

// ds_l = <dh_l, f_l> for active levels, exact zero otherwise; df_l = s_l*dh_l
// for active levels, zero otherwise.
template <class S>
void apply_mask_backward(const MatX<S>& s, const MatX<S>& f, const MatX<S>& dh,
                         int active_levels, int feature_dim, MatX<S>& ds, MatX<S>& df);

}  // namespace hashsurf
