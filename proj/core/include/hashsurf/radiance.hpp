#pragma once

#include <string>
#include <vector>

#include "hashsurf/common.hpp"
#include "hashsurf/nn.hpp"

namespace hashsurf {

// View-dependent color MLP. Input columns are
// [x(3), sh16(view dir), unit normal(3), geometry feature(G)].
template <class S>
class RadianceNetwork {
 public:
  struct Config {
    int hidden_width = 256;
    int hidden_layers = 4;
    int geo_feature_dim = 256;
  };

  RadianceNetwork(ParameterStore<S>& store, const std::string& prefix, const Config& cfg,
                  Rng& init_rng);

  int input_dim() const { return 3 + kShDim + 3 + geo_dim_; }
  int geo_feature_dim() const { return geo_dim_; }
  static constexpr int normal_offset() { return 3 + kShDim; }
  int feature_offset() const { return 3 + kShDim + 3; }

  struct Cache {
    std::vector<DenseCache<S>> layers;
    bool valid = false;
  };

  // in is input_dim x B; colors are sigmoid-bounded, 3 x B.
  void forward(const ParameterStore<S>& store, const MatX<S>& in, Cache& cache,
               MatX<S>& color) const;
  void backward(const ParameterStore<S>& store, const Cache& cache, const MatX<S>& d_color,
                GradBuffer<S>& sink, MatX<S>& d_in) const;

 private:
  std::vector<DenseLayer<S>> layers_;
  int geo_dim_ = 0;
};

}  // namespace hashsurf
