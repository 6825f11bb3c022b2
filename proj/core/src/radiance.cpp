#include "hashsurf/radiance.hpp"

#include <cmath>

namespace hashsurf {

template <class S>
RadianceNetwork<S>::RadianceNetwork(ParameterStore<S>& store, const std::string& prefix,
                                    const Config& cfg, Rng& init_rng)
    : geo_dim_(cfg.geo_feature_dim) {
  int in = input_dim();
  for (int l = 0; l < cfg.hidden_layers; ++l) {
    layers_.emplace_back(store, prefix + ".l" + std::to_string(l), in, cfg.hidden_width,
                         Activation::Relu);
    fill_normal(store.values(layers_.back().weight_handle()), init_rng, 0.0,
                std::sqrt(2.0 / in));
    in = cfg.hidden_width;
  }
  layers_.emplace_back(store, prefix + ".out", in, 3, Activation::Sigmoid);
  fill_normal(store.values(layers_.back().weight_handle()), init_rng, 0.0,
              std::sqrt(1.0 / in));
}

template <class S>
void RadianceNetwork<S>::forward(const ParameterStore<S>& store, const MatX<S>& in,
                                 Cache& cache, MatX<S>& color) const {
  cache.layers.resize(layers_.size());
  MatX<S> x = in;
  for (size_t l = 0; l < layers_.size(); ++l) {
    MatX<S> y;
    layers_[l].forward(store, x, cache.layers[l], y);
    x = std::move(y);
  }
  color = std::move(x);
  cache.valid = true;
}

template <class S>
void RadianceNetwork<S>::backward(const ParameterStore<S>& store, const Cache& cache,
                                  const MatX<S>& d_color, GradBuffer<S>& sink,
                                  MatX<S>& d_in) const {
  if (!cache.valid) throw ContractError("radiance backward without cached forward");
  MatX<S> g = d_color;
  for (size_t l = layers_.size(); l-- > 0;) {
    MatX<S> dx;
    layers_[l].backward(store, cache.layers[l], g, sink, dx);
    g = std::move(dx);
  }
  d_in = std::move(g);
}

template class RadianceNetwork<float>;
template class RadianceNetwork<double>;

}  // namespace hashsurf
