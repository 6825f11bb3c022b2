#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hashsurf/common.hpp"
#include "hashsurf/rng.hpp"

namespace hashsurf {

// Parameter and gradient storage is Eigen-aligned so Map-based kernels take
// the same SIMD path on every allocation; mixed alignments would otherwise
// reorder float reductions between runs.
template <class S>
using AlignedVec = std::vector<S, Eigen::aligned_allocator<S>>;

enum class Activation { None, Relu, Sigmoid, Softplus };

template <class S>
S softplus(S beta, S x);
template <class S>
S softplus_derivative(S beta, S x);
template <class S>
S stable_sigmoid(S x);

// Named flat arrays of trainable scalars with parallel gradient accumulators
// and Adam moments. Handles are registration-order indices.
template <class S>
class ParameterStore {
 public:
  struct Array {
    std::string name;
    AlignedVec<S> value;
    AlignedVec<S> grad;
    AlignedVec<S> m;
    AlignedVec<S> v;
  };

  struct AdamConfig {
    S lr;
    S beta1 = S(0.9);
    S beta2 = S(0.99);
    S eps = S(1e-15);
  };

  int add(const std::string& name, int64_t size);
  int find(const std::string& name) const;  // -1 when absent
  int count() const { return static_cast<int>(arrays_.size()); }
  int64_t total_size() const;

  Array& array(int handle) { return arrays_[static_cast<size_t>(handle)]; }
  const Array& array(int handle) const { return arrays_[static_cast<size_t>(handle)]; }
  std::span<S> values(int handle) { return arrays_[static_cast<size_t>(handle)].value; }
  std::span<const S> values(int handle) const { return arrays_[static_cast<size_t>(handle)].value; }
  std::span<S> grads(int handle) { return arrays_[static_cast<size_t>(handle)].grad; }

  void zero_grad();
  // Standard Adam with bias correction; an array whose gradient contains a
  // non-finite value is skipped for this step and counted.
  void adam_step(const AdamConfig& cfg);
  int64_t adam_step_count() const { return adam_steps_; }
  int64_t nonfinite_skip_count() const { return nonfinite_skips_; }

  // Checkpoint restore support.
  void set_adam_step_count(int64_t n) { adam_steps_ = n; }

 private:
  std::vector<Array> arrays_;
  std::unordered_map<std::string, int> index_;
  int64_t adam_steps_ = 0;
  int64_t nonfinite_skips_ = 0;
};

// Per-worker gradient accumulation target. Either aliases the store's own
// accumulators (single worker) or owns a private copy merged later in fixed
// worker order.
template <class S>
class GradBuffer {
 public:
  GradBuffer(ParameterStore<S>& store, bool alias_store);

  S* grad(int handle);
  void zero();
  void merge_into(ParameterStore<S>& store) const;
  bool aliases_store() const { return alias_; }

 private:
  ParameterStore<S>* store_;
  bool alias_;
  std::vector<AlignedVec<S>> local_;
};

template <class S>
struct DenseCache {
  MatX<S> input;  // in x B
  MatX<S> pre;    // out x B, pre-activation
  bool valid = false;
};

// Fully connected layer; weights live in the ParameterStore as
// "<name>.weight" (row-major out x in) and "<name>.bias".
template <class S>
class DenseLayer {
 public:
  DenseLayer() = default;
  DenseLayer(ParameterStore<S>& store, const std::string& name, int in_dim, int out_dim,
             Activation act, S softplus_beta = S(100));

  void forward(const ParameterStore<S>& store, const MatX<S>& x, DenseCache<S>& cache,
               MatX<S>& y) const;
  // Accumulates dW, db into the sink and returns dL/dx through `dx`.
  void backward(const ParameterStore<S>& store, const DenseCache<S>& cache, const MatX<S>& dy,
                GradBuffer<S>& sink, MatX<S>& dx) const;
  // Variant without input-gradient (first layers fed by constants).
  void backward_params_only(const ParameterStore<S>& store, const DenseCache<S>& cache,
                            const MatX<S>& dy, GradBuffer<S>& sink) const;

  int in_dim() const { return in_dim_; }
  int out_dim() const { return out_dim_; }
  Activation activation() const { return act_; }
  int weight_handle() const { return w_handle_; }
  int bias_handle() const { return b_handle_; }

  // dZ = dY * act'(pre), in place.
  void apply_activation_backward(const DenseCache<S>& cache, MatX<S>& dy) const;

 private:
  int in_dim_ = 0, out_dim_ = 0;
  Activation act_ = Activation::None;
  S beta_ = S(100);
  int w_handle_ = -1, b_handle_ = -1;
};

// Common initializers.
template <class S>
void fill_uniform(std::span<S> dst, Rng& rng, double lo, double hi);
template <class S>
void fill_normal(std::span<S> dst, Rng& rng, double mean, double stddev);

// Real spherical harmonics for bands l = 0..3 (16 components). A non-unit
// direction is normalized first.
inline constexpr int kShDim = 16;
template <class S>
void sh_encode(const Vec3<S>& dir, S* out16);

struct GradCheckReport {
  double max_rel_error = 0.0;
  int64_t checked = 0;
  std::vector<std::string> failing;  // "array[index]" entries above tolerance
};

// Compares backprop gradients against central finite differences of `loss`.
// loss(with_grad): returns the loss; when with_grad it must first zero the
// store gradients and then accumulate into them. Arrays larger than
// max_probes_per_array are probed on the largest-gradient entries plus a
// seeded random sample; pass -1 to probe every entry.
template <class S>
GradCheckReport grad_check(ParameterStore<S>& store,
                           const std::function<double(bool with_grad)>& loss, double rel_tol,
                           double fd_step = 1e-5, int64_t max_probes_per_array = -1,
                           uint64_t probe_seed = 0);

}  // namespace hashsurf
