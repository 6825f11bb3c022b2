#include "hashsurf/nn.hpp"

#include <algorithm>
#include <cmath>

namespace hashsurf {

template <class S>
S softplus(S beta, S x) {
  const S bx = beta * x;
  if (bx > S(30)) return x;
  return std::log1p(std::exp(bx)) / beta;
}

template <class S>
S softplus_derivative(S beta, S x) {
  return stable_sigmoid(beta * x);
}

template <class S>
S stable_sigmoid(S x) {
  if (x >= S(0)) {
    return S(1) / (S(1) + std::exp(-x));
  }
  const S e = std::exp(x);
  return e / (S(1) + e);
}

template <class S>
int ParameterStore<S>::add(const std::string& name, int64_t size) {
  if (index_.count(name)) throw ContractError("duplicate parameter array: " + name);
  Array a;
  a.name = name;
  a.value.assign(static_cast<size_t>(size), S(0));
  a.grad.assign(static_cast<size_t>(size), S(0));
  a.m.assign(static_cast<size_t>(size), S(0));
  a.v.assign(static_cast<size_t>(size), S(0));
  arrays_.push_back(std::move(a));
  const int handle = static_cast<int>(arrays_.size()) - 1;
  index_.emplace(name, handle);
  return handle;
}

template <class S>
int ParameterStore<S>::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

template <class S>
int64_t ParameterStore<S>::total_size() const {
  int64_t n = 0;
  for (const auto& a : arrays_) n += static_cast<int64_t>(a.value.size());
  return n;
}

template <class S>
void ParameterStore<S>::zero_grad() {
  for (auto& a : arrays_) std::fill(a.grad.begin(), a.grad.end(), S(0));
}

template <class S>
void ParameterStore<S>::adam_step(const AdamConfig& cfg) {
  ++adam_steps_;
  const double t = static_cast<double>(adam_steps_);
  const S bc1 = S(1) - static_cast<S>(std::pow(static_cast<double>(cfg.beta1), t));
  const S bc2 = S(1) - static_cast<S>(std::pow(static_cast<double>(cfg.beta2), t));
  for (auto& a : arrays_) {
    const auto n = static_cast<Eigen::Index>(a.value.size());
    Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> g(a.grad.data(), n);
    if (!g.allFinite()) {
      ++nonfinite_skips_;
      continue;
    }
    Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> m(a.m.data(), n);
    Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> v(a.v.data(), n);
    Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> w(a.value.data(), n);
    m = cfg.beta1 * m + (S(1) - cfg.beta1) * g;
    v = cfg.beta2 * v + (S(1) - cfg.beta2) * g * g;
    w -= cfg.lr * (m / bc1) / ((v / bc2).sqrt() + cfg.eps);
  }
}

template <class S>
GradBuffer<S>::GradBuffer(ParameterStore<S>& store, bool alias_store)
    : store_(&store), alias_(alias_store) {
  if (!alias_) {
    local_.resize(static_cast<size_t>(store.count()));
    for (int h = 0; h < store.count(); ++h) {
      local_[static_cast<size_t>(h)].assign(store.values(h).size(), S(0));
    }
  }
}

template <class S>
S* GradBuffer<S>::grad(int handle) {
  if (alias_) return store_->grads(handle).data();
  return local_[static_cast<size_t>(handle)].data();
}

template <class S>
void GradBuffer<S>::zero() {
  if (alias_) {
    store_->zero_grad();
    return;
  }
  for (auto& v : local_) std::fill(v.begin(), v.end(), S(0));
}

template <class S>
void GradBuffer<S>::merge_into(ParameterStore<S>& store) const {
  if (alias_) return;
  for (int h = 0; h < store.count(); ++h) {
    auto dst = store.grads(h);
    const auto& src = local_[static_cast<size_t>(h)];
    for (size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
  }
}

namespace {

template <class S>
using RowMajorMap =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class S>
using RowMajorMutMap =
    Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Activations use Eigen array kernels (packet exp/log1p) rather than scalar
// unaryExpr calls; the MLP evaluations are dominated by these transcendentals.
template <class S>
void apply_activation(Activation act, S beta, MatX<S>& y) {
  switch (act) {
    case Activation::None:
      return;
    case Activation::Relu:
      y = y.cwiseMax(S(0));
      return;
    case Activation::Sigmoid:
      // 1/(1+exp(-t)) saturates cleanly to 0 and 1 in IEEE arithmetic.
      y = (S(1) / (S(1) + (-y.array()).exp())).matrix();
      return;
    case Activation::Softplus: {
      // Branch-free stable form: softplus(t) = max(t,0) + log1p(exp(-|t|)).
      auto t = y.array() * beta;
      y = ((t.max(S(0)) + (-t.abs()).exp().log1p()) / beta).matrix();
      return;
    }
  }
}

}  // namespace

template <class S>
DenseLayer<S>::DenseLayer(ParameterStore<S>& store, const std::string& name, int in_dim,
                          int out_dim, Activation act, S softplus_beta)
    : in_dim_(in_dim), out_dim_(out_dim), act_(act), beta_(softplus_beta) {
  w_handle_ = store.add(name + ".weight", static_cast<int64_t>(in_dim) * out_dim);
  b_handle_ = store.add(name + ".bias", out_dim);
}

template <class S>
void DenseLayer<S>::forward(const ParameterStore<S>& store, const MatX<S>& x,
                            DenseCache<S>& cache, MatX<S>& y) const {
  if (x.rows() != in_dim_) throw ConfigError("dense layer input dimension mismatch");
  RowMajorMap<S> w(store.values(w_handle_).data(), out_dim_, in_dim_);
  Eigen::Map<const VecX<S>> b(store.values(b_handle_).data(), out_dim_);
  cache.input = x;
  cache.pre.noalias() = w * x;
  cache.pre.colwise() += b;
  cache.valid = true;
  y = cache.pre;
  apply_activation(act_, beta_, y);
}

template <class S>
void DenseLayer<S>::apply_activation_backward(const DenseCache<S>& cache, MatX<S>& dy) const {
  switch (act_) {
    case Activation::None:
      return;
    case Activation::Relu:
      dy = (cache.pre.array() > S(0)).template cast<S>() * dy.array();
      return;
    case Activation::Sigmoid: {
      auto s = S(1) / (S(1) + (-cache.pre.array()).exp());
      dy = (dy.array() * s * (S(1) - s)).matrix();
      return;
    }
    case Activation::Softplus: {
      // d softplus(beta, x)/dx = sigmoid(beta x).
      dy = (dy.array() / (S(1) + (-cache.pre.array() * beta_).exp())).matrix();
      return;
    }
  }
}

template <class S>
void DenseLayer<S>::backward(const ParameterStore<S>& store, const DenseCache<S>& cache,
                             const MatX<S>& dy, GradBuffer<S>& sink, MatX<S>& dx) const {
  if (!cache.valid) throw ContractError("dense backward without cached forward");
  MatX<S> dz = dy;
  apply_activation_backward(cache, dz);
  RowMajorMutMap<S> dw(sink.grad(w_handle_), out_dim_, in_dim_);
  Eigen::Map<VecX<S>> db(sink.grad(b_handle_), out_dim_);
  dw.noalias() += dz * cache.input.transpose();
  db.noalias() += dz.rowwise().sum();
  RowMajorMap<S> w(store.values(w_handle_).data(), out_dim_, in_dim_);
  dx.noalias() = w.transpose() * dz;
}

template <class S>
void DenseLayer<S>::backward_params_only(const ParameterStore<S>& store,
                                         const DenseCache<S>& cache, const MatX<S>& dy,
                                         GradBuffer<S>& sink) const {
  if (!cache.valid) throw ContractError("dense backward without cached forward");
  (void)store;
  MatX<S> dz = dy;
  apply_activation_backward(cache, dz);
  RowMajorMutMap<S> dw(sink.grad(w_handle_), out_dim_, in_dim_);
  Eigen::Map<VecX<S>> db(sink.grad(b_handle_), out_dim_);
  dw.noalias() += dz * cache.input.transpose();
  db.noalias() += dz.rowwise().sum();
}

template <class S>
void fill_uniform(std::span<S> dst, Rng& rng, double lo, double hi) {
  for (S& v : dst) v = static_cast<S>(rng.next_range(lo, hi));
}

template <class S>
void fill_normal(std::span<S> dst, Rng& rng, double mean, double stddev) {
  for (S& v : dst) v = static_cast<S>(mean + stddev * rng.next_normal());
}

template <class S>
void sh_encode(const Vec3<S>& dir, S* o) {
  Vec3<S> d = dir;
  const S n = d.norm();
  if (n > S(0)) d /= n;
  const S x = d.x(), y = d.y(), z = d.z();
  const S xx = x * x, yy = y * y, zz = z * z;
  o[0] = S(0.28209479177387814);
  o[1] = S(0.4886025119029199) * y;
  o[2] = S(0.4886025119029199) * z;
  o[3] = S(0.4886025119029199) * x;
  o[4] = S(1.0925484305920792) * x * y;
  o[5] = S(1.0925484305920792) * y * z;
  o[6] = S(0.9461746957575601) * zz - S(0.31539156525252005);
  o[7] = S(1.0925484305920792) * x * z;
  o[8] = S(0.5462742152960396) * (xx - yy);
  o[9] = S(0.5900435899266435) * y * (S(3) * xx - yy);
  o[10] = S(2.890611442640554) * x * y * z;
  o[11] = S(0.4570457994644658) * y * (S(5) * zz - S(1));
  o[12] = S(0.3731763325901154) * z * (S(5) * zz - S(3));
  o[13] = S(0.4570457994644658) * x * (S(5) * zz - S(1));
  o[14] = S(1.445305721320277) * z * (xx - yy);
  o[15] = S(0.5900435899266435) * x * (xx - S(3) * yy);
}

template <class S>
GradCheckReport grad_check(ParameterStore<S>& store,
                           const std::function<double(bool)>& loss, double rel_tol,
                           double fd_step, int64_t max_probes_per_array, uint64_t probe_seed) {
  GradCheckReport report;
  loss(true);

  // Snapshot the backprop gradients before FD evaluations overwrite anything.
  std::vector<std::vector<S>> bp(static_cast<size_t>(store.count()));
  for (int h = 0; h < store.count(); ++h) {
    auto g = store.grads(h);
    bp[static_cast<size_t>(h)].assign(g.begin(), g.end());
  }

  Rng rng(probe_seed);
  for (int h = 0; h < store.count(); ++h) {
    const auto& name = store.array(h).name;
    const auto& g = bp[static_cast<size_t>(h)];
    const int64_t n = static_cast<int64_t>(g.size());

    std::vector<int64_t> probes;
    if (max_probes_per_array < 0 || n <= max_probes_per_array) {
      probes.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) probes[static_cast<size_t>(i)] = i;
    } else {
      // Half the probes on the largest |grad| entries, half random.
      std::vector<int64_t> order(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
      const int64_t top = max_probes_per_array / 2;
      std::partial_sort(order.begin(), order.begin() + top, order.end(),
                        [&](int64_t a, int64_t b) {
                          return std::abs(static_cast<double>(g[static_cast<size_t>(a)])) >
                                 std::abs(static_cast<double>(g[static_cast<size_t>(b)]));
                        });
      probes.assign(order.begin(), order.begin() + top);
      for (int64_t k = top; k < max_probes_per_array; ++k) {
        probes.push_back(static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(n))));
      }
      std::sort(probes.begin(), probes.end());
      probes.erase(std::unique(probes.begin(), probes.end()), probes.end());
    }

    auto vals = store.values(h);
    for (const int64_t i : probes) {
      const S saved = vals[static_cast<size_t>(i)];
      vals[static_cast<size_t>(i)] = saved + static_cast<S>(fd_step);
      const double lp = loss(false);
      vals[static_cast<size_t>(i)] = saved - static_cast<S>(fd_step);
      const double lm = loss(false);
      vals[static_cast<size_t>(i)] = saved;
      const double fd = (lp - lm) / (2.0 * fd_step);
      const double bpg = static_cast<double>(g[static_cast<size_t>(i)]);
      const double denom = std::max(std::abs(bpg) + std::abs(fd), 1e-4);
      const double rel = std::abs(bpg - fd) / denom;
      ++report.checked;
      if (rel > report.max_rel_error) report.max_rel_error = rel;
      if (rel > rel_tol) {
        report.failing.push_back(name + "[" + std::to_string(i) + "]");
      }
    }
  }
  return report;
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template class GradBuffer<float>;
template class GradBuffer<double>;
template class DenseLayer<float>;
template class DenseLayer<double>;

template float softplus<float>(float, float);
template double softplus<double>(double, double);
template float softplus_derivative<float>(float, float);
template double softplus_derivative<double>(double, double);
template float stable_sigmoid<float>(float);
template double stable_sigmoid<double>(double);
template void fill_uniform<float>(std::span<float>, Rng&, double, double);
template void fill_uniform<double>(std::span<double>, Rng&, double, double);
template void fill_normal<float>(std::span<float>, Rng&, double, double);
template void fill_normal<double>(std::span<double>, Rng&, double, double);
template void sh_encode<float>(const Vec3<float>&, float*);
template void sh_encode<double>(const Vec3<double>&, double*);
template GradCheckReport grad_check<float>(ParameterStore<float>&,
                                           const std::function<double(bool)>&, double, double,
                                           int64_t, uint64_t);
template GradCheckReport grad_check<double>(ParameterStore<double>&,
                                            const std::function<double(bool)>&, double, double,
                                            int64_t, uint64_t);

}  // namespace hashsurf
