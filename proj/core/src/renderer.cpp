#include "hashsurf/renderer.hpp"

#include <cmath>

namespace hashsurf {

template <class S>
void CameraModel<S>::validate() const {
  if (width <= 0 || height <= 0 || fx <= S(0) || fy <= S(0)) {
    throw ConfigError("camera intrinsics invalid");
  }
  const Eigen::Matrix<S, 3, 3> should_be_identity = rotation * rotation.transpose();
  const double err =
      (should_be_identity - Eigen::Matrix<S, 3, 3>::Identity()).template lpNorm<Eigen::Infinity>();
  if (err > 1e-6) throw ConfigError("camera rotation not orthonormal");
}

template <class S>
void CameraModel<S>::generate_ray(S u, S v, Vec3<S>& origin, Vec3<S>& dir) const {
  const Vec3<S> cam_dir((u - cx) / fx, (v - cy) / fy, S(1));
  dir = (rotation * cam_dir).normalized();
  origin = center;
}

template <class S>
bool intersect_unit_sphere(const Vec3<S>& o, const Vec3<S>& d, S& t_near, S& t_far) {
  // |o + t d|^2 = 1 with |d| = 1.
  const S b = o.dot(d);
  const S c = o.dot(o) - S(1);
  const S disc = b * b - c;
  if (disc <= S(0)) return false;  // miss or tangent (zero-length chord)
  const S sq = std::sqrt(disc);
  t_near = -b - sq;
  t_far = -b + sq;
  if (t_far <= S(0)) return false;
  t_near = std::max(t_near, S(0));
  return t_near < t_far;
}

template <class S>
void stratified_depths(S near, S far, std::span<const S> u, S* out) {
  const int m = static_cast<int>(u.size());
  const S span = far - near;
  for (int i = 0; i < m; ++i) {
    out[i] = near + span * (static_cast<S>(i) + u[i]) / static_cast<S>(m);
  }
}

template <class S>
OpacityConverter<S>::OpacityConverter(ParameterStore<S>& store, const std::string& name,
                                      double zeta_init) {
  zeta_handle = store.add(name, 1);
  store.values(zeta_handle)[0] = static_cast<S>(zeta_init);
}

template <class S>
S OpacityConverter<S>::sharpness(const ParameterStore<S>& store) const {
  return std::exp(S(10) * store.values(zeta_handle)[0]);
}

template <class S>
S OpacityConverter<S>::alpha(S s, S sdf_i, S sdf_next) {
  const S phi_i = stable_sigmoid(s * sdf_i);
  const S phi_n = stable_sigmoid(s * sdf_next);
  if (phi_n >= phi_i) return S(0);
  return (phi_i - phi_n) / phi_i;
}

template <class S>
void OpacityConverter<S>::alpha_backward(S s, S sdf_i, S sdf_next, S d_alpha, S& d_sdf_i,
                                         S& d_sdf_next, S& d_sharpness) {
  const S phi_i = stable_sigmoid(s * sdf_i);
  const S phi_n = stable_sigmoid(s * sdf_next);
  if (phi_n >= phi_i) {  // clamp branch: zero subgradient
    d_sdf_i = S(0);
    d_sdf_next = S(0);
    d_sharpness = S(0);
    return;
  }
  // alpha = 1 - phi_n / phi_i
  const S ratio = phi_n / phi_i;
  const S gi = phi_i * (S(1) - phi_i);  // d phi_i / d(s * sdf_i)
  const S gn = phi_n * (S(1) - phi_n);
  d_sdf_i = d_alpha * ratio * (S(1) - phi_i) * s;
  d_sdf_next = -d_alpha * gn / phi_i * s;
  d_sharpness = d_alpha * (ratio * (S(1) - phi_i) * sdf_i - gn / phi_i * sdf_next);
  (void)gi;
}

template <class S>
S composite(std::span<const S> alphas, const MatX<S>& colors, const Vec3<S>& background,
            Vec3<S>& c_out, std::span<S> weights) {
  const int m = static_cast<int>(alphas.size());
  S t = S(1);
  c_out.setZero();
  for (int i = 0; i < m; ++i) {
    const S w = t * alphas[i];
    weights[i] = w;
    c_out += w * colors.col(i);
    t *= (S(1) - alphas[i]);
  }
  c_out += t * background;
  return t;
}

template <class S>
void composite_backward(std::span<const S> alphas, const MatX<S>& colors,
                        const Vec3<S>& background, const Vec3<S>& d_c, std::span<S> d_alphas,
                        MatX<S>& d_colors) {
  const int m = static_cast<int>(alphas.size());
  d_colors.resize(3, m);
  // Forward transmittances.
  std::vector<S> trans(static_cast<size_t>(m) + 1);
  trans[0] = S(1);
  for (int i = 0; i < m; ++i) trans[static_cast<size_t>(i) + 1] = trans[static_cast<size_t>(i)] * (S(1) - alphas[i]);
  // Reverse sweep carrying dL/dT_{i+1}.
  S g_t = d_c.dot(background);  // dL/dT_{M+1}
  for (int i = m - 1; i >= 0; --i) {
    const S dw = d_c.dot(colors.col(i));
    d_colors.col(i) = trans[static_cast<size_t>(i)] * alphas[i] * d_c;
    d_alphas[i] = trans[static_cast<size_t>(i)] * (dw - g_t);
    g_t = alphas[i] * dw + (S(1) - alphas[i]) * g_t;
  }
}

namespace {

template <class S>
void render_rows(const CameraModel<S>& cam, const BatchSdfFn<S>& sdf,
                 const BatchShadeFn<S>* shade,
                 const std::function<void(const MatX<S>&, VecX<S>&)>* value_fn,
                 const RenderOptions<S>& opt, ThreadPool& pool, Image* img, MatX<S>* scalar_out) {
  const int w = cam.width, h = cam.height, m = opt.samples_per_ray;
  pool.run(h, [&](int, int64_t row_begin, int64_t row_end) {
    std::vector<S> u_mid(static_cast<size_t>(m), S(0.5));
    std::vector<S> depths(static_cast<size_t>(m));
    std::vector<S> alphas(static_cast<size_t>(m));
    std::vector<S> weights(static_cast<size_t>(m));
    for (int64_t y = row_begin; y < row_end; ++y) {
      // Gather the row's hitting rays into one batch.
      std::vector<int> hit_px;
      std::vector<Vec3<S>> origins(static_cast<size_t>(w)), dirs(static_cast<size_t>(w));
      std::vector<std::pair<S, S>> ranges(static_cast<size_t>(w));
      hit_px.reserve(static_cast<size_t>(w));
      for (int x = 0; x < w; ++x) {
        cam.generate_ray(static_cast<S>(x) + S(0.5), static_cast<S>(y) + S(0.5),
                         origins[static_cast<size_t>(x)], dirs[static_cast<size_t>(x)]);
        S tn, tf;
        if (intersect_unit_sphere(origins[static_cast<size_t>(x)], dirs[static_cast<size_t>(x)],
                                  tn, tf)) {
          ranges[static_cast<size_t>(x)] = {tn, tf};
          hit_px.push_back(x);
        } else if (img) {
          float* px = img->pixel(x, static_cast<int>(y));
          for (int c = 0; c < 3; ++c) px[c] = static_cast<float>(opt.background[c]);
        } else if (scalar_out) {
          (*scalar_out)(static_cast<int>(y), x) = S(0);
        }
      }
      if (hit_px.empty()) continue;

      const int64_t n_pts = static_cast<int64_t>(hit_px.size()) * m;
      MatX<S> pts(3, n_pts), ray_dirs(3, n_pts);
      for (size_t r = 0; r < hit_px.size(); ++r) {
        const int x = hit_px[r];
        stratified_depths(ranges[static_cast<size_t>(x)].first,
                          ranges[static_cast<size_t>(x)].second, std::span<const S>(u_mid),
                          depths.data());
        for (int i = 0; i < m; ++i) {
          const int64_t col = static_cast<int64_t>(r) * m + i;
          pts.col(col) = origins[static_cast<size_t>(x)] + depths[static_cast<size_t>(i)] * dirs[static_cast<size_t>(x)];
          ray_dirs.col(col) = dirs[static_cast<size_t>(x)];
        }
      }

      VecX<S> sdf_vals;
      sdf(pts, sdf_vals);
      MatX<S> colors;
      VecX<S> scalars;
      if (shade) {
        (*shade)(pts, ray_dirs, colors);
      }
      if (value_fn) (*value_fn)(pts, scalars);

      for (size_t r = 0; r < hit_px.size(); ++r) {
        const int x = hit_px[r];
        const int64_t base = static_cast<int64_t>(r) * m;
        const S s = opt.sharpness;
        for (int i = 0; i < m; ++i) {
          const S si = sdf_vals[base + i];
          const S sn = (i + 1 < m) ? sdf_vals[base + i + 1] : si;  // duplicated last sample
          alphas[static_cast<size_t>(i)] = OpacityConverter<S>::alpha(s, si, sn);
        }
        S t = S(1);
        if (img) {
          Vec3<S> c;
          const MatX<S> ray_colors = colors.middleCols(base, m);
          t = composite<S>(alphas, ray_colors, opt.background, c, weights);
          float* px = img->pixel(x, static_cast<int>(y));
          for (int ch = 0; ch < 3; ++ch) px[ch] = static_cast<float>(c[ch]);
        } else if (scalar_out) {
          S acc = S(0);
          for (int i = 0; i < m; ++i) {
            acc += t * alphas[static_cast<size_t>(i)] * scalars[base + i];
            t *= (S(1) - alphas[static_cast<size_t>(i)]);
          }
          (*scalar_out)(static_cast<int>(y), x) = acc;
        }
      }
    }
  });
}

}  // namespace

template <class S>
Image render_image(const CameraModel<S>& cam, const BatchSdfFn<S>& sdf,
                   const BatchShadeFn<S>& shade, const RenderOptions<S>& opt, ThreadPool& pool) {
  Image img(cam.width, cam.height);
  render_rows<S>(cam, sdf, &shade, nullptr, opt, pool, &img, nullptr);
  return img;
}

template <class S>
void render_weighted_scalar(const CameraModel<S>& cam, const BatchSdfFn<S>& sdf,
                            const std::function<void(const MatX<S>&, VecX<S>&)>& value_fn,
                            const RenderOptions<S>& opt, ThreadPool& pool, MatX<S>& out) {
  out.setZero(cam.height, cam.width);
  render_rows<S>(cam, sdf, nullptr, &value_fn, opt, pool, nullptr, &out);
}

template struct CameraModel<float>;
template struct CameraModel<double>;
template struct OpacityConverter<float>;
template struct OpacityConverter<double>;
template bool intersect_unit_sphere<float>(const Vec3<float>&, const Vec3<float>&, float&, float&);
template bool intersect_unit_sphere<double>(const Vec3<double>&, const Vec3<double>&, double&,
                                            double&);
template void stratified_depths<float>(float, float, std::span<const float>, float*);
template void stratified_depths<double>(double, double, std::span<const double>, double*);
template float composite<float>(std::span<const float>, const MatX<float>&, const Vec3<float>&,
                                Vec3<float>&, std::span<float>);
template double composite<double>(std::span<const double>, const MatX<double>&,
                                  const Vec3<double>&, Vec3<double>&, std::span<double>);
template void composite_backward<float>(std::span<const float>, const MatX<float>&,
                                        const Vec3<float>&, const Vec3<float>&, std::span<float>,
                                        MatX<float>&);
template void composite_backward<double>(std::span<const double>, const MatX<double>&,
                                         const Vec3<double>&, const Vec3<double>&,
                                         std::span<double>, MatX<double>&);
template Image render_image<float>(const CameraModel<float>&, const BatchSdfFn<float>&,
                                   const BatchShadeFn<float>&, const RenderOptions<float>&,
                                   ThreadPool&);
template Image render_image<double>(const CameraModel<double>&, const BatchSdfFn<double>&,
                                    const BatchShadeFn<double>&, const RenderOptions<double>&,
                                    ThreadPool&);
template void render_weighted_scalar<float>(
    const CameraModel<float>&, const BatchSdfFn<float>&,
    const std::function<void(const MatX<float>&, VecX<float>&)>&, const RenderOptions<float>&,
    ThreadPool&, MatX<float>&);
template void render_weighted_scalar<double>(
    const CameraModel<double>&, const BatchSdfFn<double>&,
    const std::function<void(const MatX<double>&, VecX<double>&)>&, const RenderOptions<double>&,
    ThreadPool&, MatX<double>&);

}  // namespace hashsurf
