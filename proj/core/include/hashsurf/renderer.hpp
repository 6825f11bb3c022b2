#pragma once

#include <functional>
#include <span>

#include "hashsurf/common.hpp"
#include "hashsurf/image.hpp"
#include "hashsurf/nn.hpp"
#include "hashsurf/parallel.hpp"
#include "hashsurf/rng.hpp"

namespace hashsurf {

template <class S>
struct CameraModel {
  S fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  Eigen::Matrix<S, 3, 3> rotation = Eigen::Matrix<S, 3, 3>::Identity();  // camera-to-world
  Vec3<S> center = Vec3<S>::Zero();

  // Throws ConfigError unless the rotation block is orthonormal within 1e-6.
  void validate() const;
  // u, v are continuous pixel coordinates (integer pixel + jitter in [0,1)^2).
  void generate_ray(S u, S v, Vec3<S>& origin, Vec3<S>& dir) const;
};

// Near/far along o + t*d against the unit sphere; false when the ray misses
// or the sphere lies behind the origin (the ray is then background-only).
template <class S>
bool intersect_unit_sphere(const Vec3<S>& o, const Vec3<S>& d, S& t_near, S& t_far);

// Stratified depths: t_i = near + (far-near)*(i + u_i)/M with the caller's
// u_i draws in [0,1).
template <class S>
void stratified_depths(S near, S far, std::span<const S> u, S* out);

// Trainable opacity sharpness: s = exp(10 * zeta).
template <class S>
struct OpacityConverter {
  int zeta_handle = -1;

  OpacityConverter() = default;
  OpacityConverter(ParameterStore<S>& store, const std::string& name, double zeta_init);

  S sharpness(const ParameterStore<S>& store) const;

  // alpha = max((phi(sdf_i) - phi(sdf_next)) / phi(sdf_i), 0),
  // phi(x) = sigmoid(s * x).
  static S alpha(S sharpness, S sdf_i, S sdf_next);
  // d_alpha -> gradients on both SDF samples and on the sharpness itself.
  static void alpha_backward(S sharpness, S sdf_i, S sdf_next, S d_alpha, S& d_sdf_i,
                             S& d_sdf_next, S& d_sharpness);
};

// Front-to-back compositing: T_1 = 1, T_{i+1} = T_i (1 - a_i), w_i = T_i a_i,
// c = sum w_i c_i + T_{M+1} * background. Returns the residual transmittance.
template <class S>
S composite(std::span<const S> alphas, const MatX<S>& colors, const Vec3<S>& background,
            Vec3<S>& c_out, std::span<S> weights);

// Division-free reverse sweep of the compositing recurrence.
template <class S>
void composite_backward(std::span<const S> alphas, const MatX<S>& colors,
                        const Vec3<S>& background, const Vec3<S>& d_c,
                        std::span<S> d_alphas, MatX<S>& d_colors);

template <class S>
using BatchSdfFn = std::function<void(const MatX<S>& pts, VecX<S>& sdf)>;
// colors for points with per-point view directions.
template <class S>
using BatchShadeFn =
    std::function<void(const MatX<S>& pts, const MatX<S>& dirs, MatX<S>& colors)>;

template <class S>
struct RenderOptions {
  int samples_per_ray = 128;
  Vec3<S> background = Vec3<S>::Zero();
  S sharpness = S(1);
};

// Deterministic full-frame render with jitter disabled (pixel centers,
// mid-bin depth samples). Rays that miss the unit sphere get the background.
template <class S>
Image render_image(const CameraModel<S>& cam, const BatchSdfFn<S>& sdf,
                   const BatchShadeFn<S>& shade, const RenderOptions<S>& opt, ThreadPool& pool);

// Shared renderer core: per-ray weights for arbitrary per-sample scalars
// (used by the mask heat-map diagnostic). value_fn receives sample points and
// returns one scalar per point; the composited value is written per pixel.
template <class S>
void render_weighted_scalar(const CameraModel<S>& cam, const BatchSdfFn<S>& sdf,
                            const std::function<void(const MatX<S>&, VecX<S>&)>& value_fn,
                            const RenderOptions<S>& opt, ThreadPool& pool, MatX<S>& out);

}  // namespace hashsurf
