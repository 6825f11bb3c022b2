#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hashsurf/common.hpp"
#include "hashsurf/image.hpp"
#include "hashsurf/rng.hpp"

namespace hashsurf {

// Analytic SDF primitives composed by min (union) / max (intersection).
// Exact distances for single primitives; compositions are exact away from
// the blend seams (min/max gives a bound there).
class AnalyticScene {
 public:
  struct Primitive {
    enum class Type { Sphere, Box, Torus };
    Type type = Type::Sphere;
    Vec3d center = Vec3d::Zero();
    double radius = 0.5;        // sphere radius / torus tube radius
    double major_radius = 0.0;  // torus ring radius
    Vec3d half_extents = Vec3d::Zero();
    Vec3d albedo = Vec3d::Ones();
  };

  enum class Op { Union, Intersection };

  AnalyticScene() = default;
  void add(const Primitive& p) { primitives_.push_back(p); }
  void set_op(Op op) { op_ = op; }
  const std::vector<Primitive>& primitives() const { return primitives_; }

  double sdf(const Vec3d& x) const;
  // Closed-form gradient of the winning branch; unit norm off medial axes.
  Vec3d gradient(const Vec3d& x) const;
  Vec3d albedo_at(const Vec3d& x) const;

  // Registry used by the CLI: "sphere", "box", "torus", "sphere-box".
  static AnalyticScene by_name(const std::string& name);
  static std::vector<std::string> known_scenes();

 private:
  std::vector<Primitive> primitives_;
  Op op_ = Op::Union;
};

struct SphereTraceResult {
  bool hit = false;
  double t = 0.0;
  Vec3d point = Vec3d::Zero();
  int steps = 0;
};

SphereTraceResult sphere_trace(const AnalyticScene& scene, const Vec3d& origin,
                               const Vec3d& dir, double t_far, int max_steps = 256,
                               double tol = 1e-5);

// Posed-image dataset description; JSON layout:
// {"intrinsics": {fx, fy, cx, cy, width, height}, "background": [r,g,b],
//  "scale": s, "frames": [{"file": str, "transform": [12 row-major floats]}]}
struct SceneManifest {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  Vec3d background = Vec3d::Zero();
  double scale = 1.0;
  struct Frame {
    std::string file;
    Eigen::Matrix<double, 3, 4> camera_to_world;
  };
  std::vector<Frame> frames;

  void save(const std::filesystem::path& path) const;
  static SceneManifest load(const std::filesystem::path& path);
};

struct DatasetOptions {
  int n_views = 48;
  int resolution = 128;
  uint64_t seed = 0;
  double camera_radius = 2.5;
  Vec3d background = Vec3d::Zero();
  Vec3d light_dir = Vec3d(0.4, 0.6, 0.7).normalized();
  double ambient = 0.1;
};

// Sphere-traced Lambertian renders from cameras on a Fibonacci sphere looking
// at the origin; writes <view_NNN.ppm> files plus manifest.json.
SceneManifest generate_dataset(const AnalyticScene& scene, const DatasetOptions& opt,
                               const std::filesystem::path& out_dir);

// Approximately uniform surface points: box-uniform proposals projected along
// the analytic gradient until |sdf| < 1e-6.
std::vector<Vec3d> sample_surface(const AnalyticScene& scene, int n_points, uint64_t seed);

// Symmetric Chamfer-L1: 0.5 * (mean_a min_b |a-b| + mean_b min_a |a-b|),
// grid-accelerated exact nearest neighbors. Optional one-sided outputs:
// acc = mean over A of the nearest distance into B, comp the reverse.
double chamfer_l1(const std::vector<Vec3d>& a, const std::vector<Vec3d>& b,
                  double* acc = nullptr, double* comp = nullptr);

}  // namespace hashsurf
