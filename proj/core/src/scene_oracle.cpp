#include "hashsurf/scene_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

namespace hashsurf {

namespace {

using Primitive = AnalyticScene::Primitive;

double primitive_sdf(const Primitive& p, const Vec3d& x) {
  const Vec3d q = x - p.center;
  switch (p.type) {
    case Primitive::Type::Sphere:
      return q.norm() - p.radius;
    case Primitive::Type::Box: {
      const Vec3d d = q.cwiseAbs() - p.half_extents;
      const double outside = d.cwiseMax(0.0).norm();
      const double inside = std::min(d.maxCoeff(), 0.0);
      return outside + inside;
    }
    case Primitive::Type::Torus: {
      const double ring = std::sqrt(q.x() * q.x() + q.z() * q.z()) - p.major_radius;
      return std::sqrt(ring * ring + q.y() * q.y()) - p.radius;
    }
  }
  return 0.0;
}

Vec3d primitive_gradient(const Primitive& p, const Vec3d& x) {
  const Vec3d q = x - p.center;
  switch (p.type) {
    case Primitive::Type::Sphere: {
      const double n = q.norm();
      return n > 0 ? Vec3d(q / n) : Vec3d(1, 0, 0);
    }
    case Primitive::Type::Box: {
      const Vec3d d = q.cwiseAbs() - p.half_extents;
      const Vec3d sign(q.x() < 0 ? -1.0 : 1.0, q.y() < 0 ? -1.0 : 1.0, q.z() < 0 ? -1.0 : 1.0);
      if (d.maxCoeff() <= 0.0) {
        // Inside: the gradient points along the least-deep axis.
        int axis = 0;
        d.maxCoeff(&axis);
        Vec3d g = Vec3d::Zero();
        g[axis] = sign[axis];
        return g;
      }
      const Vec3d dpos = d.cwiseMax(0.0);
      const double n = dpos.norm();
      return (dpos / n).cwiseProduct(sign);
    }
    case Primitive::Type::Torus: {
      const double rxz = std::sqrt(q.x() * q.x() + q.z() * q.z());
      const double ring = rxz - p.major_radius;
      const double n = std::sqrt(ring * ring + q.y() * q.y());
      if (n <= 0 || rxz <= 0) return Vec3d(1, 0, 0);
      return Vec3d(ring * q.x() / rxz, q.y(), ring * q.z() / rxz) / n;
    }
  }
  return Vec3d(1, 0, 0);
}

}  // namespace

double AnalyticScene::sdf(const Vec3d& x) const {
  if (primitives_.empty()) throw ConfigError("empty scene");
  double best = primitive_sdf(primitives_[0], x);
  for (size_t i = 1; i < primitives_.size(); ++i) {
    const double d = primitive_sdf(primitives_[i], x);
    best = (op_ == Op::Union) ? std::min(best, d) : std::max(best, d);
  }
  return best;
}

Vec3d AnalyticScene::gradient(const Vec3d& x) const {
  if (primitives_.empty()) throw ConfigError("empty scene");
  size_t winner = 0;
  double best = primitive_sdf(primitives_[0], x);
  for (size_t i = 1; i < primitives_.size(); ++i) {
    const double d = primitive_sdf(primitives_[i], x);
    const bool take = (op_ == Op::Union) ? d < best : d > best;
    if (take) {
      best = d;
      winner = i;
    }
  }
  return primitive_gradient(primitives_[winner], x);
}

Vec3d AnalyticScene::albedo_at(const Vec3d& x) const {
  size_t nearest = 0;
  double best = std::abs(primitive_sdf(primitives_[0], x));
  for (size_t i = 1; i < primitives_.size(); ++i) {
    const double d = std::abs(primitive_sdf(primitives_[i], x));
    if (d < best) {
      best = d;
      nearest = i;
    }
  }
  return primitives_[nearest].albedo;
}

AnalyticScene AnalyticScene::by_name(const std::string& name) {
  AnalyticScene scene;
  Primitive p;
  if (name == "sphere") {
    p.type = Primitive::Type::Sphere;
    p.center = Vec3d::Zero();
    p.radius = 0.5;
    p.albedo = Vec3d(0.80, 0.45, 0.30);
    scene.add(p);
  } else if (name == "box") {
    p.type = Primitive::Type::Box;
    p.center = Vec3d::Zero();
    p.half_extents = Vec3d(0.35, 0.35, 0.35);
    p.albedo = Vec3d(0.35, 0.50, 0.75);
    scene.add(p);
  } else if (name == "torus") {
    p.type = Primitive::Type::Torus;
    p.center = Vec3d::Zero();
    p.major_radius = 0.45;
    p.radius = 0.18;
    p.albedo = Vec3d(0.55, 0.70, 0.40);
    scene.add(p);
  } else if (name == "sphere-box") {
    // One smooth region and one edge-rich region.
    p.type = Primitive::Type::Sphere;
    p.center = Vec3d(-0.25, 0.0, 0.0);
    p.radius = 0.35;
    p.albedo = Vec3d(0.80, 0.45, 0.30);
    scene.add(p);
    Primitive b;
    b.type = Primitive::Type::Box;
    b.center = Vec3d(0.3, 0.0, 0.0);
    b.half_extents = Vec3d(0.25, 0.25, 0.25);
    b.albedo = Vec3d(0.35, 0.50, 0.75);
    scene.add(b);
  } else {
    throw ConfigError("unknown scene: " + name);
  }
  return scene;
}

std::vector<std::string> AnalyticScene::known_scenes() {
  return {"sphere", "box", "torus", "sphere-box"};
}

SphereTraceResult sphere_trace(const AnalyticScene& scene, const Vec3d& origin, const Vec3d& dir,
                               double t_far, int max_steps, double tol) {
  SphereTraceResult res;
  double t = 0.0;
  for (int i = 0; i < max_steps; ++i) {
    const Vec3d x = origin + t * dir;
    const double d = scene.sdf(x);
    if (d < tol) {
      res.hit = true;
      res.t = t;
      res.point = x;
      res.steps = i;
      return res;
    }
    t += d;
    if (t > t_far) break;
  }
  res.steps = max_steps;
  return res;
}

void SceneManifest::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["intrinsics"] = {{"fx", fx}, {"fy", fy}, {"cx", cx}, {"cy", cy},
                     {"width", width}, {"height", height}};
  j["background"] = {background.x(), background.y(), background.z()};
  j["scale"] = scale;
  nlohmann::json frames_json = nlohmann::json::array();
  for (const auto& f : frames) {
    nlohmann::json t = nlohmann::json::array();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) t.push_back(f.camera_to_world(r, c));
    }
    frames_json.push_back({{"file", f.file}, {"transform", t}});
  }
  j["frames"] = std::move(frames_json);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write manifest: " + path.string());
  out << j.dump(2) << "\n";
}

SceneManifest SceneManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read manifest: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest parse error: " + std::string(e.what()));
  }
  SceneManifest m;
  try {
    const auto& k = j.at("intrinsics");
    m.fx = k.at("fx");
    m.fy = k.at("fy");
    m.cx = k.at("cx");
    m.cy = k.at("cy");
    m.width = k.at("width");
    m.height = k.at("height");
    const auto& bg = j.at("background");
    m.background = Vec3d(bg.at(0), bg.at(1), bg.at(2));
    m.scale = j.value("scale", 1.0);
    for (const auto& f : j.at("frames")) {
      Frame frame;
      frame.file = f.at("file");
      const auto& t = f.at("transform");
      if (t.size() != 12) throw ConfigError("manifest transform must have 12 entries");
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 4; ++c) frame.camera_to_world(r, c) = t.at(4 * r + c);
      }
      m.frames.push_back(std::move(frame));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest missing field: " + std::string(e.what()));
  }
  return m;
}

namespace {

Vec3d fibonacci_point(int i, int n) {
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  const double z = 1.0 - 2.0 * (i + 0.5) / n;
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  const double a = golden * i;
  return {r * std::cos(a), r * std::sin(a), z};
}

Eigen::Matrix3d look_at_rotation(const Vec3d& position) {
  // Camera axes: x right, y down, z forward (toward the origin).
  const Vec3d forward = (-position).normalized();
  Vec3d up_world(0, 1, 0);
  if (std::abs(forward.dot(up_world)) > 0.999) up_world = Vec3d(1, 0, 0);
  const Vec3d right = up_world.cross(forward).normalized();
  const Vec3d down = forward.cross(right);
  Eigen::Matrix3d rot;
  rot.col(0) = right;
  rot.col(1) = down;
  rot.col(2) = forward;
  return rot;
}

}  // namespace

SceneManifest generate_dataset(const AnalyticScene& scene, const DatasetOptions& opt,
                               const std::filesystem::path& out_dir) {
  if (opt.n_views < 2) throw ConfigError("dataset needs at least two views");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);

  SceneManifest manifest;
  manifest.width = opt.resolution;
  manifest.height = opt.resolution;
  manifest.fx = manifest.fy = static_cast<double>(opt.resolution);
  manifest.cx = manifest.cy = opt.resolution / 2.0;
  manifest.background = opt.background;

  const double t_far = 2.0 * opt.camera_radius + 2.0;
  for (int v = 0; v < opt.n_views; ++v) {
    const Vec3d pos = fibonacci_point(v, opt.n_views) * opt.camera_radius;
    const Eigen::Matrix3d rot = look_at_rotation(pos);

    Image img(opt.resolution, opt.resolution);
    for (int y = 0; y < opt.resolution; ++y) {
      for (int x = 0; x < opt.resolution; ++x) {
        const Vec3d cam_dir((x + 0.5 - manifest.cx) / manifest.fx,
                            (y + 0.5 - manifest.cy) / manifest.fy, 1.0);
        const Vec3d dir = (rot * cam_dir).normalized();
        const auto trace = sphere_trace(scene, pos, dir, t_far);
        float* px = img.pixel(x, y);
        if (!trace.hit) {
          for (int c = 0; c < 3; ++c) px[c] = static_cast<float>(opt.background[c]);
          continue;
        }
        const Vec3d n = scene.gradient(trace.point);
        const Vec3d albedo = scene.albedo_at(trace.point);
        const double lambert = std::max(0.0, n.dot(opt.light_dir));
        for (int c = 0; c < 3; ++c) {
          px[c] = static_cast<float>(std::clamp(albedo[c] * lambert + opt.ambient, 0.0, 1.0));
        }
      }
    }

    char name[32];
    std::snprintf(name, sizeof(name), "view_%03d.ppm", v);
    write_ppm(img, out_dir / name);

    SceneManifest::Frame frame;
    frame.file = name;
    frame.camera_to_world.template leftCols<3>() = rot;
    frame.camera_to_world.col(3) = pos;
    manifest.frames.push_back(std::move(frame));
  }
  manifest.save(out_dir / "manifest.json");
  return manifest;
}

std::vector<Vec3d> sample_surface(const AnalyticScene& scene, int n_points, uint64_t seed) {
  if (n_points < 1) throw ConfigError("sample_surface needs n_points >= 1");
  std::vector<Vec3d> out;
  out.reserve(static_cast<size_t>(n_points));
  Rng rng(derive_seed(seed, "surface-samples"));
  constexpr double kTol = 1e-6;
  while (static_cast<int>(out.size()) < n_points) {
    Vec3d x(rng.next_range(-1, 1), rng.next_range(-1, 1), rng.next_range(-1, 1));
    bool ok = false;
    for (int it = 0; it < 64; ++it) {
      const double d = scene.sdf(x);
      if (std::abs(d) < kTol) {
        ok = true;
        break;
      }
      x -= d * scene.gradient(x);
    }
    if (ok && x.cwiseAbs().maxCoeff() <= 1.0) out.push_back(x);
  }
  return out;
}

namespace {

// Uniform-grid exact nearest neighbor: cells are visited ring by ring and the
// search stops once the closest possible cell is farther than the best hit.
class PointGrid {
 public:
  explicit PointGrid(const std::vector<Vec3d>& pts) : pts_(pts) {
    lo_ = pts[0];
    Vec3d hi = pts[0];
    for (const auto& p : pts) {
      lo_ = lo_.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const double extent = std::max((hi - lo_).maxCoeff(), 1e-12);
    const int target = static_cast<int>(std::ceil(std::cbrt(static_cast<double>(pts.size()))));
    dims_ = std::max(1, std::min(target, 64));
    cell_ = extent / dims_ * (1.0 + 1e-12);
    cells_.assign(static_cast<size_t>(dims_) * dims_ * dims_, {});
    for (size_t i = 0; i < pts.size(); ++i) {
      cells_[cell_index(coord(pts[i]))].push_back(static_cast<int>(i));
    }
  }

  double nearest_distance(const Vec3d& q) const {
    const Eigen::Vector3i base = coord(q);
    double best = std::numeric_limits<double>::infinity();
    for (int ring = 0;; ++ring) {
      // Any point in a cell at Chebyshev ring r is at least (r-1)*cell away.
      if (ring > 0 && best <= (ring - 1) * cell_) break;
      bool any_cell = false;
      for (int dz = -ring; dz <= ring; ++dz) {
        for (int dy = -ring; dy <= ring; ++dy) {
          for (int dx = -ring; dx <= ring; ++dx) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
            const Eigen::Vector3i c = base + Eigen::Vector3i(dx, dy, dz);
            if ((c.array() < 0).any() || (c.array() >= dims_).any()) continue;
            any_cell = true;
            for (const int i : cells_[cell_index(c)]) {
              best = std::min(best, (pts_[static_cast<size_t>(i)] - q).norm());
            }
          }
        }
      }
      if (!any_cell && ring > dims_) break;  // walked past the whole grid
    }
    return best;
  }

 private:
  Eigen::Vector3i coord(const Vec3d& p) const {
    Eigen::Vector3i c;
    for (int k = 0; k < 3; ++k) {
      c[k] = std::clamp(static_cast<int>((p[k] - lo_[k]) / cell_), 0, dims_ - 1);
    }
    return c;
  }
  size_t cell_index(const Eigen::Vector3i& c) const {
    return static_cast<size_t>(c.x()) +
           static_cast<size_t>(dims_) * (static_cast<size_t>(c.y()) +
                                         static_cast<size_t>(dims_) * static_cast<size_t>(c.z()));
  }

  const std::vector<Vec3d>& pts_;
  Vec3d lo_;
  double cell_ = 1.0;
  int dims_ = 1;
  std::vector<std::vector<int>> cells_;
};

double one_sided_mean(const std::vector<Vec3d>& from, const std::vector<Vec3d>& to) {
  const PointGrid grid(to);
  double acc = 0.0;
  for (const auto& p : from) acc += grid.nearest_distance(p);
  return acc / static_cast<double>(from.size());
}

}  // namespace

double chamfer_l1(const std::vector<Vec3d>& a, const std::vector<Vec3d>& b, double* acc,
                  double* comp) {
  if (a.empty() || b.empty()) throw ConfigError("chamfer of an empty point cloud");
  const double ab = one_sided_mean(a, b);
  const double ba = one_sided_mean(b, a);
  if (acc) *acc = ab;
  if (comp) *comp = ba;
  return 0.5 * (ab + ba);
}

}  // namespace hashsurf
