#include "hashsurf/meshing.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_map>

#include "hashsurf/rng.hpp"

namespace hashsurf {

namespace {

// Cube corners are indexed by bits (x, y, z); edges by (axis, base corner).
struct CubeTopology {
  std::array<std::array<int, 2>, 12> edge_corners;
  // Per sign case (bit set = inside), triangle fans as edge-id triples.
  std::array<std::vector<std::array<int, 3>>, 256> triangles;
};

Eigen::Vector3d corner_pos(int c) {
  return {static_cast<double>(c & 1), static_cast<double>((c >> 1) & 1),
          static_cast<double>((c >> 2) & 1)};
}

// Builds the case table once: for every sign pattern, the level-set boundary
// segments on each face are chained into closed loops and fan-triangulated.
// The per-face segment rule depends only on the face's own corner signs, so
// neighboring cells always agree on the shared face and the mesh is
// watertight.
CubeTopology build_topology() {
  CubeTopology topo;

  int edge_of[8][8];
  for (auto& row : edge_of) std::fill(row, row + 8, -1);
  int e = 0;
  for (int axis = 0; axis < 3; ++axis) {
    for (int c = 0; c < 8; ++c) {
      if (c & (1 << axis)) continue;
      const int c2 = c | (1 << axis);
      topo.edge_corners[static_cast<size_t>(e)] = {c, c2};
      edge_of[c][c2] = e;
      edge_of[c2][c] = e;
      ++e;
    }
  }

  // Faces: (axis, side) with outward normal along +-axis.
  struct Face {
    int corners[4];      // cyclic order, counter-clockwise seen from outside
    Eigen::Vector3d normal;
  };
  std::vector<Face> faces;
  for (int axis = 0; axis < 3; ++axis) {
    for (int side = 0; side < 2; ++side) {
      const int u = (axis + 1) % 3, v = (axis + 2) % 3;
      Face f;
      int base = side ? (1 << axis) : 0;
      // Corner cycle base, +u, +u+v, +v; flip for inward-facing sides.
      f.corners[0] = base;
      f.corners[1] = base | (1 << u);
      f.corners[2] = base | (1 << u) | (1 << v);
      f.corners[3] = base | (1 << v);
      if (!side) std::swap(f.corners[1], f.corners[3]);
      f.normal = Eigen::Vector3d::Zero();
      f.normal[axis] = side ? 1.0 : -1.0;
      faces.push_back(f);
    }
  }

  for (int mask = 0; mask < 256; ++mask) {
    const auto inside = [&](int c) { return (mask >> c) & 1; };
    // Directed segments between edge midpoints: inside region to the left
    // when viewed from outside the cube.
    std::vector<std::array<int, 2>> segments;
    for (const Face& f : faces) {
      std::vector<int> crossings;
      for (int k = 0; k < 4; ++k) {
        const int a = f.corners[k], b = f.corners[(k + 1) % 4];
        if (inside(a) != inside(b)) crossings.push_back(edge_of[a][b]);
      }
      if (crossings.empty()) continue;

      auto midpoint = [&](int edge) -> Eigen::Vector3d {
        const auto& ec = topo.edge_corners[static_cast<size_t>(edge)];
        return 0.5 * (corner_pos(ec[0]) + corner_pos(ec[1]));
      };
      auto orient = [&](int e1, int e2, int reference_inside_corner) {
        // Keeps the reference inside corner on the left of e1 -> e2 when
        // viewed from outside the cube.
        const Eigen::Vector3d p1 = midpoint(e1), p2 = midpoint(e2);
        const double side =
            f.normal.dot((p2 - p1).cross(corner_pos(reference_inside_corner) - p1));
        return side > 0 ? std::array<int, 2>{e1, e2} : std::array<int, 2>{e2, e1};
      };

      if (crossings.size() == 2) {
        int ref = -1;
        for (int k = 0; k < 4 && ref < 0; ++k) {
          const int c = f.corners[k];
          if (!inside(c)) continue;
          const Eigen::Vector3d p1 = midpoint(crossings[0]), p2 = midpoint(crossings[1]);
          if (std::abs(f.normal.dot((p2 - p1).cross(corner_pos(c) - p1))) > 1e-12) ref = c;
        }
        segments.push_back(orient(crossings[0], crossings[1], ref));
      } else {
        // Ambiguous face (two diagonal inside corners): fixed rule that
        // depends only on the face's own signs, so both cells sharing the
        // face agree. Each segment cuts off one inside corner by pairing
        // the two crossing edges incident to it.
        for (int k = 0; k < 4; ++k) {
          const int c = f.corners[k];
          if (!inside(c)) continue;
          const int prev = f.corners[(k + 3) % 4];
          const int next = f.corners[(k + 1) % 4];
          segments.push_back(orient(edge_of[prev][c], edge_of[c][next], c));
        }
      }
    }

    // Chain directed segments into loops.
    std::array<int, 12> next;
    next.fill(-1);
    for (const auto& s : segments) next[static_cast<size_t>(s[0])] = s[1];
    std::array<bool, 12> used{};
    for (const auto& s : segments) {
      if (used[static_cast<size_t>(s[0])]) continue;
      std::vector<int> loop;
      int cur = s[0];
      while (!used[static_cast<size_t>(cur)]) {
        used[static_cast<size_t>(cur)] = true;
        loop.push_back(cur);
        cur = next[static_cast<size_t>(cur)];
        if (cur < 0) break;  // cannot happen for valid sign patterns
      }
      // Loops carry inside-on-the-left orientation; reversing the fan winds
      // triangle normals toward positive SDF.
      for (size_t i = 1; i + 1 < loop.size(); ++i) {
        topo.triangles[static_cast<size_t>(mask)].push_back({loop[0], loop[i + 1], loop[i]});
      }
    }
  }
  return topo;
}

const CubeTopology& topology() {
  static const CubeTopology topo = build_topology();
  return topo;
}

}  // namespace

TriangleMesh marching_cubes(const BatchFieldFn& field, int resolution, double bound,
                            ThreadPool& pool) {
  if (resolution < 2) throw ConfigError("marching cubes resolution must be >= 2");
  const int n = resolution + 1;  // grid vertices per axis
  const double cell = 2.0 * bound / resolution;

  // Evaluate the field on the full vertex grid, one z-slab per task.
  std::vector<float> values(static_cast<size_t>(n) * n * n);
  pool.run(n, [&](int, int64_t z0, int64_t z1) {
    std::vector<Vec3d> pts;
    std::vector<double> vals;
    pts.reserve(static_cast<size_t>(n) * n);
    for (int64_t z = z0; z < z1; ++z) {
      pts.clear();
      for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
          pts.emplace_back(-bound + cell * x, -bound + cell * y, -bound + cell * z);
        }
      }
      field(pts, vals);
      float* dst = values.data() + static_cast<size_t>(z) * n * n;
      for (size_t i = 0; i < vals.size(); ++i) dst[i] = static_cast<float>(vals[i]);
    }
  });

  const auto& topo = topology();
  TriangleMesh mesh;
  std::unordered_map<uint64_t, int> vertex_of_edge;

  auto value_at = [&](int x, int y, int z) {
    return values[static_cast<size_t>(z) * n * n + static_cast<size_t>(y) * n +
                  static_cast<size_t>(x)];
  };
  auto edge_key = [&](int axis, int x, int y, int z) {
    return (static_cast<uint64_t>(axis) << 54) | (static_cast<uint64_t>(z) << 36) |
           (static_cast<uint64_t>(y) << 18) | static_cast<uint64_t>(x);
  };

  for (int z = 0; z < resolution; ++z) {
    for (int y = 0; y < resolution; ++y) {
      for (int x = 0; x < resolution; ++x) {
        int mask = 0;
        float corner_val[8];
        for (int c = 0; c < 8; ++c) {
          const float v =
              value_at(x + (c & 1), y + ((c >> 1) & 1), z + ((c >> 2) & 1));
          corner_val[c] = v;
          if (v < 0.0f) mask |= 1 << c;
        }
        const auto& tris = topo.triangles[static_cast<size_t>(mask)];
        if (tris.empty()) continue;

        int edge_vertex[12];
        std::fill(edge_vertex, edge_vertex + 12, -1);
        auto vertex_on_edge = [&](int edge) {
          if (edge_vertex[edge] >= 0) return edge_vertex[edge];
          const auto& ec = topo.edge_corners[static_cast<size_t>(edge)];
          const int c0 = ec[0], c1 = ec[1];
          const int axis = (c1 ^ c0) == 1 ? 0 : ((c1 ^ c0) == 2 ? 1 : 2);
          const int ex = x + (c0 & 1), ey = y + ((c0 >> 1) & 1), ez = z + ((c0 >> 2) & 1);
          const uint64_t key = edge_key(axis, ex, ey, ez);
          auto it = vertex_of_edge.find(key);
          if (it != vertex_of_edge.end()) {
            edge_vertex[edge] = it->second;
            return it->second;
          }
          const double v0 = corner_val[c0], v1 = corner_val[c1];
          const double t = v0 / (v0 - v1);
          Vec3d p(-bound + cell * ex, -bound + cell * ey, -bound + cell * ez);
          p[axis] += cell * t;
          const int idx = static_cast<int>(mesh.vertices.size());
          mesh.vertices.push_back(p);
          vertex_of_edge.emplace(key, idx);
          edge_vertex[edge] = idx;
          return idx;
        };

        for (const auto& tri : tris) {
          const int a = vertex_on_edge(tri[0]);
          const int b = vertex_on_edge(tri[1]);
          const int c = vertex_on_edge(tri[2]);
          if (a == b || b == c || a == c) continue;  // degenerate sliver
          mesh.triangles.push_back({a, b, c});
        }
      }
    }
  }
  return mesh;
}

TriangleMesh marching_cubes(const std::function<double(const Vec3d&)>& field, int resolution,
                            double bound, ThreadPool& pool) {
  BatchFieldFn batch = [&](const std::vector<Vec3d>& pts, std::vector<double>& vals) {
    vals.resize(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) vals[i] = field(pts[i]);
  };
  return marching_cubes(batch, resolution, bound, pool);
}

void write_mesh(const TriangleMesh& mesh, const std::filesystem::path& path, MeshFormat format) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write mesh: " + path.string());
  char buf[160];
  if (format == MeshFormat::Obj) {
    for (const auto& v : mesh.vertices) {
      std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", v.x(), v.y(), v.z());
      out << buf;
    }
    for (const auto& t : mesh.triangles) {
      std::snprintf(buf, sizeof(buf), "f %d %d %d\n", t[0] + 1, t[1] + 1, t[2] + 1);
      out << buf;
    }
  } else {
    out << "ply\nformat ascii 1.0\n";
    out << "element vertex " << mesh.vertices.size() << "\n";
    out << "property double x\nproperty double y\nproperty double z\n";
    out << "element face " << mesh.triangles.size() << "\n";
    out << "property list uchar int vertex_indices\nend_header\n";
    for (const auto& v : mesh.vertices) {
      std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g\n", v.x(), v.y(), v.z());
      out << buf;
    }
    for (const auto& t : mesh.triangles) {
      std::snprintf(buf, sizeof(buf), "3 %d %d %d\n", t[0], t[1], t[2]);
      out << buf;
    }
  }
  if (!out) throw ConfigError("failed writing mesh: " + path.string());
}

std::vector<Vec3d> mesh_to_points(const TriangleMesh& mesh, int n_points, uint64_t seed) {
  if (mesh.triangles.empty()) throw ConfigError("cannot sample an empty mesh");
  std::vector<double> cumulative(mesh.triangles.size());
  double total = 0.0;
  for (size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& t = mesh.triangles[i];
    const Vec3d& a = mesh.vertices[static_cast<size_t>(t[0])];
    const Vec3d& b = mesh.vertices[static_cast<size_t>(t[1])];
    const Vec3d& c = mesh.vertices[static_cast<size_t>(t[2])];
    total += 0.5 * (b - a).cross(c - a).norm();
    cumulative[i] = total;
  }
  if (total <= 0.0) throw ConfigError("mesh has zero total area");

  std::vector<Vec3d> points;
  points.reserve(static_cast<size_t>(n_points));
  Rng rng(derive_seed(seed, "mesh-samples"));
  for (int i = 0; i < n_points; ++i) {
    const double pick = rng.next_double() * total;
    const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), pick);
    const size_t ti = static_cast<size_t>(it - cumulative.begin());
    const auto& t = mesh.triangles[std::min(ti, mesh.triangles.size() - 1)];
    double u = rng.next_double();
    double v = rng.next_double();
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    const Vec3d& a = mesh.vertices[static_cast<size_t>(t[0])];
    const Vec3d& b = mesh.vertices[static_cast<size_t>(t[1])];
    const Vec3d& c = mesh.vertices[static_cast<size_t>(t[2])];
    points.push_back(a + u * (b - a) + v * (c - a));
  }
  return points;
}

}  // namespace hashsurf
