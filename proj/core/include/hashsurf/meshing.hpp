#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <vector>

#include "hashsurf/common.hpp"
#include "hashsurf/parallel.hpp"

namespace hashsurf {

struct TriangleMesh {
  std::vector<Vec3d> vertices;
  std::vector<std::array<int, 3>> triangles;
};

// Batched field evaluation: fills values for a list of points.
using BatchFieldFn =
    std::function<void(const std::vector<Vec3d>& pts, std::vector<double>& values)>;

// 256-case marching cubes over a regular grid on [-bound,bound]^3 with linear
// edge interpolation of the zero crossing; triangles are wound so normals
// point toward positive SDF. resolution = cells per axis.
TriangleMesh marching_cubes(const BatchFieldFn& field, int resolution, double bound,
                            ThreadPool& pool);
// Convenience overload for scalar callables.
TriangleMesh marching_cubes(const std::function<double(const Vec3d&)>& field, int resolution,
                            double bound, ThreadPool& pool);

enum class MeshFormat { Obj, Ply };

// Plain-text OBJ (v/f, 1-based) or ASCII PLY; byte-deterministic.
void write_mesh(const TriangleMesh& mesh, const std::filesystem::path& path, MeshFormat format);

// Area-weighted uniform sampling of the triangle surfaces.
std::vector<Vec3d> mesh_to_points(const TriangleMesh& mesh, int n_points, uint64_t seed);

}  // namespace hashsurf
