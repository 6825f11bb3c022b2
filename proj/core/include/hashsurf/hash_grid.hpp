#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <vector>

#include "hashsurf/common.hpp"
#include "hashsurf/nn.hpp"

namespace hashsurf {

struct GridLevelSpec {
  int level = 0;
  int resolution = 0;        // vertices per axis is resolution + 1
  int feature_dim = 0;
  int64_t table_entries = 0;
  bool dense = false;        // dense iff (resolution+1)^3 <= table size
};

// Geometric progression N_l = floor(n_min * b^l), b = (n_max/n_min)^(1/(L-1)),
// with both endpoints enforced exactly.
std::vector<int> level_resolutions(int n_min, int n_max, int levels);

// Spatial hash of Mueller et al.; full 64-bit value before the modulus.
inline uint64_t vertex_hash(uint64_t vx, uint64_t vy, uint64_t vz) {
  return (vx * 1ULL) ^ (vy * 2654435761ULL) ^ (vz * 805459861ULL);
}

// Table index of an integer vertex; row-major in dense mode, hashed otherwise.
int64_t vertex_index(const GridLevelSpec& level, int vx, int vy, int vz);

template <class S>
struct EncodeCache {
  int64_t points = 0;
  int active_levels = 0;
  std::vector<int32_t> corner;  // 8 * level_count * points table indices
  std::vector<S> frac;          // 3 * level_count * points cell fractions
  bool valid = false;
};

// Multi-resolution feature grid over [-1,1]^3 with trilinear interpolation.
// One trainable table per level lives in the ParameterStore as
// "<prefix>.level<NN>".
template <class S>
class MultiResHashGrid {
 public:
  struct Config {
    int levels = 0;
    int n_min = 0;
    int n_max = 0;
    int feature_dim = 0;
    int64_t table_size = 0;
  };

  MultiResHashGrid(ParameterStore<S>& store, const std::string& prefix, const Config& cfg,
                   Rng& init_rng, double init_scale);

  int level_count() const { return static_cast<int>(levels_.size()); }
  int feature_dim() const { return feature_dim_; }
  int output_dim() const { return level_count() * feature_dim_; }
  const GridLevelSpec& level(int l) const { return levels_[static_cast<size_t>(l)]; }
  const std::vector<GridLevelSpec>& levels() const { return levels_; }
  int table_handle(int l) const { return table_handles_[static_cast<size_t>(l)]; }

  // pts is 3 x B; levels >= active_levels contribute exact zero blocks.
  // Out-of-domain queries are clamped to the cube and counted.
  void encode(const ParameterStore<S>& store, const MatX<S>& pts, int active_levels,
              EncodeCache<S>& cache, MatX<S>& out) const;
  // Scatters upstream * trilinear weight into the 8 corner gradients of every
  // active level; inactive blocks scatter nothing.
  void encode_backward(const ParameterStore<S>& store, const EncodeCache<S>& cache,
                       const MatX<S>& upstream, GradBuffer<S>& sink) const;

  int64_t clamp_count() const { return clamp_count_.load(std::memory_order_relaxed); }

 private:
  std::vector<GridLevelSpec> levels_;
  std::vector<int> table_handles_;
  int feature_dim_ = 0;
  mutable std::atomic<int64_t> clamp_count_{0};
};

}  // namespace hashsurf
