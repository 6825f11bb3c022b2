#include "hashsurf/hash_grid.hpp"

#include <cmath>
#include <cstdio>

namespace hashsurf {

std::vector<int> level_resolutions(int n_min, int n_max, int levels) {
  if (n_min < 2) throw ConfigError("grid n_min must be >= 2");
  if (n_max < n_min) throw ConfigError("grid n_max must be >= n_min");
  if (levels < 1) throw ConfigError("grid needs at least one level");
  if (levels == 1) {
    if (n_max != n_min) throw ConfigError("single-level grid requires n_min == n_max");
    return {n_min};
  }
  const double b = std::pow(static_cast<double>(n_max) / n_min, 1.0 / (levels - 1));
  std::vector<int> out(static_cast<size_t>(levels));
  for (int l = 0; l < levels; ++l) {
    out[static_cast<size_t>(l)] =
        static_cast<int>(std::floor(n_min * std::pow(b, static_cast<double>(l))));
  }
  out.front() = n_min;
  out.back() = n_max;
  for (int l = 1; l < levels; ++l) {
    if (out[static_cast<size_t>(l)] <= out[static_cast<size_t>(l) - 1]) {
      throw ConfigError("level resolutions must be strictly increasing");
    }
  }
  return out;
}

int64_t vertex_index(const GridLevelSpec& level, int vx, int vy, int vz) {
  const int n = level.resolution;
  if (vx < 0 || vy < 0 || vz < 0 || vx > n || vy > n || vz > n) {
    throw ContractError("vertex outside grid level");
  }
  if (level.dense) {
    const int64_t m = n + 1;
    return vx + m * (vy + m * vz);
  }
  return static_cast<int64_t>(vertex_hash(static_cast<uint64_t>(vx), static_cast<uint64_t>(vy),
                                          static_cast<uint64_t>(vz)) %
                              static_cast<uint64_t>(level.table_entries));
}

template <class S>
MultiResHashGrid<S>::MultiResHashGrid(ParameterStore<S>& store, const std::string& prefix,
                                      const Config& cfg, Rng& init_rng, double init_scale)
    : feature_dim_(cfg.feature_dim) {
  if (cfg.feature_dim < 1) throw ConfigError("grid feature_dim must be >= 1");
  if (cfg.table_size < 8) throw ConfigError("grid table_size too small");
  const auto res = level_resolutions(cfg.n_min, cfg.n_max, cfg.levels);
  for (int l = 0; l < cfg.levels; ++l) {
    GridLevelSpec spec;
    spec.level = l;
    spec.resolution = res[static_cast<size_t>(l)];
    spec.feature_dim = cfg.feature_dim;
    const int64_t verts = static_cast<int64_t>(spec.resolution + 1) * (spec.resolution + 1) *
                          (spec.resolution + 1);
    spec.dense = verts <= cfg.table_size;
    spec.table_entries = spec.dense ? verts : cfg.table_size;
    levels_.push_back(spec);

    char name[64];
    std::snprintf(name, sizeof(name), ".level%02d", l);
    const int h = store.add(prefix + name, spec.table_entries * cfg.feature_dim);
    table_handles_.push_back(h);
    fill_uniform(store.values(h), init_rng, -init_scale, init_scale);
  }
}

namespace {

struct CellCoord {
  int cx, cy, cz;
};

// Maps one coordinate from [-1,1] to cell index plus fraction at resolution n.
// Exact upper-boundary queries land in the last cell with fraction 1.
template <class S>
inline void locate(S x, int n, int& c, S& f) {
  const S g = (x + S(1)) * S(0.5) * static_cast<S>(n);
  S fl = std::floor(g);
  int ci = static_cast<int>(fl);
  if (ci < 0) {
    ci = 0;
    fl = S(0);
  } else if (ci >= n) {
    ci = n - 1;
    fl = static_cast<S>(n - 1);
  }
  c = ci;
  f = g - fl;
}

}  // namespace

template <class S>
void MultiResHashGrid<S>::encode(const ParameterStore<S>& store, const MatX<S>& pts,
                                 int active_levels, EncodeCache<S>& cache, MatX<S>& out) const {
  const int L = level_count();
  const int F = feature_dim_;
  if (pts.rows() != 3) throw ConfigError("encode expects 3 x B points");
  if (active_levels < 1 || active_levels > L) throw ConfigError("active_levels out of range");
  const int64_t B = pts.cols();

  cache.points = B;
  cache.active_levels = active_levels;
  cache.corner.resize(static_cast<size_t>(8) * L * B);
  cache.frac.resize(static_cast<size_t>(3) * L * B);
  cache.valid = true;

  out.resize(static_cast<Eigen::Index>(L) * F, B);
  if (active_levels < L) {
    out.bottomRows(static_cast<Eigen::Index>(L - active_levels) * F).setZero();
  }

  // Clamp once into a scratch row block; counts out-of-domain queries.
  int64_t clamped = 0;
  MatX<S> q = pts;
  for (int64_t b = 0; b < B; ++b) {
    S* c = q.data() + 3 * b;
    if (c[0] < S(-1) || c[0] > S(1) || c[1] < S(-1) || c[1] > S(1) || c[2] < S(-1) ||
        c[2] > S(1)) {
      ++clamped;
      c[0] = std::clamp(c[0], S(-1), S(1));
      c[1] = std::clamp(c[1], S(-1), S(1));
      c[2] = std::clamp(c[2], S(-1), S(1));
    }
  }
  if (clamped) clamp_count_.fetch_add(clamped, std::memory_order_relaxed);

  const Eigen::Index out_rows = out.rows();
  for (int l = 0; l < active_levels; ++l) {
    const GridLevelSpec& spec = levels_[static_cast<size_t>(l)];
    const int n = spec.resolution;
    const S* table = store.values(table_handles_[static_cast<size_t>(l)]).data();
    int32_t* corners = cache.corner.data() + static_cast<size_t>(8) * l * B;
    S* fracs = cache.frac.data() + static_cast<size_t>(3) * l * B;
    const bool dense = spec.dense;
    const int64_t m = n + 1;
    const uint64_t T = static_cast<uint64_t>(spec.table_entries);
    const uint64_t pow2_mask = (T & (T - 1)) == 0 ? T - 1 : 0;

    for (int64_t b = 0; b < B; ++b) {
      const S* p = q.data() + 3 * b;
      int cx, cy, cz;
      S fx, fy, fz;
      locate(p[0], n, cx, fx);
      locate(p[1], n, cy, fy);
      locate(p[2], n, cz, fz);
      fracs[3 * b + 0] = fx;
      fracs[3 * b + 1] = fy;
      fracs[3 * b + 2] = fz;

      int32_t idx[8];
      if (dense) {
        const int64_t base = cx + m * (cy + m * cz);
        idx[0] = static_cast<int32_t>(base);
        idx[1] = static_cast<int32_t>(base + 1);
        idx[2] = static_cast<int32_t>(base + m);
        idx[3] = static_cast<int32_t>(base + m + 1);
        idx[4] = static_cast<int32_t>(base + m * m);
        idx[5] = static_cast<int32_t>(base + m * m + 1);
        idx[6] = static_cast<int32_t>(base + m * m + m);
        idx[7] = static_cast<int32_t>(base + m * m + m + 1);
      } else if (pow2_mask) {
        const uint64_t hy0 = static_cast<uint64_t>(cy) * 2654435761ULL;
        const uint64_t hy1 = static_cast<uint64_t>(cy + 1) * 2654435761ULL;
        const uint64_t hz0 = static_cast<uint64_t>(cz) * 805459861ULL;
        const uint64_t hz1 = static_cast<uint64_t>(cz + 1) * 805459861ULL;
        const uint64_t x0 = static_cast<uint64_t>(cx), x1 = static_cast<uint64_t>(cx + 1);
        idx[0] = static_cast<int32_t>((x0 ^ hy0 ^ hz0) & pow2_mask);
        idx[1] = static_cast<int32_t>((x1 ^ hy0 ^ hz0) & pow2_mask);
        idx[2] = static_cast<int32_t>((x0 ^ hy1 ^ hz0) & pow2_mask);
        idx[3] = static_cast<int32_t>((x1 ^ hy1 ^ hz0) & pow2_mask);
        idx[4] = static_cast<int32_t>((x0 ^ hy0 ^ hz1) & pow2_mask);
        idx[5] = static_cast<int32_t>((x1 ^ hy0 ^ hz1) & pow2_mask);
        idx[6] = static_cast<int32_t>((x0 ^ hy1 ^ hz1) & pow2_mask);
        idx[7] = static_cast<int32_t>((x1 ^ hy1 ^ hz1) & pow2_mask);
      } else {
        for (int k = 0; k < 8; ++k) {
          const uint64_t h = vertex_hash(static_cast<uint64_t>(cx + (k & 1)),
                                         static_cast<uint64_t>(cy + ((k >> 1) & 1)),
                                         static_cast<uint64_t>(cz + (k >> 2)));
          idx[k] = static_cast<int32_t>(h % T);
        }
      }
      int32_t* cdst = corners + 8 * b;
      for (int k = 0; k < 8; ++k) cdst[k] = idx[k];

      const S wx[2] = {S(1) - fx, fx};
      const S wy[2] = {S(1) - fy, fy};
      const S wz[2] = {S(1) - fz, fz};
      S* dst = out.data() + b * out_rows + static_cast<int64_t>(l) * F;
      for (int f = 0; f < F; ++f) dst[f] = S(0);
      for (int k = 0; k < 8; ++k) {
        const S w = wx[k & 1] * wy[(k >> 1) & 1] * wz[k >> 2];
        const S* src = table + static_cast<int64_t>(idx[k]) * F;
        for (int f = 0; f < F; ++f) dst[f] += w * src[f];
      }
    }
  }
}

template <class S>
void MultiResHashGrid<S>::encode_backward(const ParameterStore<S>& store,
                                          const EncodeCache<S>& cache, const MatX<S>& upstream,
                                          GradBuffer<S>& sink) const {
  if (!cache.valid) throw ContractError("encode_backward without cached encode");
  const int L = level_count();
  const int F = feature_dim_;
  const int64_t B = cache.points;
  if (upstream.rows() != static_cast<Eigen::Index>(L) * F || upstream.cols() != B) {
    throw ConfigError("encode_backward upstream shape mismatch");
  }
  (void)store;
  const Eigen::Index up_rows = upstream.rows();
  for (int l = 0; l < cache.active_levels; ++l) {
    S* gtable = sink.grad(table_handles_[static_cast<size_t>(l)]);
    const int32_t* corners = cache.corner.data() + static_cast<size_t>(8) * l * B;
    const S* fracs = cache.frac.data() + static_cast<size_t>(3) * l * B;
    for (int64_t b = 0; b < B; ++b) {
      const S fx = fracs[3 * b + 0];
      const S fy = fracs[3 * b + 1];
      const S fz = fracs[3 * b + 2];
      const S wx[2] = {S(1) - fx, fx};
      const S wy[2] = {S(1) - fy, fy};
      const S wz[2] = {S(1) - fz, fz};
      const S* up = upstream.data() + b * up_rows + static_cast<int64_t>(l) * F;
      const int32_t* csrc = corners + 8 * b;
      for (int k = 0; k < 8; ++k) {
        const S w = wx[k & 1] * wy[(k >> 1) & 1] * wz[k >> 2];
        S* dst = gtable + static_cast<int64_t>(csrc[k]) * F;
        for (int f = 0; f < F; ++f) dst[f] += w * up[f];
      }
    }
  }
}

template class MultiResHashGrid<float>;
template class MultiResHashGrid<double>;

}  // namespace hashsurf
