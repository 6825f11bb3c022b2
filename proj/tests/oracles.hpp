#pragma once

// Independent reference implementations used as test oracles. These are kept
// as plain loops, deliberately separate from the library's compute paths.

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace oracles {

// y = act(W x + b) with row-major W.
inline std::vector<double> dense_forward(const std::vector<double>& w,
                                         const std::vector<double>& b,
                                         const std::vector<double>& x, int out_dim, int in_dim,
                                         const char* activation, double beta = 100.0) {
  std::vector<double> y(static_cast<size_t>(out_dim), 0.0);
  for (int o = 0; o < out_dim; ++o) {
    double acc = b[static_cast<size_t>(o)];
    for (int i = 0; i < in_dim; ++i) {
      acc += w[static_cast<size_t>(o) * in_dim + i] * x[static_cast<size_t>(i)];
    }
    std::string act(activation);
    if (act == "softplus") {
      acc = beta * acc > 30.0 ? acc : std::log1p(std::exp(beta * acc)) / beta;
    } else if (act == "sigmoid") {
      acc = 1.0 / (1.0 + std::exp(-acc));
    } else if (act == "relu") {
      acc = std::max(0.0, acc);
    }
    y[static_cast<size_t>(o)] = acc;
  }
  return y;
}

// Spatial hash identical in statement to the spec'd formula, written from the
// formula rather than the library code.
inline uint64_t hash_index(uint64_t vx, uint64_t vy, uint64_t vz, uint64_t table) {
  return ((vx * 1ULL) ^ (vy * 2654435761ULL) ^ (vz * 805459861ULL)) % table;
}

// Trilinear interpolation of 8 corner feature vectors with weights from the
// fractional position.
inline std::vector<double> trilinear(const std::array<std::vector<double>, 8>& corners,
                                     double fx, double fy, double fz) {
  const size_t f = corners[0].size();
  std::vector<double> out(f, 0.0);
  for (int k = 0; k < 8; ++k) {
    const double wx = (k & 1) ? fx : 1.0 - fx;
    const double wy = (k & 2) ? fy : 1.0 - fy;
    const double wz = (k & 4) ? fz : 1.0 - fz;
    const double w = wx * wy * wz;
    for (size_t i = 0; i < f; ++i) out[i] += w * corners[static_cast<size_t>(k)][i];
  }
  return out;
}

// Scalar Adam trajectory on f(w) = w^2 starting from w0.
inline std::vector<double> adam_on_square(double w0, int steps, double lr, double b1, double b2,
                                          double eps) {
  double w = w0, m = 0.0, v = 0.0;
  std::vector<double> traj;
  for (int t = 1; t <= steps; ++t) {
    const double g = 2.0 * w;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    w -= lr * mh / (std::sqrt(vh) + eps);
    traj.push_back(w);
  }
  return traj;
}

// O(n^2) Chamfer-L1.
inline double chamfer_bruteforce(const std::vector<std::array<double, 3>>& a,
                                 const std::vector<std::array<double, 3>>& b) {
  auto one_sided = [](const std::vector<std::array<double, 3>>& from,
                      const std::vector<std::array<double, 3>>& to) {
    double acc = 0.0;
    for (const auto& p : from) {
      double best = 1e300;
      for (const auto& q : to) {
        const double dx = p[0] - q[0], dy = p[1] - q[1], dz = p[2] - q[2];
        best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
      }
      acc += best;
    }
    return acc / static_cast<double>(from.size());
  };
  return 0.5 * (one_sided(a, b) + one_sided(b, a));
}

// Minimal OBJ reader for round-trip checks: v and f lines only.
struct ParsedObj {
  std::vector<std::array<double, 3>> vertices;
  std::vector<std::array<int, 3>> faces;
};

}  // namespace oracles
