#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace hashsurf {

// xoshiro256++ with splitmix64 seeding. Self-contained so that streams are
// bit-identical across platforms and can be serialized into checkpoints.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  // Uniform in [0,1) with 53 random bits.
  double next_double();
  // Uniform integer in [0,n), n > 0.
  uint64_t next_below(uint64_t n);
  // Uniform in [lo,hi).
  double next_range(double lo, double hi);
  // Standard normal via Box-Muller, two draws per sample.
  double next_normal();

  std::string state_hex() const;
  static Rng from_state_hex(const std::string& hex);

  bool operator==(const Rng&) const = default;

 private:
  std::array<uint64_t, 4> state_{};
};

// Derives an independent stream for a named component from a base seed, so
// that adding or removing one component does not shift any other stream.
uint64_t derive_seed(uint64_t base_seed, const std::string& component);

}  // namespace hashsurf
