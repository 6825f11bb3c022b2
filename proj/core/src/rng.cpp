#include "hashsurf/rng.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace hashsurf {

namespace {

uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(uint64_t seed) {
  uint64_t s = seed;
  for (auto& w : state_) w = splitmix64(s);
}

uint64_t Rng::next_u64() {
  const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
  const uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

uint64_t Rng::next_below(uint64_t n) { return next_u64() % n; }

double Rng::next_range(double lo, double hi) {
  return lo + (hi - lo) * next_double();
}

double Rng::next_normal() {
  // Uncached Box-Muller: two draws per sample keeps the stream position a
  // pure function of the call count, so serialized state alone restores it.
  double u1 = next_double();
  const double u2 = next_double();
  while (u1 <= 0.0) u1 = next_double();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return r * std::cos(2.0 * M_PI * u2);
}

std::string Rng::state_hex() const {
  char buf[4 * 16 + 4];
  std::snprintf(buf, sizeof(buf), "%016llx%016llx%016llx%016llx",
                static_cast<unsigned long long>(state_[0]),
                static_cast<unsigned long long>(state_[1]),
                static_cast<unsigned long long>(state_[2]),
                static_cast<unsigned long long>(state_[3]));
  return std::string(buf);
}

Rng Rng::from_state_hex(const std::string& hex) {
  if (hex.size() != 64) throw std::invalid_argument("rng state must be 64 hex chars");
  Rng r;
  for (int i = 0; i < 4; ++i) {
    r.state_[i] = std::stoull(hex.substr(static_cast<size_t>(i) * 16, 16), nullptr, 16);
  }
  return r;
}

uint64_t derive_seed(uint64_t base_seed, const std::string& component) {
  // FNV-1a over the component name folded into the base seed.
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : component) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  uint64_t s = base_seed ^ h;
  return splitmix64(s);
}

}  // namespace hashsurf
