#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "hashsurf/nn.hpp"
#include "hashsurf/rng.hpp"

namespace hashsurf {

// Single-file container: an 8-byte little-endian header length, a JSON
// header (version, config echo, step, adam step, RNG state, array table),
// then one length-prefixed little-endian f32 blob per named array. Parameter
// values and both Adam moments are stored so a resumed run continues
// bit-for-bit in f32 mode.
inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  int version = 0;
  std::string config_json;
  int64_t step = 0;
  int64_t adam_steps = 0;
  Rng rng;
};

template <class S>
void save_checkpoint(const std::filesystem::path& path, const std::string& config_json,
                     const ParameterStore<S>& store, int64_t step, const Rng& rng);

// Reads the header only (to rebuild the model from the config echo).
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

// Restores array contents into an already-built store; array names and sizes
// must match the file exactly.
template <class S>
CheckpointMeta load_checkpoint(const std::filesystem::path& path, ParameterStore<S>& store);

}  // namespace hashsurf
