#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "hashsurf/spatial_mask.hpp"

namespace hashsurf {

enum class Precision { F32, F64 };

// Model and optimization hyperparameters. Defaults come from a scale preset:
// "paper" carries the full-size specification, "desk" is the CPU-sized
// configuration the test suite trains.
struct TrainConfig {
  // SDF feature grid
  int sdf_levels = 0;
  int sdf_n_min = 0;
  int sdf_n_max = 0;
  int sdf_feature_dim = 0;
  int sdf_log2_table = 0;
  // Mask field (resolution range is 2^d_min .. 2^d_max)
  int mask_levels = 0;
  int mask_d_min = 0;
  int mask_d_max = 0;
  int mask_feature_dim = 0;
  int mask_log2_table = 0;
  int mask_hidden_width = 16;
  // MLPs
  int sdf_hidden_width = 0;
  int geo_feature_dim = 0;
  int rgb_hidden_width = 0;
  int rgb_hidden_layers = 4;
  double softplus_beta = 100.0;
  // Initialization
  double feature_init_scale = 1e-4;
  double mask_bias_init = 1.0;
  double geo_init_radius = 0.5;
  double zeta_init = 0.3;
  // Masking behavior
  MaskActivation mask_activation = MaskActivation::Sigmoid;
  MaskMode mask_mode = MaskMode::Learned;
  // Optimization
  int64_t total_steps = 20000;
  int rays_per_step = 0;
  int samples_per_ray = 0;
  double learning_rate = 1e-3;
  int64_t lr_warmup_steps = 1000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  double adam_eps = 1e-15;
  double w_eik = 0.1;
  double w_curv = 5e-4;
  bool curvature_enabled = true;
  int64_t curvature_warmup_steps = 1000;
  int l_init = 4;
  int64_t unveil_interval = 1250;
  uint64_t seed = 0;

  static TrainConfig preset_paper();
  static TrainConfig preset_desk();
  void validate() const;  // throws ConfigError
};

// TrainConfig plus artifact I/O; one flat JSON document, unknown keys are
// rejected.
struct RunConfig {
  TrainConfig train;
  std::string scale = "desk";
  std::string dataset_dir;
  std::string out_dir = "out";
  int64_t checkpoint_interval = 5000;
  Precision precision = Precision::F32;
  int threads = 0;  // 0 = ADAPTIVE_HASH_THREADS / hardware
  int mesh_resolution = 256;
  int eval_points = 20000;

  static RunConfig defaults(const std::string& scale_preset);
  static RunConfig from_json_text(const std::string& text);
  static RunConfig from_json_file(const std::filesystem::path& path);
  // Applies one "key=value" override (same keys as the JSON document).
  void apply_override(const std::string& key_value);
  std::string to_json_text() const;  // sorted keys, deterministic
  void validate() const;
};

}  // namespace hashsurf
