#include "hashsurf/config.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace hashsurf {

using nlohmann::json;

TrainConfig TrainConfig::preset_paper() {
  TrainConfig c;
  c.sdf_levels = 16;
  c.sdf_n_min = 32;
  c.sdf_n_max = 2048;
  c.sdf_feature_dim = 8;
  c.sdf_log2_table = 22;
  c.mask_levels = 8;
  c.mask_d_min = 5;
  c.mask_d_max = 11;
  c.mask_feature_dim = 4;
  c.mask_log2_table = 18;
  c.mask_hidden_width = 16;
  c.sdf_hidden_width = 256;
  c.geo_feature_dim = 256;
  c.rgb_hidden_width = 256;
  c.rgb_hidden_layers = 4;
  c.rays_per_step = 1024;
  c.samples_per_ray = 128;
  return c;
}

TrainConfig TrainConfig::preset_desk() {
  TrainConfig c;
  c.sdf_levels = 8;
  c.sdf_n_min = 16;
  c.sdf_n_max = 256;
  c.sdf_feature_dim = 4;
  c.sdf_log2_table = 16;
  c.mask_levels = 4;
  c.mask_d_min = 4;
  c.mask_d_max = 7;
  c.mask_feature_dim = 4;
  c.mask_log2_table = 14;
  c.mask_hidden_width = 16;
  c.sdf_hidden_width = 64;
  c.geo_feature_dim = 64;
  c.rgb_hidden_width = 64;
  c.rgb_hidden_layers = 4;
  c.rays_per_step = 96;
  c.samples_per_ray = 32;
  return c;
}

void TrainConfig::validate() const {
  if (w_eik < 0 || w_curv < 0) throw ConfigError("loss weights must be non-negative");
  if (l_init < 1) throw ConfigError("l_init must be >= 1");
  if (l_init > sdf_levels) throw ConfigError("l_init exceeds the level count");
  if (unveil_interval < 1) throw ConfigError("unveil_interval must be >= 1");
  if (rays_per_step < 1 || samples_per_ray < 1) throw ConfigError("ray batch must be non-empty");
  if (total_steps < 1) throw ConfigError("total_steps must be >= 1");
  if (sdf_levels < 1 || sdf_n_min < 2 || sdf_n_max < sdf_n_min) {
    throw ConfigError("invalid SDF grid shape");
  }
  if (mask_mode != MaskMode::Disabled) {
    if (mask_levels < 1 || mask_d_min < 1 || mask_d_max < mask_d_min) {
      throw ConfigError("invalid mask grid shape");
    }
  }
  if (sdf_hidden_width < 1 || rgb_hidden_width < 1 || mask_hidden_width < 1 ||
      geo_feature_dim < 1 || rgb_hidden_layers < 1) {
    throw ConfigError("invalid network widths");
  }
  if (softplus_beta <= 0) throw ConfigError("softplus_beta must be positive");
  if (learning_rate < 0 || adam_eps <= 0) throw ConfigError("invalid optimizer settings");
}

RunConfig RunConfig::defaults(const std::string& scale_preset) {
  RunConfig r;
  r.scale = scale_preset;
  if (scale_preset == "paper") {
    r.train = TrainConfig::preset_paper();
  } else if (scale_preset == "desk") {
    r.train = TrainConfig::preset_desk();
  } else {
    throw ConfigError("unknown scale preset: " + scale_preset);
  }
  return r;
}

namespace {

MaskActivation parse_mask_activation(const std::string& s) {
  if (s == "sigmoid") return MaskActivation::Sigmoid;
  if (s == "softmax") return MaskActivation::Softmax;
  throw ConfigError("mask_activation must be sigmoid or softmax");
}

std::string mask_activation_name(MaskActivation a) {
  return a == MaskActivation::Sigmoid ? "sigmoid" : "softmax";
}

MaskMode parse_mask_mode(const std::string& s) {
  if (s == "learned") return MaskMode::Learned;
  if (s == "pinned-one") return MaskMode::PinnedOne;
  if (s == "pinned-zero") return MaskMode::PinnedZero;
  if (s == "none") return MaskMode::Disabled;
  throw ConfigError("mask_mode must be learned, pinned-one, pinned-zero or none");
}

std::string mask_mode_name(MaskMode m) {
  switch (m) {
    case MaskMode::Learned: return "learned";
    case MaskMode::PinnedOne: return "pinned-one";
    case MaskMode::PinnedZero: return "pinned-zero";
    case MaskMode::Disabled: return "none";
  }
  return "learned";
}

Precision parse_precision(const std::string& s) {
  if (s == "f32") return Precision::F32;
  if (s == "f64") return Precision::F64;
  throw ConfigError("precision must be f32 or f64");
}

template <class T>
void read_field(const json& j, const std::string& key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key has wrong type: " + key);
  }
}

}  // namespace

namespace {
RunConfig parse_without_validation(const std::string& text);
}

RunConfig RunConfig::from_json_text(const std::string& text) {
  RunConfig r = parse_without_validation(text);
  r.validate();
  return r;
}

namespace {

RunConfig parse_without_validation(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");

  std::string scale = "desk";
  read_field(j, "scale", scale);
  RunConfig r = RunConfig::defaults(scale);
  TrainConfig& t = r.train;

  static const std::set<std::string> known = {
      "scale", "seed", "precision", "threads", "dataset_dir", "out_dir",
      "checkpoint_interval", "mesh_resolution", "eval_points",
      "total_steps", "rays_per_step", "samples_per_ray",
      "learning_rate", "lr_warmup_steps", "adam_beta1", "adam_beta2", "adam_eps",
      "w_eik", "w_curv", "curvature_enabled", "curvature_warmup_steps",
      "l_init", "unveil_interval", "mask_activation", "mask_mode",
      "sdf_levels", "sdf_n_min", "sdf_n_max", "sdf_feature_dim", "sdf_log2_table",
      "mask_levels", "mask_d_min", "mask_d_max", "mask_feature_dim", "mask_log2_table",
      "mask_hidden_width", "sdf_hidden_width", "geo_feature_dim", "rgb_hidden_width",
      "rgb_hidden_layers", "softplus_beta", "feature_init_scale", "mask_bias_init",
      "geo_init_radius", "zeta_init"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ConfigError("unknown config key: " + it.key());
  }

  read_field(j, "seed", t.seed);
  if (j.contains("precision")) r.precision = parse_precision(j.at("precision").get<std::string>());
  read_field(j, "threads", r.threads);
  read_field(j, "dataset_dir", r.dataset_dir);
  read_field(j, "out_dir", r.out_dir);
  read_field(j, "checkpoint_interval", r.checkpoint_interval);
  read_field(j, "mesh_resolution", r.mesh_resolution);
  read_field(j, "eval_points", r.eval_points);

  read_field(j, "total_steps", t.total_steps);
  read_field(j, "rays_per_step", t.rays_per_step);
  read_field(j, "samples_per_ray", t.samples_per_ray);
  read_field(j, "learning_rate", t.learning_rate);
  read_field(j, "lr_warmup_steps", t.lr_warmup_steps);
  read_field(j, "adam_beta1", t.adam_beta1);
  read_field(j, "adam_beta2", t.adam_beta2);
  read_field(j, "adam_eps", t.adam_eps);
  read_field(j, "w_eik", t.w_eik);
  read_field(j, "w_curv", t.w_curv);
  read_field(j, "curvature_enabled", t.curvature_enabled);
  read_field(j, "curvature_warmup_steps", t.curvature_warmup_steps);
  read_field(j, "l_init", t.l_init);
  read_field(j, "unveil_interval", t.unveil_interval);
  if (j.contains("mask_activation")) {
    t.mask_activation = parse_mask_activation(j.at("mask_activation").get<std::string>());
  }
  if (j.contains("mask_mode")) {
    t.mask_mode = parse_mask_mode(j.at("mask_mode").get<std::string>());
  }
  read_field(j, "sdf_levels", t.sdf_levels);
  read_field(j, "sdf_n_min", t.sdf_n_min);
  read_field(j, "sdf_n_max", t.sdf_n_max);
  read_field(j, "sdf_feature_dim", t.sdf_feature_dim);
  read_field(j, "sdf_log2_table", t.sdf_log2_table);
  read_field(j, "mask_levels", t.mask_levels);
  read_field(j, "mask_d_min", t.mask_d_min);
  read_field(j, "mask_d_max", t.mask_d_max);
  read_field(j, "mask_feature_dim", t.mask_feature_dim);
  read_field(j, "mask_log2_table", t.mask_log2_table);
  read_field(j, "mask_hidden_width", t.mask_hidden_width);
  read_field(j, "sdf_hidden_width", t.sdf_hidden_width);
  read_field(j, "geo_feature_dim", t.geo_feature_dim);
  read_field(j, "rgb_hidden_width", t.rgb_hidden_width);
  read_field(j, "rgb_hidden_layers", t.rgb_hidden_layers);
  read_field(j, "softplus_beta", t.softplus_beta);
  read_field(j, "feature_init_scale", t.feature_init_scale);
  read_field(j, "mask_bias_init", t.mask_bias_init);
  read_field(j, "geo_init_radius", t.geo_init_radius);
  read_field(j, "zeta_init", t.zeta_init);
  return r;
}

}  // namespace

RunConfig RunConfig::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_text(text);
}

void RunConfig::apply_override(const std::string& key_value) {
  const auto eq = key_value.find('=');
  if (eq == std::string::npos) throw ConfigError("override must be key=value: " + key_value);
  const std::string key = key_value.substr(0, eq);
  const std::string value = key_value.substr(eq + 1);
  // Route through the JSON path so types and key checks stay in one place;
  // value validation is deferred so intermediate override states may be
  // inconsistent.
  json j = json::parse(to_json_text());
  json parsed;
  if (value == "true" || value == "false") {
    parsed = (value == "true");
  } else {
    try {
      size_t pos = 0;
      if (value.find('.') != std::string::npos || value.find('e') != std::string::npos ||
          value.find('E') != std::string::npos) {
        parsed = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
      } else {
        parsed = static_cast<int64_t>(std::stoll(value, &pos));
        if (pos != value.size()) throw std::invalid_argument("");
      }
    } catch (const std::exception&) {
      parsed = value;  // string-valued keys
    }
  }
  j[key] = parsed;
  *this = parse_without_validation(j.dump());
}

std::string RunConfig::to_json_text() const {
  const TrainConfig& t = train;
  json j;
  j["scale"] = scale;
  j["seed"] = t.seed;
  j["precision"] = precision == Precision::F32 ? "f32" : "f64";
  j["threads"] = threads;
  j["dataset_dir"] = dataset_dir;
  j["out_dir"] = out_dir;
  j["checkpoint_interval"] = checkpoint_interval;
  j["mesh_resolution"] = mesh_resolution;
  j["eval_points"] = eval_points;
  j["total_steps"] = t.total_steps;
  j["rays_per_step"] = t.rays_per_step;
  j["samples_per_ray"] = t.samples_per_ray;
  j["learning_rate"] = t.learning_rate;
  j["lr_warmup_steps"] = t.lr_warmup_steps;
  j["adam_beta1"] = t.adam_beta1;
  j["adam_beta2"] = t.adam_beta2;
  j["adam_eps"] = t.adam_eps;
  j["w_eik"] = t.w_eik;
  j["w_curv"] = t.w_curv;
  j["curvature_enabled"] = t.curvature_enabled;
  j["curvature_warmup_steps"] = t.curvature_warmup_steps;
  j["l_init"] = t.l_init;
  j["unveil_interval"] = t.unveil_interval;
  j["mask_activation"] = mask_activation_name(t.mask_activation);
  j["mask_mode"] = mask_mode_name(t.mask_mode);
  j["sdf_levels"] = t.sdf_levels;
  j["sdf_n_min"] = t.sdf_n_min;
  j["sdf_n_max"] = t.sdf_n_max;
  j["sdf_feature_dim"] = t.sdf_feature_dim;
  j["sdf_log2_table"] = t.sdf_log2_table;
  j["mask_levels"] = t.mask_levels;
  j["mask_d_min"] = t.mask_d_min;
  j["mask_d_max"] = t.mask_d_max;
  j["mask_feature_dim"] = t.mask_feature_dim;
  j["mask_log2_table"] = t.mask_log2_table;
  j["mask_hidden_width"] = t.mask_hidden_width;
  j["sdf_hidden_width"] = t.sdf_hidden_width;
  j["geo_feature_dim"] = t.geo_feature_dim;
  j["rgb_hidden_width"] = t.rgb_hidden_width;
  j["rgb_hidden_layers"] = t.rgb_hidden_layers;
  j["softplus_beta"] = t.softplus_beta;
  j["feature_init_scale"] = t.feature_init_scale;
  j["mask_bias_init"] = t.mask_bias_init;
  j["geo_init_radius"] = t.geo_init_radius;
  j["zeta_init"] = t.zeta_init;
  return j.dump(2);
}

void RunConfig::validate() const {
  train.validate();
  if (checkpoint_interval < 1) throw ConfigError("checkpoint_interval must be >= 1");
  if (mesh_resolution < 2) throw ConfigError("mesh_resolution must be >= 2");
  if (eval_points < 1) throw ConfigError("eval_points must be >= 1");
  if (threads < 0) throw ConfigError("threads must be >= 0");
}

}  // namespace hashsurf
