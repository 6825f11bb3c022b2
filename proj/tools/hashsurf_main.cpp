// hashsurf: neural SDF surface reconstruction with spatially-adaptive
// multi-resolution hash encodings. Subcommands: generate | train |
// extract-mesh | render | eval | dump-masks.

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hashsurf/checkpoint.hpp"
#include "hashsurf/config.hpp"
#include "hashsurf/meshing.hpp"
#include "hashsurf/training.hpp"

namespace fs = std::filesystem;
using namespace hashsurf;

namespace {

int effective_threads(const RunConfig& cfg) {
  int n = cfg.threads > 0 ? cfg.threads : ThreadPool::default_workers();
  if (const char* env = std::getenv("ADAPTIVE_HASH_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return std::max(1, n);
}

RunConfig load_config(const std::string& config_path, const std::vector<std::string>& overrides) {
  RunConfig cfg = config_path.empty() ? RunConfig::defaults("desk")
                                      : RunConfig::from_json_file(config_path);
  for (const auto& kv : overrides) cfg.apply_override(kv);
  cfg.validate();
  return cfg;
}

fs::path checkpoint_name(const fs::path& dir, int64_t step) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "checkpoint_%08" PRId64 ".bin", step);
  return dir / buf;
}

struct LoadedModel {
  RunConfig cfg;
  std::unique_ptr<ReconstructionModel<float>> f32;
  std::unique_ptr<ReconstructionModel<double>> f64;
  CheckpointMeta meta;
};

LoadedModel load_model(const std::string& checkpoint) {
  LoadedModel out;
  const auto meta = read_checkpoint_meta(checkpoint);
  out.cfg = RunConfig::from_json_text(meta.config_json);
  if (out.cfg.precision == Precision::F64) {
    out.f64 = ReconstructionModel<double>::build(out.cfg.train);
    out.meta = load_checkpoint<double>(checkpoint, out.f64->store);
  } else {
    out.f32 = ReconstructionModel<float>::build(out.cfg.train);
    out.meta = load_checkpoint<float>(checkpoint, out.f32->store);
  }
  return out;
}

// Default mask heat-map bands: first half low, last L/8 (at least one level)
// high, the remainder mid. At 16 levels this is 1-8 / 9-14 / 15-16.
std::vector<std::pair<int, int>> default_bands(int levels) {
  const int high = std::max(1, levels / 8);
  const int low_end = levels / 2;
  const int mid_end = levels - high;
  std::vector<std::pair<int, int>> bands;
  bands.emplace_back(1, low_end);
  if (mid_end > low_end) bands.emplace_back(low_end + 1, mid_end);
  bands.emplace_back(mid_end + 1, levels);
  return bands;
}

std::vector<std::pair<int, int>> parse_bands(const std::string& text, int levels) {
  if (text.empty()) return default_bands(levels);
  std::vector<std::pair<int, int>> bands;
  size_t pos = 0;
  while (pos < text.size()) {
    const size_t comma = text.find(',', pos);
    const std::string part = text.substr(pos, comma == std::string::npos ? std::string::npos
                                                                         : comma - pos);
    const size_t dash = part.find('-');
    if (dash == std::string::npos) throw ConfigError("band must be lo-hi: " + part);
    const int lo = std::stoi(part.substr(0, dash));
    const int hi = std::stoi(part.substr(dash + 1));
    if (lo < 1 || hi > levels || lo > hi) {
      throw ConfigError("band out of range [1," + std::to_string(levels) + "]: " + part);
    }
    bands.emplace_back(lo, hi);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return bands;
}

CameraModel<float> camera_from_manifest(const SceneManifest& manifest, int index) {
  if (index < 0 || index >= static_cast<int>(manifest.frames.size())) {
    throw ConfigError("camera index out of range");
  }
  CameraModel<float> cam;
  cam.fx = static_cast<float>(manifest.fx);
  cam.fy = static_cast<float>(manifest.fy);
  cam.cx = static_cast<float>(manifest.cx);
  cam.cy = static_cast<float>(manifest.cy);
  cam.width = manifest.width;
  cam.height = manifest.height;
  cam.rotation =
      manifest.frames[static_cast<size_t>(index)].camera_to_world.leftCols<3>().cast<float>();
  cam.center = manifest.frames[static_cast<size_t>(index)].camera_to_world.col(3).cast<float>();
  cam.validate();
  return cam;
}

int cmd_generate(const std::string& scene_name, int views, int res, uint64_t seed,
                 const std::string& out) {
  const AnalyticScene scene = AnalyticScene::by_name(scene_name);
  DatasetOptions opt;
  opt.n_views = views;
  opt.resolution = res;
  opt.seed = seed;
  const auto manifest = generate_dataset(scene, opt, out);
  std::printf("wrote %zu views to %s\n", manifest.frames.size(), out.c_str());
  return 0;
}

template <class S>
int run_training(RunConfig cfg, bool resume) {
  const fs::path out_dir = cfg.out_dir;
  fs::create_directories(out_dir);
  const auto data = Dataset<S>::load(cfg.dataset_dir);

  auto model = ReconstructionModel<S>::build(cfg.train);
  ThreadPool pool(effective_threads(cfg));
  Trainer<S> trainer(*model, data, pool);

  const fs::path latest = out_dir / "checkpoint_latest.bin";
  if (resume && fs::exists(latest)) {
    const auto meta = load_checkpoint<S>(latest, model->store);
    trainer.set_rng(meta.rng);
    trainer.set_step(meta.step);
    std::printf("resumed from step %" PRId64 "\n", meta.step);
  }

  const bool fresh = trainer.state().step == 0;
  std::ofstream csv(out_dir / "metrics.csv", fresh ? std::ios::trunc : std::ios::app);
  if (!csv) throw ConfigError("cannot write metrics.csv");
  if (fresh) {
    csv << "step,loss_rgb,loss_eik,loss_curv,active_levels,epsilon,sharpness,lr\n";
  }

  const std::string cfg_echo = cfg.to_json_text();
  auto save = [&](int64_t step) {
    const fs::path path = checkpoint_name(out_dir, step);
    save_checkpoint<S>(path, cfg_echo, model->store, step, trainer.rng());
    fs::copy_file(path, latest, fs::copy_options::overwrite_existing);
  };

  char line[256];
  while (trainer.state().step < cfg.train.total_steps) {
    const auto m = trainer.step();
    const int64_t done = trainer.state().step;  // step counter after the update
    std::snprintf(line, sizeof(line), "%" PRId64 ",%.9g,%.9g,%.9g,%d,%.9g,%.9g,%.9g\n",
                  done - 1, m.loss_rgb, m.loss_eik, m.loss_curv, m.active_levels, m.epsilon,
                  m.sharpness, m.lr);
    csv << line;
    if (done % 500 == 0 || done == cfg.train.total_steps) {
      std::printf("step %6" PRId64 "  rgb %.5f  eik %.5f  curv %.5f  active %d  s %.1f\n", done,
                  m.loss_rgb, m.loss_eik, m.loss_curv, m.active_levels, m.sharpness);
      std::fflush(stdout);
    }
    if (done % cfg.checkpoint_interval == 0 && done < cfg.train.total_steps) save(done);
  }
  save(cfg.train.total_steps);
  csv.flush();
  std::printf("training done; final checkpoint in %s\n", out_dir.string().c_str());
  return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              bool resume) {
  RunConfig cfg = load_config(config_path, overrides);
  if (cfg.dataset_dir.empty()) throw ConfigError("train requires dataset_dir");
  if (cfg.precision == Precision::F64) return run_training<double>(cfg, resume);
  return run_training<float>(cfg, resume);
}

template <class S>
TriangleMesh extract_mesh_from(const ReconstructionModel<S>& model, int resolution,
                               ThreadPool& pool) {
  return marching_cubes(model.field_fn(), resolution, kDomainBound, pool);
}

int cmd_extract(const std::string& checkpoint, int resolution, const std::string& out,
                const std::string& format) {
  auto loaded = load_model(checkpoint);
  if (resolution > 0) loaded.cfg.mesh_resolution = resolution;
  ThreadPool pool(effective_threads(loaded.cfg));
  const TriangleMesh mesh =
      loaded.f32 ? extract_mesh_from<float>(*loaded.f32, loaded.cfg.mesh_resolution, pool)
                 : extract_mesh_from<double>(*loaded.f64, loaded.cfg.mesh_resolution, pool);
  MeshFormat fmt;
  if (format == "obj") {
    fmt = MeshFormat::Obj;
  } else if (format == "ply") {
    fmt = MeshFormat::Ply;
  } else {
    throw ConfigError("format must be obj or ply");
  }
  write_mesh(mesh, out, fmt);
  std::printf("extracted %zu vertices / %zu triangles to %s\n", mesh.vertices.size(),
              mesh.triangles.size(), out.c_str());
  return 0;
}

int cmd_render(const std::string& checkpoint, int camera, const std::string& out, int samples) {
  auto loaded = load_model(checkpoint);
  if (loaded.cfg.precision == Precision::F64) {
    throw ConfigError("render supports f32 checkpoints");
  }
  const auto manifest = SceneManifest::load(fs::path(loaded.cfg.dataset_dir) / "manifest.json");
  const auto cam = camera_from_manifest(manifest, camera);
  auto& model = *loaded.f32;
  RenderOptions<float> opt;
  opt.samples_per_ray = samples > 0 ? samples : loaded.cfg.train.samples_per_ray;
  opt.background = manifest.background.cast<float>();
  opt.sharpness = model.opacity.sharpness(model.store);
  const int levels = model.level_count();
  const float eps = static_cast<float>(epsilon_for_level(levels, model.grid->levels()));
  ThreadPool pool(effective_threads(loaded.cfg));
  const Image img = render_image<float>(cam, model.sdf_fn(levels), model.shade_fn(levels, eps),
                                        opt, pool);
  write_ppm(img, out);
  std::printf("rendered camera %d to %s\n", camera, out.c_str());
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& scene_name, int points,
             uint64_t seed, int resolution, const std::string& out) {
  auto loaded = load_model(checkpoint);
  if (points > 0) loaded.cfg.eval_points = points;
  if (resolution > 0) loaded.cfg.mesh_resolution = resolution;
  const AnalyticScene scene = AnalyticScene::by_name(scene_name);
  ThreadPool pool(effective_threads(loaded.cfg));
  const TriangleMesh mesh =
      loaded.f32 ? extract_mesh_from<float>(*loaded.f32, loaded.cfg.mesh_resolution, pool)
                 : extract_mesh_from<double>(*loaded.f64, loaded.cfg.mesh_resolution, pool);
  if (mesh.triangles.empty()) throw ConfigError("extracted mesh is empty; cannot evaluate");
  const auto predicted = mesh_to_points(mesh, loaded.cfg.eval_points, seed);
  const auto reference = sample_surface(scene, loaded.cfg.eval_points, seed);
  double acc = 0.0, comp = 0.0;
  const double chamfer = chamfer_l1(predicted, reference, &acc, &comp);

  nlohmann::json report;
  report["chamfer"] = chamfer;
  report["acc"] = acc;
  report["comp"] = comp;
  report["n_points"] = loaded.cfg.eval_points;
  report["seed"] = seed;
  report["scene"] = scene_name;
  report["mesh_resolution"] = loaded.cfg.mesh_resolution;
  const std::string text = report.dump(2) + "\n";
  if (out.empty() || out == "-") {
    std::fputs(text.c_str(), stdout);
  } else {
    std::ofstream f(out);
    if (!f) throw ConfigError("cannot write report: " + out);
    f << text;
    std::printf("chamfer %.6f -> %s\n", chamfer, out.c_str());
  }
  return 0;
}

int cmd_dump_masks(const std::string& checkpoint, int camera, const std::string& bands_text,
                   const std::string& out, int samples) {
  auto loaded = load_model(checkpoint);
  if (loaded.cfg.precision == Precision::F64) {
    throw ConfigError("dump-masks supports f32 checkpoints");
  }
  auto& model = *loaded.f32;
  const auto bands = parse_bands(bands_text, model.level_count());
  const auto manifest = SceneManifest::load(fs::path(loaded.cfg.dataset_dir) / "manifest.json");
  const auto cam = camera_from_manifest(manifest, camera);
  fs::create_directories(out);

  RenderOptions<float> opt;
  opt.samples_per_ray = samples > 0 ? samples : loaded.cfg.train.samples_per_ray;
  opt.background = manifest.background.cast<float>();
  opt.sharpness = model.opacity.sharpness(model.store);
  const int levels = model.level_count();
  ThreadPool pool(effective_threads(loaded.cfg));

  for (const auto& [lo, hi] : bands) {
    auto value_fn = [&](const MatX<float>& pts, VecX<float>& vals) {
      model.mask_band_max(pts, lo, hi, vals);
    };
    MatX<float> heat;
    render_weighted_scalar<float>(cam, model.sdf_fn(levels), value_fn, opt, pool, heat);
    Image img(cam.width, cam.height);
    for (int y = 0; y < cam.height; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        const auto rgb = colormap_blue_red(heat(y, x));
        float* px = img.pixel(x, y);
        px[0] = rgb[0];
        px[1] = rgb[1];
        px[2] = rgb[2];
      }
    }
    char name[64];
    std::snprintf(name, sizeof(name), "mask_band_%02d-%02d.ppm", lo, hi);
    write_ppm(img, fs::path(out) / name);
    std::printf("wrote %s\n", (fs::path(out) / name).string().c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural SDF surface reconstruction with spatially-adaptive hash encodings"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Synthesize a posed-image dataset");
  std::string gen_scene = "sphere-box", gen_out = "data";
  int gen_views = 48, gen_res = 128;
  uint64_t gen_seed = 0;
  gen->add_option("--scene", gen_scene, "Scene name (sphere, box, torus, sphere-box)");
  gen->add_option("--views", gen_views, "Camera count");
  gen->add_option("--res", gen_res, "Image resolution");
  gen->add_option("--seed", gen_seed, "Dataset seed");
  gen->add_option("--out", gen_out, "Output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Optimize a model against a dataset");
  std::string train_config;
  std::vector<std::string> train_sets;
  std::string train_dataset, train_out, train_mask_activation, train_mask_mode;
  int64_t train_steps = -1;
  int64_t train_seed = -1;
  bool train_resume = false;
  train->add_option("--config", train_config, "Config JSON path");
  train->add_option("--set", train_sets, "key=value config override (repeatable)");
  train->add_option("--dataset", train_dataset, "Dataset directory");
  train->add_option("--out", train_out, "Output directory");
  train->add_option("--steps", train_steps, "Total optimization steps");
  train->add_option("--seed", train_seed, "Run seed");
  train->add_option("--mask-activation", train_mask_activation, "sigmoid | softmax");
  train->add_option("--mask-mode", train_mask_mode, "learned | pinned-one | pinned-zero | none");
  train->add_flag("--resume", train_resume, "Resume from checkpoint_latest.bin");

  // extract-mesh
  auto* extract = app.add_subcommand("extract-mesh", "Marching-cubes mesh from a checkpoint");
  std::string ext_ckpt, ext_out = "mesh.obj", ext_format = "obj";
  int ext_res = 0;
  extract->add_option("--checkpoint", ext_ckpt)->required();
  extract->add_option("--out", ext_out, "Mesh path");
  extract->add_option("--resolution", ext_res, "Grid cells per axis");
  extract->add_option("--format", ext_format, "obj | ply");

  // render
  auto* render = app.add_subcommand("render", "Render a dataset camera from a checkpoint");
  std::string ren_ckpt, ren_out = "render.ppm";
  int ren_cam = 0, ren_samples = 0;
  render->add_option("--checkpoint", ren_ckpt)->required();
  render->add_option("--camera", ren_cam, "Manifest frame index");
  render->add_option("--out", ren_out, "Output PPM");
  render->add_option("--samples", ren_samples, "Samples per ray");

  // eval
  auto* eval = app.add_subcommand("eval", "Chamfer-L1 against the analytic scene");
  std::string ev_ckpt, ev_scene = "sphere-box", ev_out;
  int ev_points = 0, ev_res = 0;
  uint64_t ev_seed = 0;
  eval->add_option("--checkpoint", ev_ckpt)->required();
  eval->add_option("--scene", ev_scene, "Analytic reference scene");
  eval->add_option("--points", ev_points, "Sample count per cloud");
  eval->add_option("--seed", ev_seed, "Sampling seed");
  eval->add_option("--mesh-resolution", ev_res, "Extraction resolution");
  eval->add_option("--out", ev_out, "Report JSON path (stdout when omitted)");

  // dump-masks
  auto* dump = app.add_subcommand("dump-masks", "Volume-rendered mask heat maps");
  std::string dm_ckpt, dm_bands, dm_out = "masks";
  int dm_cam = 0, dm_samples = 0;
  dump->add_option("--checkpoint", dm_ckpt)->required();
  dump->add_option("--camera", dm_cam, "Manifest frame index");
  dump->add_option("--bands", dm_bands, "Comma-separated 1-based lo-hi level bands");
  dump->add_option("--out", dm_out, "Output directory");
  dump->add_option("--samples", dm_samples, "Samples per ray");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) {
      return cmd_generate(gen_scene, gen_views, gen_res, gen_seed, gen_out);
    }
    if (train->parsed()) {
      std::vector<std::string> overrides = train_sets;
      if (!train_dataset.empty()) overrides.push_back("dataset_dir=" + train_dataset);
      if (!train_out.empty()) overrides.push_back("out_dir=" + train_out);
      if (train_steps >= 0) overrides.push_back("total_steps=" + std::to_string(train_steps));
      if (train_seed >= 0) overrides.push_back("seed=" + std::to_string(train_seed));
      if (!train_mask_activation.empty()) {
        overrides.push_back("mask_activation=" + train_mask_activation);
      }
      if (!train_mask_mode.empty()) overrides.push_back("mask_mode=" + train_mask_mode);
      return cmd_train(train_config, overrides, train_resume);
    }
    if (extract->parsed()) return cmd_extract(ext_ckpt, ext_res, ext_out, ext_format);
    if (render->parsed()) return cmd_render(ren_ckpt, ren_cam, ren_out, ren_samples);
    if (eval->parsed()) return cmd_eval(ev_ckpt, ev_scene, ev_points, ev_seed, ev_res, ev_out);
    if (dump->parsed()) return cmd_dump_masks(dm_ckpt, dm_cam, dm_bands, dm_out, dm_samples);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "training diverged: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
