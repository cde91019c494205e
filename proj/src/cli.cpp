#include "shadeharm/cli.hpp"

#include "shadeharm/bg_estimate.hpp"
#include "shadeharm/forge.hpp"
#include "shadeharm/harmonize.hpp"
#include "shadeharm/image_io.hpp"
#include "shadeharm/metrics.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

namespace shadeharm::cli {

namespace fs = std::filesystem;

namespace {

std::pair<int, int> parse_size(const std::string& text, const std::string& flag) {
  const auto sep = text.find('x');
  if (sep == std::string::npos) {
    throw std::invalid_argument(flag + ": expected WxH, got '" + text + "'");
  }
  const int w = std::stoi(text.substr(0, sep));
  const int h = std::stoi(text.substr(sep + 1));
  if (w < 1 || h < 1) throw std::invalid_argument(flag + ": dimensions must be positive");
  return {w, h};
}

Eigen::Vector4d parse_plane(const std::string& text) {
  Eigen::Vector4d plane;
  if (std::sscanf(text.c_str(), "%lf,%lf,%lf,%lf", &plane[0], &plane[1], &plane[2], &plane[3]) != 4) {
    throw std::invalid_argument("--ground-plane: expected nx,ny,nz,d, got '" + text + "'");
  }
  const double n = plane.head<3>().norm();
  if (n <= 0) throw std::invalid_argument("--ground-plane: zero normal");
  plane.head<3>() /= n;
  return plane;
}

struct MetaInputs {
  Intrinsics intrinsics;
  std::optional<Eigen::Vector4d> ground_plane;
};

MetaInputs read_meta(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": field 'json': " + e.what());
  }
  MetaInputs m;
  try {
    const auto& ij = j.at("intrinsics");
    m.intrinsics.fx = ij.at("fx").get<double>();
    m.intrinsics.fy = ij.at("fy").get<double>();
    m.intrinsics.cx = ij.at("cx").get<double>();
    m.intrinsics.cy = ij.at("cy").get<double>();
    m.intrinsics.width = ij.at("width").get<int>();
    m.intrinsics.height = ij.at("height").get<int>();
    if (j.contains("ground_plane")) {
      const auto& g = j.at("ground_plane");
      m.ground_plane = Eigen::Vector4d(g[0].get<double>(), g[1].get<double>(),
                                       g[2].get<double>(), g[3].get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": field 'intrinsics': " + e.what());
  }
  return m;
}

// Shared flag bundles.
struct IntrinsicsFlags {
  std::string meta_path;
  double fx = 0, fy = 0, cx = 0, cy = 0;

  void add(CLI::App* cmd) {
    cmd->add_option("--meta", meta_path, "tuple meta.json carrying intrinsics and ground plane")
        ->check(CLI::ExistingFile);
    cmd->add_option("--fx", fx, "focal length x (pixels)");
    cmd->add_option("--fy", fy, "focal length y (pixels)");
    cmd->add_option("--cx", cx, "principal point x");
    cmd->add_option("--cy", cy, "principal point y");
  }

  MetaInputs resolve(int width, int height) const {
    if (!meta_path.empty()) return read_meta(meta_path);
    if (fx <= 0 || fy <= 0) {
      throw std::invalid_argument("intrinsics: pass --meta or all of --fx/--fy/--cx/--cy");
    }
    MetaInputs m;
    m.intrinsics = Intrinsics{fx, fy, cx, cy, width, height};
    return m;
  }
};

struct ShadowFlags {
  int samples = 8;
  double ray_step = 0, max_dist = 0, bias = 0;
  std::string ground;

  void add(CLI::App* cmd) {
    cmd->add_option("--samples", samples, "direction samples per partition cell");
    cmd->add_option("--ray-step", ray_step, "shadow march step in meters (0 = auto)");
    cmd->add_option("--max-ray-distance", max_dist, "shadow march range in meters (0 = auto)");
    cmd->add_option("--shadow-bias", bias, "ray origin offset in meters (0 = auto)");
    cmd->add_option("--ground-plane", ground, "camera-space plane nx,ny,nz,d");
  }

  ShadowConfig resolve(const std::optional<Eigen::Vector4d>& meta_plane) const {
    ShadowConfig cfg;
    cfg.samples_per_cell = samples;
    cfg.ray_step = ray_step;
    cfg.max_ray_distance = max_dist;
    cfg.shadow_bias = bias;
    if (!ground.empty()) {
      cfg.ground_plane = parse_plane(ground);
    } else if (meta_plane) {
      cfg.ground_plane = meta_plane;
    }
    return cfg;
  }
};

EnvMap load_envmap(const std::string& path) {
  EnvMap env;
  env.radiance = load_linear_image(path);
  env.validate();
  return env;
}

Mask load_mask(const std::string& path) {
  Mask mask = mask_from_alpha(read_png_gray(path));
  return mask;
}

std::string print_config_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["k"] = cfg.k;
  j["samples_per_cell"] = cfg.samples_per_cell;
  j["ridge_lambda"] = cfg.ridge_lambda;
  j["fov_deg"] = cfg.fov_deg;
  j["image"] = {{"width", cfg.image_width}, {"height", cfg.image_height}};
  j["env"] = {{"width", cfg.env_width}, {"height", cfg.env_height}};
  j["feature_grid"] = {{"w", cfg.grid_w}, {"h", cfg.grid_h}};
  j["albedo_eps"] = cfg.albedo_eps;
  j["normal_window_radius"] = cfg.window_radius;
  j["scale_range"] = {cfg.scale_min, cfg.scale_max};
  j["threads"] = cfg.threads;
  j["psnr_cap_db"] = 99;
  j["ssim"] = {{"window", 11}, {"sigma", 1.5}, {"c1", 0.0001}, {"c2", 0.0009}};
  return j.dump(2);
}

int run_forge(std::uint64_t seed, const std::string& out_dir, int n_scenes, int n_envs,
              const std::string& size, const std::string& env_size, double fov,
              const std::string& split, const ShadowFlags& shadow, int threads,
              const std::string& env_dir, const std::string& annotations_path) {
  ForgeConfig cfg;
  std::tie(cfg.width, cfg.height) = parse_size(size, "--size");
  const auto [env_w, env_h] = parse_size(env_size, "--env-size");
  cfg.fov_deg = fov;
  cfg.split = split;
  cfg.shadow = shadow.resolve(std::nullopt);
  cfg.shadow.ground_plane.reset();  // build_tuples derives the plane per scene
  cfg.threads = threads;

  Rng root(seed);
  std::vector<SceneSpec> scenes;
  Rng rng_scene = root.child(0x5c);
  for (int i = 0; i < n_scenes; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "s%03d", i);
    Rng rng = rng_scene.child(static_cast<std::uint64_t>(i));
    scenes.push_back(random_scene(rng, id));
  }

  std::vector<ForgeEnv> envs;
  if (!env_dir.empty()) {
    std::map<std::string, PlanarAnnotation> annotations;
    if (!annotations_path.empty()) annotations = load_annotations(annotations_path);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(env_dir)) {
      const std::string ext = entry.path().extension().string();
      if (ext == ".pfm" || ext == ".hdr") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      ForgeEnv env;
      env.id = file.stem().string();
      env.map = load_envmap(file.string());
      env.condition = "custom";
      if (auto it = annotations.find(env.id); it != annotations.end()) env.annotation = it->second;
      envs.push_back(std::move(env));
    }
    if (envs.empty()) throw std::invalid_argument(env_dir + ": no .pfm/.hdr environment maps found");
  } else {
    Rng rng_env = root.child(0xe2);
    for (int i = 0; i < n_envs; ++i) {
      char id[32];
      std::snprintf(id, sizeof(id), "e%03d", i);
      Rng rng = rng_env.child(static_cast<std::uint64_t>(i));
      envs.push_back(random_sky(rng, id, env_w, env_h));
    }
  }

  const ForgeManifest manifest = build_tuples(scenes, envs, seed, out_dir, cfg);
  std::cerr << "forge: wrote " << manifest.tuples.size() << " tuples to " << out_dir << "\n";
  return 0;
}

struct ManifestContext {
  ForgeManifest manifest;
  fs::path root;
  std::map<std::string, EnvMap> env_cache;

  const EnvMap& env(const std::string& id) {
    auto it = env_cache.find(id);
    if (it != env_cache.end()) return it->second;
    auto file = manifest.env_files.find(id);
    if (file == manifest.env_files.end()) {
      throw std::runtime_error("manifest: env '" + id + "' has no file entry");
    }
    return env_cache.emplace(id, load_envmap((root / file->second).string())).first->second;
  }
};

ManifestContext open_manifest(const std::string& path) {
  ManifestContext ctx;
  ctx.manifest = load_manifest(path);
  ctx.root = fs::path(path).parent_path();
  return ctx;
}

int run_fit_bg(const std::string& manifest_path, std::uint64_t seed, int K, double lambda,
               const std::string& grid, const std::string& split, double holdout,
               const std::string& out_path) {
  ManifestContext ctx = open_manifest(manifest_path);
  const auto [grid_w, grid_h] = parse_size(grid, "--grid");
  const BasisPartition part = make_partition(K);

  // One training pair per (env, rotation angle): the background crop the
  // forge would composite over and the descriptor of the rotated map.
  struct Pair {
    std::string env_id;
    double angle;
  };
  std::vector<Pair> pairs;
  for (const auto& env_id : ctx.manifest.env_ids) {
    if (!split.empty() && ctx.manifest.env_conditions.count(env_id) &&
        ctx.manifest.env_conditions.at(env_id) != split) {
      continue;
    }
    for (int a = 0; a < 8; ++a) pairs.push_back({env_id, 45.0 * a});
  }
  if (pairs.empty()) throw std::invalid_argument(manifest_path + ": no envs match the filter");

  const int bg_w = ctx.manifest.config.width, bg_h = ctx.manifest.config.height;
  const double fov = ctx.manifest.config.fov_deg;
  auto make_pair = [&](const Pair& p) {
    const EnvMap rotated = rotate_envmap(ctx.env(p.env_id), p.angle);
    return std::make_pair(extract_features(crop_background(rotated, 0.0, fov, bg_w, bg_h),
                                           grid_w, grid_h),
                          descriptor_from_envmap(rotated, part));
  };

  std::vector<size_t> order(pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (holdout > 0) {
    Rng rng(seed);
    rng.shuffle(order);
  }
  const size_t train_count =
      holdout > 0 ? std::max<size_t>(1, static_cast<size_t>(std::llround((1.0 - holdout) * order.size())))
                  : order.size();

  std::vector<BgFeatures> features;
  std::vector<IlluminationDescriptor> targets;
  for (size_t i = 0; i < train_count; ++i) {
    auto [f, d] = make_pair(pairs[order[i]]);
    features.push_back(std::move(f));
    targets.push_back(std::move(d));
  }
  const BgEstimator est = fit_bg_estimator(features, targets, lambda);
  save_estimator(out_path, est);
  std::cerr << "fit-bg: " << train_count << " (env, rotation) training pairs, training L1 "
            << est.training_loss << "\n";
  if (train_count < order.size()) {
    double held = 0;
    for (size_t i = train_count; i < order.size(); ++i) {
      auto [f, d] = make_pair(pairs[order[i]]);
      Eigen::VectorXd y = (est.weights.transpose() * f.v + est.bias).cwiseMax(0.0);
      Eigen::VectorXd ygt(3 * part.cell_count());
      for (int c = 0; c < 3; ++c) {
        for (int k = 0; k < part.cell_count(); ++k) ygt(c * part.cell_count() + k) = d.l(c, k);
      }
      held += (y - ygt).cwiseAbs().mean();
    }
    std::cerr << "fit-bg: held-out descriptor L1 " << held / (order.size() - train_count)
              << " over " << order.size() - train_count << " pairs\n";
  }
  return 0;
}

int run_evaluate(const std::string& manifest_path, const std::string& pred_dir,
                 const std::string& split, const std::string& out_csv,
                 const std::string& out_json) {
  ManifestContext ctx = open_manifest(manifest_path);

  struct Row {
    std::string id, condition;
    MetricReport report;
  };
  std::vector<Row> rows;
  for (const auto& rec : ctx.manifest.tuples) {
    if (!split.empty() && rec.split != split) continue;
    const fs::path dir = ctx.root / rec.dir;
    Image3 pred;
    if (!pred_dir.empty()) {
      const fs::path pfm = fs::path(pred_dir) / (rec.id + ".pfm");
      const fs::path png = fs::path(pred_dir) / (rec.id + ".png");
      if (fs::exists(pfm)) {
        pred = to_display(read_pfm_rgb(pfm.string()));
      } else if (fs::exists(png)) {
        pred = read_png_rgb(png.string());
      } else {
        std::cerr << "evaluate: no prediction for " << rec.id << ", skipping\n";
        continue;
      }
    } else {
      pred = read_png_rgb((dir / "composite.png").string());
    }
    const Image3 gt = read_png_rgb((dir / "gt.png").string());
    const Mask mask = load_mask((dir / "mask.png").string());
    Row row;
    row.id = rec.id;
    row.condition = rec.condition;
    row.report = evaluate_pair(pred, gt, mask);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument("evaluate: no tuples evaluated");

  std::ofstream csv(out_csv, std::ios::trunc);
  if (!csv) throw std::runtime_error(out_csv + ": cannot open for writing");
  csv << "tuple_id,fmae,fpsnr,fssim\n";
  char line[256];
  for (const auto& row : rows) {
    std::snprintf(line, sizeof(line), "%s,%.6f,%.6f,%.6f\n", row.id.c_str(), row.report.fmae,
                  row.report.fpsnr_db, row.report.fssim);
    csv << line;
  }

  std::map<std::string, std::vector<const Row*>> by_tag;
  for (const auto& row : rows) {
    by_tag["All"].push_back(&row);
    by_tag[row.condition].push_back(&row);
  }
  nlohmann::json agg;
  for (const auto& [tag, members] : by_tag) {
    double mae = 0, psnr = 0, ssim_v = 0;
    for (const Row* row : members) {
      mae += row->report.fmae;
      psnr += row->report.fpsnr_db;
      ssim_v += row->report.fssim;
    }
    const double n = static_cast<double>(members.size());
    agg[tag] = {{"fmae", mae / n}, {"fpsnr", psnr / n}, {"fssim", ssim_v / n},
                {"count", members.size()}};
  }
  std::ofstream js(out_json, std::ios::trunc);
  if (!js) throw std::runtime_error(out_json + ": cannot open for writing");
  js << agg.dump(2) << "\n";
  std::cerr << "evaluate: " << rows.size() << " tuples, aggregate fmae "
            << agg["All"]["fmae"].get<double>() << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  RunConfig defaults;
  CLI::App app{"shading-aware image harmonization toolkit"};
  app.require_subcommand(0, 1);
  bool print_config = false;
  app.add_flag("--print-config", print_config, "dump the built-in numeric defaults as JSON");

  // forge
  auto* forge_cmd = app.add_subcommand("forge", "build a paired harmonization dataset");
  std::uint64_t forge_seed = 0;
  std::string forge_out, forge_size = "640x480", forge_env_size = "64x32", forge_split = "train";
  std::string forge_env_dir, forge_annotations;
  int forge_scenes = 8, forge_envs = 8, forge_threads = defaults.threads;
  double forge_fov = defaults.fov_deg;
  ShadowFlags forge_shadow;
  forge_cmd->add_option("--seed", forge_seed, "generator seed")->required();
  forge_cmd->add_option("--out", forge_out, "output dataset directory")->required();
  forge_cmd->add_option("--scenes", forge_scenes, "number of procedural scenes");
  forge_cmd->add_option("--envs", forge_envs, "number of procedural skies");
  forge_cmd->add_option("--size", forge_size, "tuple raster size WxH");
  forge_cmd->add_option("--env-size", forge_env_size, "procedural sky size WxH");
  forge_cmd->add_option("--fov", forge_fov, "background crop horizontal fov (degrees)");
  forge_cmd->add_option("--split", forge_split, "split tag stored on every tuple");
  forge_cmd->add_option("--env-dir", forge_env_dir, "use .pfm/.hdr maps from this directory instead")
      ->check(CLI::ExistingDirectory);
  forge_cmd->add_option("--annotations", forge_annotations, "planar annotation JSON keyed by env id")
      ->check(CLI::ExistingFile);
  forge_cmd->add_option("--threads", forge_threads, "worker threads");
  forge_shadow.add(forge_cmd);

  // bases
  auto* bases_cmd = app.add_subcommand("bases", "compute shading bases from a depth map");
  std::string bases_depth, bases_out, bases_pixel_grid;
  int bases_k = defaults.k, bases_window = defaults.window_radius, bases_threads = defaults.threads;
  IntrinsicsFlags bases_intr;
  ShadowFlags bases_shadow;
  bases_cmd->add_option("--depth", bases_depth, "single-channel depth PFM")
      ->required()
      ->check(CLI::ExistingFile);
  bases_cmd->add_option("--out", bases_out, "output bases directory")->required();
  bases_cmd->add_option("--k", bases_k, "partition cell count");
  bases_cmd->add_option("--pixel-grid", bases_pixel_grid, "use a WxH pixel-grid partition instead");
  bases_cmd->add_option("--window-radius", bases_window, "plane-fit window radius");
  bases_cmd->add_option("--threads", bases_threads, "worker threads");
  bases_intr.add(bases_cmd);
  bases_shadow.add(bases_cmd);

  // descriptor
  auto* descriptor_cmd = app.add_subcommand("descriptor", "extract an illumination descriptor");
  std::string desc_env, desc_out;
  int desc_k = defaults.k;
  bool desc_pixel_grid = false;
  double desc_rotate = 0.0;
  descriptor_cmd->add_option("--env", desc_env, "environment map (.pfm/.hdr/.png)")
      ->required()
      ->check(CLI::ExistingFile);
  descriptor_cmd->add_option("--out", desc_out, "output descriptor JSON")->required();
  descriptor_cmd->add_option("--k", desc_k, "partition cell count");
  descriptor_cmd->add_flag("--pixel-grid", desc_pixel_grid, "one cell per environment pixel");
  descriptor_cmd->add_option("--rotate", desc_rotate, "rotate the map by this yaw first (degrees)");

  // shade
  auto* shade_cmd = app.add_subcommand("shade", "compose bases with a descriptor");
  std::string shade_bases, shade_descriptor, shade_out;
  shade_cmd->add_option("--bases", shade_bases, "bases directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  shade_cmd->add_option("--descriptor", shade_descriptor, "descriptor JSON")
      ->required()
      ->check(CLI::ExistingFile);
  shade_cmd->add_option("--out", shade_out, "output shading PFM")->required();

  // oracle-shade
  auto* oracle_cmd = app.add_subcommand("oracle-shade", "dense reference shading");
  std::string oracle_depth, oracle_env, oracle_out;
  double oracle_rotate = 0.0;
  int oracle_window = defaults.window_radius, oracle_threads = defaults.threads;
  IntrinsicsFlags oracle_intr;
  ShadowFlags oracle_shadow;
  oracle_cmd->add_option("--depth", oracle_depth, "single-channel depth PFM")
      ->required()
      ->check(CLI::ExistingFile);
  oracle_cmd->add_option("--env", oracle_env, "environment map")->required()->check(CLI::ExistingFile);
  oracle_cmd->add_option("--out", oracle_out, "output shading PFM")->required();
  oracle_cmd->add_option("--rotate", oracle_rotate, "rotate the map by this yaw first (degrees)");
  oracle_cmd->add_option("--window-radius", oracle_window, "plane-fit window radius");
  oracle_cmd->add_option("--threads", oracle_threads, "worker threads");
  oracle_intr.add(oracle_cmd);
  oracle_shadow.add(oracle_cmd);

  // fit-bg
  auto* fit_cmd = app.add_subcommand("fit-bg", "fit the background illumination estimator");
  std::string fit_manifest, fit_out, fit_grid = "16x12", fit_split;
  std::uint64_t fit_seed = 0;
  int fit_k = defaults.k;
  double fit_lambda = defaults.ridge_lambda, fit_holdout = 0.0;
  fit_cmd->add_option("--manifest", fit_manifest, "forge manifest JSON")
      ->required()
      ->check(CLI::ExistingFile);
  fit_cmd->add_option("--seed", fit_seed, "seed for the optional holdout shuffle")->required();
  fit_cmd->add_option("--out", fit_out, "output estimator JSON")->required();
  fit_cmd->add_option("--k", fit_k, "descriptor cell count");
  fit_cmd->add_option("--lambda", fit_lambda, "ridge regularizer");
  fit_cmd->add_option("--grid", fit_grid, "pooling grid WxH");
  fit_cmd->add_option("--split", fit_split, "only use envs with this condition tag");
  fit_cmd->add_option("--holdout", fit_holdout, "fraction held out for reporting");

  // estimate-bg
  auto* est_cmd = app.add_subcommand("estimate-bg", "estimate a descriptor from a background");
  std::string est_estimator, est_bg, est_out;
  est_cmd->add_option("--estimator", est_estimator, "estimator JSON from fit-bg")
      ->required()
      ->check(CLI::ExistingFile);
  est_cmd->add_option("--bg", est_bg, "background image (.png/.pfm)")
      ->required()
      ->check(CLI::ExistingFile);
  est_cmd->add_option("--out", est_out, "output descriptor JSON")->required();

  // harmonize
  auto* harm_cmd = app.add_subcommand("harmonize", "re-render a composite's foreground");
  std::string harm_input, harm_mask, harm_depth, harm_src, harm_descriptor, harm_out;
  int harm_k = 0, harm_window = defaults.window_radius, harm_threads = defaults.threads;
  double harm_eps = defaults.albedo_eps;
  IntrinsicsFlags harm_intr;
  ShadowFlags harm_shadow;
  harm_cmd->add_option("--input", harm_input, "composite image (.png/.pfm)")
      ->required()
      ->check(CLI::ExistingFile);
  harm_cmd->add_option("--mask", harm_mask, "foreground mask PNG")->required()->check(CLI::ExistingFile);
  harm_cmd->add_option("--depth", harm_depth, "foreground depth PFM")
      ->required()
      ->check(CLI::ExistingFile);
  harm_cmd->add_option("--src-shading", harm_src, "shading the foreground was captured under (PFM)")
      ->required()
      ->check(CLI::ExistingFile);
  harm_cmd->add_option("--descriptor", harm_descriptor, "target illumination descriptor JSON")
      ->required()
      ->check(CLI::ExistingFile);
  harm_cmd->add_option("--out", harm_out, "output prefix; writes <out>.png and <out>.pfm")->required();
  harm_cmd->add_option("--k", harm_k, "expected descriptor K (default: take from descriptor)");
  harm_cmd->add_option("--eps", harm_eps, "albedo shadow floor");
  harm_cmd->add_option("--window-radius", harm_window, "plane-fit window radius");
  harm_cmd->add_option("--threads", harm_threads, "worker threads");
  harm_intr.add(harm_cmd);
  harm_shadow.add(harm_cmd);

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "foreground metrics over a manifest");
  std::string eval_manifest, eval_pred_dir, eval_split, eval_csv, eval_json;
  eval_cmd->add_option("--manifest", eval_manifest, "forge manifest JSON")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--pred-dir", eval_pred_dir, "directory of <tuple_id>.pfm/.png predictions")
      ->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--split", eval_split, "only evaluate tuples with this split tag");
  eval_cmd->add_option("--out-csv", eval_csv, "per-tuple CSV path")->required();
  eval_cmd->add_option("--out-json", eval_json, "aggregate JSON path")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (print_config) {
      std::cout << print_config_json(defaults) << "\n";
      return 0;
    }
    if (app.got_subcommand(forge_cmd)) {
      return run_forge(forge_seed, forge_out, forge_scenes, forge_envs, forge_size, forge_env_size,
                       forge_fov, forge_split, forge_shadow, forge_threads, forge_env_dir,
                       forge_annotations);
    }
    if (app.got_subcommand(bases_cmd)) {
      const DepthMap depth = depth_from_values(read_pfm_gray(bases_depth));
      const MetaInputs meta =
          bases_intr.resolve(static_cast<int>(depth.cols()), static_cast<int>(depth.rows()));
      const NormalMap normals = normals_from_depth(depth, meta.intrinsics, bases_window, bases_threads);
      BasisPartition part;
      if (!bases_pixel_grid.empty()) {
        const auto [pw, ph] = parse_size(bases_pixel_grid, "--pixel-grid");
        part = pixel_grid_partition(pw, ph);
      } else {
        part = make_partition(bases_k);
      }
      const ShadowConfig cfg = bases_shadow.resolve(meta.ground_plane);
      save_bases(bases_out, shading_bases(depth, normals, meta.intrinsics, part, cfg, bases_threads));
      return 0;
    }
    if (app.got_subcommand(descriptor_cmd)) {
      EnvMap env = load_envmap(desc_env);
      if (desc_rotate != 0.0) env = rotate_envmap(env, desc_rotate);
      const BasisPartition part =
          desc_pixel_grid
              ? pixel_grid_partition(static_cast<int>(env.width()), static_cast<int>(env.height()))
              : make_partition(desc_k);
      save_descriptor(desc_out, descriptor_from_envmap(env, part));
      return 0;
    }
    if (app.got_subcommand(shade_cmd)) {
      const ShadingBases bases = load_bases(shade_bases);
      const IlluminationDescriptor descriptor = load_descriptor(shade_descriptor);
      write_pfm(shade_out, compose_shading(bases, descriptor));
      return 0;
    }
    if (app.got_subcommand(oracle_cmd)) {
      const DepthMap depth = depth_from_values(read_pfm_gray(oracle_depth));
      const MetaInputs meta =
          oracle_intr.resolve(static_cast<int>(depth.cols()), static_cast<int>(depth.rows()));
      const NormalMap normals =
          normals_from_depth(depth, meta.intrinsics, oracle_window, oracle_threads);
      EnvMap env = load_envmap(oracle_env);
      if (oracle_rotate != 0.0) env = rotate_envmap(env, oracle_rotate);
      const ShadowConfig cfg = oracle_shadow.resolve(meta.ground_plane);
      write_pfm(oracle_out,
                reference_shading(depth, normals, meta.intrinsics, env, cfg, oracle_threads));
      return 0;
    }
    if (app.got_subcommand(fit_cmd)) {
      return run_fit_bg(fit_manifest, fit_seed, fit_k, fit_lambda, fit_grid, fit_split, fit_holdout,
                        fit_out);
    }
    if (app.got_subcommand(est_cmd)) {
      const BgEstimator est = load_estimator(est_estimator);
      save_descriptor(est_out, estimate_descriptor(est, load_linear_image(est_bg)));
      return 0;
    }
    if (app.got_subcommand(harm_cmd)) {
      const LinearImage input = load_linear_image(harm_input);
      const Mask mask = load_mask(harm_mask);
      const DepthMap depth = depth_from_values(read_pfm_gray(harm_depth));
      const Shading src_shading = read_pfm_rgb(harm_src);
      const IlluminationDescriptor target = load_descriptor(harm_descriptor);
      const MetaInputs meta =
          harm_intr.resolve(static_cast<int>(input.cols()), static_cast<int>(input.rows()));
      const ShadowConfig cfg = harm_shadow.resolve(meta.ground_plane);
      const int K = harm_k > 0 ? harm_k : target.K();
      const HarmonizeResult result =
          harmonize(input, mask, depth, meta.intrinsics, K, src_shading, target, cfg, harm_threads,
                    harm_window, static_cast<float>(harm_eps));
      write_pfm(harm_out + ".pfm", result.image);
      save_display_png(harm_out + ".png", result.image);
      return 0;
    }
    if (app.got_subcommand(eval_cmd)) {
      return run_evaluate(eval_manifest, eval_pred_dir, eval_split, eval_csv, eval_json);
    }
    std::cerr << app.help() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace shadeharm::cli
