// Acceptance suite: one check per release criterion, each printing a
// PASS/FAIL line. Returns nonzero if any criterion fails.

#include "shadeharm/bg_estimate.hpp"
#include "shadeharm/cli.hpp"
#include "shadeharm/forge.hpp"
#include "shadeharm/harmonize.hpp"
#include "shadeharm/image_io.hpp"
#include "shadeharm/metrics.hpp"

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

using namespace shadeharm;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

struct Criterion {
  int id;
  std::string name;
  bool passed;
  std::string detail;
  double seconds;
};

std::vector<Criterion> g_results;

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void report(int id, const std::string& name, bool passed, const std::string& detail,
            double seconds) {
  g_results.push_back({id, name, passed, detail, seconds});
  std::printf("%s  %d. %s (%s, %.1f s)\n", passed ? "PASS" : "FAIL", id, name.c_str(),
              detail.c_str(), seconds);
  std::fflush(stdout);
}

ForgeEnv fixed_sky(std::uint64_t seed, const std::string& id, int w, int h) {
  Rng rng(seed);
  return random_sky(rng, id, w, h);
}

std::string format(const char* fmt, ...) {
  char buf[512];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  return buf;
}

// --- criterion 1: exact-refinement identity --------------------------------

void criterion_exact_refinement() {
  Timer timer;
  Rng rng(2001);
  SceneSpec scene = random_scene(rng, "c1");
  ForgeEnv sky = fixed_sky(2101, "c1sky", 32, 16);

  ShadowConfig render_cfg;
  const RenderedObject obj = render_object(scene, sky.map, 0.0, 64, 64, render_cfg, 1);

  ShadowConfig cfg;
  cfg.samples_per_cell = 1;  // cell centers
  cfg.ground_plane = obj.ground_plane_cam;
  const BasisPartition part = pixel_grid_partition(32, 16);
  const ShadingBases bases = shading_bases(obj.depth, obj.normals, obj.intrinsics, part, cfg, 1);
  const IlluminationDescriptor descriptor = descriptor_from_envmap(sky.map, part);
  const Shading composed = compose_shading(bases, descriptor);

  ShadowConfig ref_cfg;
  ref_cfg.ground_plane = obj.ground_plane_cam;
  const Shading oracle = reference_shading(obj.depth, obj.normals, obj.intrinsics, sky.map,
                                           ref_cfg, 1);

  double max_rel = 0;
  for (int c = 0; c < 3; ++c) {
    for (Eigen::Index i = 0; i < composed.r.size(); ++i) {
      const double a = composed.channel(c).data()[i];
      const double b = oracle.channel(c).data()[i];
      max_rel = std::max(max_rel, std::abs(a - b) / std::max(std::abs(b), 1e-3));
    }
  }
  const double secs = timer.seconds();
  const bool ok = max_rel <= 1e-5 && secs < 30.0;
  report(1, "exact-refinement identity (pixel-grid bases equal the dense oracle)", ok,
         format("max rel err %.2e, single-threaded", max_rel), secs);
}

// --- criterion 2: K-ablation trend ------------------------------------------

void criterion_k_trend() {
  Timer timer;
  std::vector<SceneSpec> scenes;
  for (int i = 0; i < 5; ++i) {
    Rng rng(3000 + i);
    scenes.push_back(random_scene(rng, "c2s" + std::to_string(i)));
  }
  std::vector<ForgeEnv> skies;
  for (int i = 0; i < 5; ++i) {
    skies.push_back(fixed_sky(3100 + i, "c2e" + std::to_string(i), 32, 16));
  }

  const int klist[3] = {4, 16, 64};
  double mean_psnr[3] = {0, 0, 0};
  int pairs = 0;
  for (const auto& scene : scenes) {
    for (const auto& sky : skies) {
      ShadowConfig cfg;
      const RenderedObject obj = render_object(scene, sky.map, 0.0, 48, 48, cfg, 1);
      ShadowConfig bcfg;
      bcfg.ground_plane = obj.ground_plane_cam;
      for (int i = 0; i < 3; ++i) {
        const BasisPartition part = make_partition(klist[i]);
        const ShadingBases bases =
            shading_bases(obj.depth, obj.normals, obj.intrinsics, part, bcfg, 1);
        const Shading composed = compose_shading(bases, descriptor_from_envmap(sky.map, part));
        mean_psnr[i] += fpsnr(to_display(composed), to_display(obj.shading), obj.mask);
      }
      ++pairs;
    }
  }
  for (double& v : mean_psnr) v /= pairs;
  const double gain_low = mean_psnr[1] - mean_psnr[0];
  const double gain_high = mean_psnr[2] - mean_psnr[1];
  const double secs = timer.seconds();
  const bool ok = mean_psnr[1] >= mean_psnr[0] && mean_psnr[2] >= mean_psnr[1] &&
                  gain_high < gain_low && secs < 300.0;
  report(2, "K-ablation trend: fPSNR non-decreasing over K=4,16,64 with saturating gains", ok,
         format("fPSNR %.2f -> %.2f -> %.2f dB over %d scene-sky pairs", mean_psnr[0],
                mean_psnr[1], mean_psnr[2], pairs),
         secs);
}

// --- criterion 3: furnace test ----------------------------------------------

void criterion_furnace() {
  Timer timer;
  const int size = 32;
  Intrinsics intr{40.0, 40.0, size / 2.0, size / 2.0, size, size};
  Planef values = Planef::Zero(size, size);
  NormalMap normals;
  normals.nx = Planef::Zero(size, size);
  normals.ny = Planef::Zero(size, size);
  normals.nz = Planef::Zero(size, size);
  normals.valid = Planeb::Zero(size, size);
  for (int v = 0; v < size; ++v) {
    const double dy = (v - intr.cy) / intr.fy;
    if (dy < 0.1) continue;
    for (int u = 0; u < size; ++u) {
      values(v, u) = static_cast<float>(0.8 / dy);
      normals.ny(v, u) = -1.0f;
      normals.valid(v, u) = 1;
    }
  }
  const DepthMap depth = depth_from_values(values);
  EnvMap uniform;
  uniform.radiance = Image3::constant(128, 256, 1.0f, 1.0f, 1.0f);

  bool ok = true;
  std::string detail;
  for (int K : {16, 32}) {
    ShadowConfig cfg;
    cfg.samples_per_cell = 8;
    const BasisPartition part = make_partition(K);
    const ShadingBases bases = shading_bases(depth, normals, intr, part, cfg, 1);
    const Shading s = compose_shading(bases, descriptor_from_envmap(uniform, part));
    const double value = s.g(size - 4, size / 2);
    ok = ok && std::abs(value - kPi) / kPi <= 0.02;
    detail += format("K=%d: %.4f ", K, value);
  }
  report(3, "furnace: up-facing plane under a uniform unit sky shades to pi within 2%", ok,
         detail + format("(pi = %.4f)", kPi), timer.seconds());
}

// --- shared forge datasets for criteria 4 and 5 -----------------------------

struct Dataset {
  ForgeManifest manifest;
  fs::path root;
};

Dataset build_dataset(std::uint64_t seed, int n_scenes, int n_envs, const std::string& dir,
                      const std::string& split) {
  Dataset ds;
  ds.root = fs::temp_directory_path() / dir;
  fs::remove_all(ds.root);

  Rng root(seed);
  std::vector<SceneSpec> scenes;
  Rng rng_scene = root.child(0x5c);
  for (int i = 0; i < n_scenes; ++i) {
    Rng rng = rng_scene.child(static_cast<std::uint64_t>(i));
    char id[16];
    std::snprintf(id, sizeof(id), "s%03d", i);
    scenes.push_back(random_scene(rng, id));
  }
  std::vector<ForgeEnv> envs;
  Rng rng_env = root.child(0xe2);
  for (int i = 0; i < n_envs; ++i) {
    Rng rng = rng_env.child(static_cast<std::uint64_t>(i));
    char id[16];
    std::snprintf(id, sizeof(id), "e%03d", i);
    envs.push_back(random_sky(rng, id, 32, 16));
  }
  ForgeConfig cfg;
  cfg.width = 72;
  cfg.height = 72;
  cfg.split = split;
  ds.manifest = build_tuples(scenes, envs, seed, ds.root.string(), cfg);
  return ds;
}

struct TupleData {
  LinearImage composite_linear;
  Image3 composite_display, gt_display;
  Mask mask;
  DepthMap depth;
  Intrinsics intrinsics;
  Eigen::Vector4d ground_plane;
  Shading src_shading, gt_shading;
  LinearImage bg_linear;
};

TupleData load_tuple(const Dataset& ds, const TupleRecord& rec) {
  const fs::path dir = ds.root / rec.dir;
  TupleData t;
  t.composite_display = read_png_rgb((dir / "composite.png").string());
  t.composite_linear = srgb_decode(t.composite_display);
  t.gt_display = read_png_rgb((dir / "gt.png").string());
  t.mask = mask_from_alpha(read_png_gray((dir / "mask.png").string()));
  t.depth = depth_from_values(read_pfm_gray((dir / "depth.pfm").string()));
  t.src_shading = read_pfm_rgb((dir / "src_shading.pfm").string());
  t.gt_shading = read_pfm_rgb((dir / "shading.pfm").string());
  t.bg_linear = srgb_decode(read_png_rgb((dir / "bg.png").string()));

  std::ifstream meta_in(dir / "meta.json");
  std::stringstream ss;
  ss << meta_in.rdbuf();
  const std::string meta = ss.str();
  auto extract = [&](const std::string& key) {
    const auto pos = meta.find("\"" + key + "\"");
    return std::stod(meta.substr(meta.find(':', pos) + 1));
  };
  t.intrinsics.fx = extract("fx");
  t.intrinsics.fy = extract("fy");
  t.intrinsics.cx = extract("cx");
  t.intrinsics.cy = extract("cy");
  t.intrinsics.width = static_cast<int>(t.composite_display.cols());
  t.intrinsics.height = static_cast<int>(t.composite_display.rows());
  {
    const auto pos = meta.find("\"ground_plane\"");
    const auto open = meta.find('[', pos);
    std::string tail = meta.substr(open + 1);
    for (char& ch : tail) {
      if (ch == ',' || ch == ']') ch = ' ';
    }
    std::istringstream gs(tail);
    gs >> t.ground_plane[0] >> t.ground_plane[1] >> t.ground_plane[2] >> t.ground_plane[3];
  }
  return t;
}

std::map<std::string, EnvMap> load_envs(const Dataset& ds) {
  std::map<std::string, EnvMap> envs;
  for (const auto& [id, file] : ds.manifest.env_files) {
    EnvMap env;
    env.radiance = read_pfm_rgb((ds.root / file).string());
    envs[id] = env;
  }
  return envs;
}

// --- criterion 4: identity harmonization ------------------------------------

void criterion_identity(const Dataset& ds, const std::map<std::string, EnvMap>& envs) {
  Timer timer;
  const BasisPartition part = make_partition(32);
  double sum_psnr = 0, min_psnr = 1e9;
  int count = 0;
  for (const auto& rec : ds.manifest.tuples) {
    if (count >= 20) break;
    const TupleData t = load_tuple(ds, rec);
    const EnvMap src_rot = rotate_envmap(envs.at(rec.src_env_id), rec.rotation_deg);
    const IlluminationDescriptor target = descriptor_from_envmap(src_rot, part);
    ShadowConfig cfg;
    cfg.ground_plane = t.ground_plane;
    const HarmonizeResult result = harmonize(t.composite_linear, t.mask, t.depth, t.intrinsics,
                                             32, t.src_shading, target, cfg, 1);
    const double psnr = fpsnr(to_display(result.image), t.composite_display, t.mask);
    sum_psnr += psnr;
    min_psnr = std::min(min_psnr, psnr);
    ++count;
  }
  const double mean_psnr = sum_psnr / count;
  const bool ok = mean_psnr >= 35.0;
  report(4, "identity harmonization: gt source descriptor reproduces the input foreground", ok,
         format("mean fPSNR %.2f dB (min %.2f) over %d tuples, bound 35", mean_psnr, min_psnr,
                count),
         timer.seconds());
}

// --- criterion 5: end-to-end improvement -------------------------------------

void criterion_end_to_end(const Dataset& train, const Dataset& held,
                          const std::map<std::string, EnvMap>& train_envs) {
  Timer timer;
  const int K = 32;
  const BasisPartition part = make_partition(K);

  std::vector<BgFeatures> features;
  std::vector<IlluminationDescriptor> targets;
  for (const auto& rec : train.manifest.tuples) {
    const fs::path dir = train.root / rec.dir;
    const Image3 bg = srgb_decode(read_png_rgb((dir / "bg.png").string()));
    features.push_back(extract_features(bg, 16, 12));
    targets.push_back(
        descriptor_from_envmap(rotate_envmap(train_envs.at(rec.env_id), rec.rotation_deg), part));
  }
  const BgEstimator estimator = fit_bg_estimator(features, targets, 1e-2);
  IlluminationDescriptor mean_descriptor;
  mean_descriptor.partition = part;
  mean_descriptor.l = Eigen::Matrix<double, 3, Eigen::Dynamic>::Zero(3, K);
  for (const auto& d : targets) mean_descriptor.l += d.l;
  mean_descriptor.l /= static_cast<double>(targets.size());

  int evaluated = 0, improved_all = 0, improved_mae = 0, improved_psnr = 0, improved_ssim = 0;
  MetricReport agg_harm{}, agg_base{};
  double shading_err_est = 0, shading_err_mean = 0;
  int shading_checked = 0;

  for (const auto& rec : held.manifest.tuples) {
    if (evaluated >= 50) break;
    const TupleData t = load_tuple(held, rec);
    const IlluminationDescriptor estimated = estimate_descriptor(estimator, t.bg_linear);
    ShadowConfig cfg;
    cfg.ground_plane = t.ground_plane;
    const HarmonizeResult result = harmonize(t.composite_linear, t.mask, t.depth, t.intrinsics, K,
                                             t.src_shading, estimated, cfg, 1);

    const MetricReport harm = evaluate_pair(to_display(result.image), t.gt_display, t.mask);
    const MetricReport base = evaluate_pair(t.composite_display, t.gt_display, t.mask);
    agg_harm.fmae += harm.fmae;
    agg_harm.fpsnr_db += harm.fpsnr_db;
    agg_harm.fssim += harm.fssim;
    agg_base.fmae += base.fmae;
    agg_base.fpsnr_db += base.fpsnr_db;
    agg_base.fssim += base.fssim;
    const bool mae_ok = harm.fmae < base.fmae;
    const bool psnr_ok = harm.fpsnr_db > base.fpsnr_db;
    const bool ssim_ok = harm.fssim > base.fssim;
    improved_mae += mae_ok;
    improved_psnr += psnr_ok;
    improved_ssim += ssim_ok;
    improved_all += mae_ok && psnr_ok && ssim_ok;

    if (shading_checked < 15) {
      const NormalMap normals = normals_from_depth(t.depth, t.intrinsics, 2, 1);
      const ShadingBases bases = shading_bases(t.depth, normals, t.intrinsics, part, cfg, 1);
      auto shading_l1 = [&](const IlluminationDescriptor& d) {
        const Shading s = compose_shading(bases, d);
        double acc = 0;
        long n = 0;
        for (Eigen::Index y = 0; y < s.rows(); ++y) {
          for (Eigen::Index x = 0; x < s.cols(); ++x) {
            if (!t.mask.m(y, x)) continue;
            for (int c = 0; c < 3; ++c) {
              acc += std::abs(static_cast<double>(s.channel(c)(y, x)) -
                              t.gt_shading.channel(c)(y, x));
            }
            ++n;
          }
        }
        return acc / (3.0 * n);
      };
      shading_err_est += shading_l1(estimated);
      shading_err_mean += shading_l1(mean_descriptor);
      ++shading_checked;
    }
    ++evaluated;
  }
  const double n = evaluated;
  agg_harm.fmae /= n;
  agg_harm.fpsnr_db /= n;
  agg_harm.fssim /= n;
  agg_base.fmae /= n;
  agg_base.fpsnr_db /= n;
  agg_base.fssim /= n;

  const double frac_all = improved_all / n;
  const bool aggregate_ok = agg_harm.fmae < agg_base.fmae &&
                            agg_harm.fpsnr_db > agg_base.fpsnr_db &&
                            agg_harm.fssim > agg_base.fssim;
  const bool estimator_ok = shading_err_est < shading_err_mean;
  const double secs = timer.seconds();
  const bool ok = aggregate_ok && frac_all >= 0.9 && estimator_ok && secs < 600.0;
  report(5, "end-to-end: estimated-descriptor harmonization beats the input composite", ok,
         format("fMAE %.4f vs %.4f, fPSNR %.2f vs %.2f, fSSIM %.4f vs %.4f; all-metric wins "
                "%.0f%% (mae %.0f%% psnr %.0f%% ssim %.0f%%) of %d; estimator shading L1 %.4f "
                "vs mean-baseline %.4f",
                agg_harm.fmae, agg_base.fmae, agg_harm.fpsnr_db, agg_base.fpsnr_db, agg_harm.fssim,
                agg_base.fssim, 100 * frac_all, 100.0 * improved_mae / n, 100.0 * improved_psnr / n,
                100.0 * improved_ssim / n, evaluated, shading_err_est / shading_checked,
                shading_err_mean / shading_checked),
         secs);
}

// --- criterion 6: loss oracles ------------------------------------------------

double ssim_direct(const Planef& a, const Planef& b) {
  double g[11];
  double gsum = 0;
  for (int i = 0; i < 11; ++i) {
    g[i] = std::exp(-(i - 5) * (i - 5) / (2 * 1.5 * 1.5));
    gsum += g[i];
  }
  for (double& v : g) v /= gsum;
  double total = 0;
  for (Eigen::Index y = 0; y < a.rows(); ++y) {
    for (Eigen::Index x = 0; x < a.cols(); ++x) {
      double wsum = 0, mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
      for (int dy = -5; dy <= 5; ++dy) {
        for (int dx = -5; dx <= 5; ++dx) {
          const Eigen::Index yi = y + dy, xi = x + dx;
          if (yi < 0 || yi >= a.rows() || xi < 0 || xi >= a.cols()) continue;
          const double w = g[dy + 5] * g[dx + 5];
          wsum += w;
          mx += w * a(yi, xi);
          my += w * b(yi, xi);
          xx += w * a(yi, xi) * a(yi, xi);
          yy += w * b(yi, xi) * b(yi, xi);
          xy += w * a(yi, xi) * b(yi, xi);
        }
      }
      mx /= wsum;
      my /= wsum;
      const double var_x = xx / wsum - mx * mx, var_y = yy / wsum - my * my,
                   cov = xy / wsum - mx * my;
      total += ((2 * mx * my + 1e-4) * (2 * cov + 9e-4)) /
               ((mx * mx + my * my + 1e-4) * (var_x + var_y + 9e-4));
    }
  }
  return total / (a.rows() * a.cols());
}

void criterion_loss_oracles() {
  Timer timer;
  Rng rng(6001);
  auto random_image = [&rng](int h, int w) {
    Image3 img(h, w);
    for (int c = 0; c < 3; ++c) {
      for (Eigen::Index i = 0; i < img.r.size(); ++i) {
        img.channel(c).data()[i] = static_cast<float>(rng.next_double());
      }
    }
    return img;
  };

  const Image3 s = random_image(20, 24), sp = random_image(20, 24);
  const Image3 a = random_image(20, 24), ap = random_image(20, 24);
  const Image3 i0 = random_image(20, 24), ip = random_image(20, 24);
  auto mae = [](const Image3& x, const Image3& y) {
    double acc = 0;
    for (int c = 0; c < 3; ++c) {
      for (Eigen::Index i = 0; i < x.r.size(); ++i) {
        acc += std::abs(static_cast<double>(x.channel(c).data()[i]) - y.channel(c).data()[i]);
      }
    }
    return acc / (3.0 * x.rows() * x.cols());
  };
  auto ssim3 = [](const Image3& x, const Image3& y) {
    return (ssim_direct(x.r, y.r) + ssim_direct(x.g, y.g) + ssim_direct(x.b, y.b)) / 3.0;
  };
  const double expected_lnr = mae(s, sp) + mae(a, ap) + mae(i0, ip) +
                              (1 - ssim3(s, sp)) + (1 - ssim3(a, ap)) + (1 - ssim3(i0, ip));
  const double got_lnr = l_nr(s, sp, a, ap, i0, ip, 1.0);
  const double lnr_err = std::abs(got_lnr - expected_lnr);

  const BasisPartition part = make_partition(8);
  ShadingBases bases;
  bases.partition = part;
  for (int k = 0; k < 8; ++k) {
    Planef plane(12, 12);
    for (Eigen::Index i = 0; i < plane.size(); ++i) {
      plane.data()[i] = static_cast<float>(rng.next_double());
    }
    bases.sb.push_back(plane);
  }
  IlluminationDescriptor gt, pred;
  gt.partition = pred.partition = part;
  gt.l.resize(3, 8);
  pred.l.resize(3, 8);
  for (int c = 0; c < 3; ++c) {
    for (int k = 0; k < 8; ++k) {
      gt.l(c, k) = rng.uniform(0, 2);
      pred.l(c, k) = rng.uniform(0, 2);
    }
  }
  const Shading gt_shading = compose_shading(bases, gt);
  double term1 = 0;
  for (int c = 0; c < 3; ++c) {
    for (int k = 0; k < 8; ++k) term1 += std::abs(pred.l(c, k) - gt.l(c, k));
  }
  term1 /= 24.0;
  double term2 = 0;
  for (Eigen::Index y = 0; y < 12; ++y) {
    for (Eigen::Index x = 0; x < 12; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0;
        for (int k = 0; k < 8; ++k) acc += pred.l(c, k) * bases.sb[static_cast<size_t>(k)](y, x);
        term2 += std::abs(acc - gt_shading.channel(c)(y, x));
      }
    }
  }
  term2 /= 144.0;
  const double bie_err = std::abs(eval_bie_loss(pred, gt, bases, gt_shading) - (term1 + term2));

  const bool ok = lnr_err <= 1e-7 && bie_err <= 1e-7;
  report(6, "loss oracles: l_nr and eval_bie_loss match brute-force recomputation", ok,
         format("l_nr err %.2e, bie err %.2e", lnr_err, bie_err), timer.seconds());
}

// --- criterion 7: metric suite -------------------------------------------------

void criterion_metric_suite() {
  Timer timer;
  Rng rng(7001);
  Image3 img(24, 24), other(24, 24);
  for (int c = 0; c < 3; ++c) {
    for (Eigen::Index i = 0; i < img.r.size(); ++i) {
      img.channel(c).data()[i] = static_cast<float>(rng.next_double());
      other.channel(c).data()[i] = static_cast<float>(rng.next_double());
    }
  }
  Planef alpha = Planef::Zero(24, 24);
  for (int y = 6; y < 18; ++y) {
    for (int x = 6; x < 18; ++x) alpha(y, x) = 1.0f;
  }
  const Mask mask = mask_from_alpha(alpha);

  const bool identity_one = fssim(img, img, mask) == 1.0;

  Image3 perturbed = other;
  for (Eigen::Index y = 0; y < 24; ++y) {
    for (Eigen::Index x = 0; x < 24; ++x) {
      if (mask.m(y, x)) continue;
      for (int c = 0; c < 3; ++c) {
        perturbed.channel(c)(y, x) = 1.0f - perturbed.channel(c)(y, x);
      }
    }
  }
  const bool locality = fmae(perturbed, img, mask) == fmae(other, img, mask) &&
                        fpsnr(perturbed, img, mask) == fpsnr(other, img, mask) &&
                        fssim(perturbed, img, mask) == fssim(other, img, mask);

  const double va = static_cast<double>(0.5f), vb = static_cast<double>(0.6f);
  const double closed = (2 * va * vb + 1e-4) / (va * va + vb * vb + 1e-4);
  const double got = ssim(Image3::constant(16, 16, 0.5f, 0.5f, 0.5f),
                          Image3::constant(16, 16, 0.6f, 0.6f, 0.6f));
  const bool constant_ok = std::abs(got - closed) <= 1e-9;

  const bool ok = identity_one && locality && constant_ok;
  report(7, "metric suite: fssim identity, exact mask locality, constant-image closed form", ok,
         format("fssim(x,x)=%s, locality=%s, |ssim-closed|=%.1e", identity_one ? "1" : "BAD",
                locality ? "exact" : "BAD", std::abs(got - closed)),
         timer.seconds());
}

// --- criterion 8: geometry ------------------------------------------------------

void criterion_geometry() {
  Timer timer;
  Intrinsics intr{160.0, 160.0, 32.0, 32.0, 64, 64};
  Planef values(64, 64);
  for (Eigen::Index v = 0; v < 64; ++v) {
    for (Eigen::Index u = 0; u < 64; ++u) {
      values(v, u) = static_cast<float>(1.0 / (1.0 + 0.5 * (u - intr.cx) / intr.fx));
    }
  }
  const NormalMap nm = normals_from_depth(depth_from_values(values), intr, 2, 1);
  const Vec3d expected = Vec3d(-0.5, 0, -1).normalized();
  double worst_deg = 0;
  for (Eigen::Index v = 4; v < 60; ++v) {
    for (Eigen::Index u = 4; u < 60; ++u) {
      const double cosv = std::clamp(nm.normal(v, u).dot(expected), -1.0, 1.0);
      worst_deg = std::max(worst_deg, std::acos(cosv) * 180.0 / kPi);
    }
  }

  const int size = 128;
  Intrinsics bintr{0.75 * size, 0.75 * size, size / 2.0, size / 2.0, size, size};
  const double floor_y = 0.9;
  const Vec3d box_lo(-0.70, 0.10, 1.55), box_hi(-0.35, 0.90, 3.00);
  Planef bvalues = Planef::Zero(size, size);
  NormalMap bnormals;
  bnormals.nx = Planef::Zero(size, size);
  bnormals.ny = Planef::Zero(size, size);
  bnormals.nz = Planef::Zero(size, size);
  bnormals.valid = Planeb::Zero(size, size);
  for (int v = 0; v < size; ++v) {
    for (int u = 0; u < size; ++u) {
      const Vec3d dir =
          Vec3d((u - bintr.cx) / bintr.fx, (v - bintr.cy) / bintr.fy, 1.0).normalized();
      double best = 1e30;
      Vec3d n = Vec3d::Zero();
      if (dir.y() > 1e-9) {
        const double t = floor_y / dir.y();
        if (t * dir.z() < 2.6) {
          best = t;
          n = Vec3d(0, -1, 0);
        }
      }
      double tmin = -1e30, tmax = 1e30;
      int axis = -1;
      bool ok_box = true;
      for (int i = 0; i < 3 && ok_box; ++i) {
        if (std::abs(dir[i]) < 1e-12) {
          if (0 < box_lo[i] || 0 > box_hi[i]) ok_box = false;
          continue;
        }
        double t1 = box_lo[i] / dir[i], t2 = box_hi[i] / dir[i];
        if (t1 > t2) std::swap(t1, t2);
        if (t1 > tmin) {
          tmin = t1;
          axis = i;
        }
        tmax = std::min(tmax, t2);
        if (tmin > tmax) ok_box = false;
      }
      if (ok_box && axis >= 0 && tmin > 1e-9 && tmin < best) {
        best = tmin;
        n = Vec3d::Zero();
        n[axis] = dir[axis] > 0 ? -1.0 : 1.0;
      }
      if (best > 1e29) continue;
      bvalues(v, u) = static_cast<float>(best * dir.z());
      bnormals.nx(v, u) = static_cast<float>(n.x());
      bnormals.ny(v, u) = static_cast<float>(n.y());
      bnormals.nz(v, u) = static_cast<float>(n.z());
      bnormals.valid(v, u) = 1;
    }
  }
  const DepthMap bdepth = depth_from_values(bvalues);
  const PointMap points = unproject(bdepth, bintr);
  ShadowConfig cfg;
  const ShadowConfig resolved = resolve_shadow_config(cfg, bdepth, bintr);
  auto box_hit = [&](const Vec3d& o, const Vec3d& d) {
    double tmin = -1e30, tmax = 1e30;
    for (int i = 0; i < 3; ++i) {
      if (std::abs(d[i]) < 1e-12) {
        if (o[i] < box_lo[i] || o[i] > box_hi[i]) return false;
        continue;
      }
      double t1 = (box_lo[i] - o[i]) / d[i], t2 = (box_hi[i] - o[i]) / d[i];
      if (t1 > t2) std::swap(t1, t2);
      tmin = std::max(tmin, t1);
      tmax = std::min(tmax, t2);
      if (tmin > tmax) return false;
    }
    return tmax > 1e-9;
  };
  const Vec3d light = Vec3d(-0.55, -0.75, -0.12).normalized();
  long inter = 0, uni = 0;
  for (int v = 0; v < size; ++v) {
    for (int u = 0; u < size; ++u) {
      if (!bdepth.is_valid(v, u)) continue;
      if (bnormals.normal(v, u).y() > -0.5) continue;
      const Vec3d p = points.point(v, u);
      const bool analytic = box_hit(p + resolved.shadow_bias * bnormals.normal(v, u), light);
      const bool marched = visibility(points, bnormals, bintr, v, u, light, cfg) == 0;
      inter += analytic && marched;
      uni += analytic || marched;
    }
  }
  const double iou = uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;

  const bool ok = worst_deg < 0.5 && iou >= 0.95;
  report(8, "geometry: ramp normals within 0.5 deg, box shadow IoU >= 0.95 at 128x128", ok,
         format("worst normal err %.3f deg, shadow IoU %.3f (%ld px union)", worst_deg, iou, uni),
         timer.seconds());
}

// --- criterion 9: determinism ----------------------------------------------------

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "<missing:" + path.string() + ">";
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void criterion_determinism(const std::string& cli) {
  Timer timer;
  const fs::path base = fs::temp_directory_path() / "shadeharm_accept_det";
  fs::remove_all(base);
  bool commands_ok = true;
  std::string first_tuple;

  for (int run = 1; run <= 2; ++run) {
    const fs::path root = base / ("run" + std::to_string(run));
    fs::create_directories(root / "preds");
    auto sh = [&](const std::string& cmd) {
      const std::string full = "\"" + cli + "\" " + cmd + " 2>>" + (root / "log.txt").string();
      const int rc = std::system(full.c_str());
      if (rc != 0) {
        commands_ok = false;
        std::cerr << "command failed (" << rc << "): " << full << "\n";
      }
    };
    const std::string data = (root / "data").string();
    sh("forge --seed 11 --out " + data + " --scenes 2 --envs 4 --size 48x48 --env-size 32x16");
    const ForgeManifest manifest = load_manifest(data + "/manifest.json");
    first_tuple = manifest.tuples.front().id;
    const std::string tdir = data + "/" + manifest.tuples.front().dir;
    sh("fit-bg --manifest " + data + "/manifest.json --seed 7 --k 16 --lambda 0.01 --grid 8x6 "
       "--out " + (root / "est.json").string());
    sh("estimate-bg --estimator " + (root / "est.json").string() + " --bg " + tdir +
       "/bg.png --out " + (root / "dhat.json").string());
    sh("harmonize --input " + tdir + "/composite.png --mask " + tdir + "/mask.png --depth " +
       tdir + "/depth.pfm --src-shading " + tdir + "/src_shading.pfm --descriptor " +
       (root / "dhat.json").string() + " --meta " + tdir + "/meta.json --out " +
       (root / "preds" / first_tuple).string());
    sh("evaluate --manifest " + data + "/manifest.json --pred-dir " + (root / "preds").string() +
       " --out-csv " + (root / "pred.csv").string() + " --out-json " +
       (root / "pred.json").string());
    sh("evaluate --manifest " + data + "/manifest.json --out-csv " +
       (root / "base.csv").string() + " --out-json " + (root / "base.json").string());
  }

  int mismatches = 0;
  std::string bad;
  auto compare = [&](const std::string& rel) {
    if (read_bytes(base / "run1" / rel) != read_bytes(base / "run2" / rel)) {
      ++mismatches;
      bad += rel + " ";
    }
  };
  compare("data/manifest.json");
  compare("est.json");
  compare("dhat.json");
  compare("pred.csv");
  compare("pred.json");
  compare("base.csv");
  compare("base.json");
  compare("preds/" + first_tuple + ".pfm");
  compare("preds/" + first_tuple + ".png");
  compare("data/tuples/" + first_tuple + "/composite.png");
  compare("data/tuples/" + first_tuple + "/depth.pfm");

  const bool ok = commands_ok && mismatches == 0;
  report(9, "determinism: repeated forge/fit/harmonize/evaluate runs are byte-identical", ok,
         ok ? "11 artifacts byte-equal across runs"
            : format("%d mismatching artifacts: %s", mismatches, bad.c_str()),
         timer.seconds());
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "./tools/shadeharm";
  std::printf("acceptance suite\n================\n");

  criterion_exact_refinement();
  criterion_k_trend();
  criterion_furnace();

  Timer forge_timer;
  const Dataset train = build_dataset(424242, 10, 14, "shadeharm_accept_train", "train");
  const Dataset held = build_dataset(777001, 3, 12, "shadeharm_accept_held", "test");
  const auto train_envs = load_envs(train);
  const auto held_envs = load_envs(held);
  std::printf("      (forged %zu train + %zu held-out tuples in %.1f s)\n",
              train.manifest.tuples.size(), held.manifest.tuples.size(), forge_timer.seconds());

  criterion_identity(held, held_envs);
  criterion_end_to_end(train, held, train_envs);
  criterion_loss_oracles();
  criterion_metric_suite();
  criterion_geometry();
  criterion_determinism(cli);

  int failures = 0;
  for (const auto& r : g_results) failures += r.passed ? 0 : 1;
  std::printf("================\n%zu criteria, %d failed\n", g_results.size(), failures);
  return failures == 0 ? 0 : 1;
}
