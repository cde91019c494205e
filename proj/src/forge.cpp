#include "shadeharm/forge.hpp"

#include "shadeharm/image_io.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

namespace shadeharm {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kHitEps = 1e-6;

Vec3d rotate_y(const Vec3d& v, double rad) {
  const double c = std::cos(rad), s = std::sin(rad);
  return {v.x() * c - v.z() * s, v.y(), v.x() * s + v.z() * c};
}

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  Vec3d normal = Vec3d::Zero();  // world space, outward
  const Material* material = nullptr;
};

bool hit_sphere(const Vec3d& o, const Vec3d& d, const Vec3d& center, double radius, Hit& hit) {
  const Vec3d oc = o - center;
  const double b = oc.dot(d);
  const double disc = b * b - (oc.squaredNorm() - radius * radius);
  if (disc < 0) return false;
  const double t = -b - std::sqrt(disc);
  if (t <= kHitEps || t >= hit.t) return false;
  hit.t = t;
  hit.normal = (o + t * d - center) / radius;
  return true;
}

bool hit_box(const Vec3d& o, const Vec3d& d, const Vec3d& center, const Vec3d& half,
             double yaw_rad, Hit& hit) {
  const Vec3d ro = rotate_y(o - center, -yaw_rad);
  const Vec3d rd = rotate_y(d, -yaw_rad);
  double tmin = -std::numeric_limits<double>::infinity();
  double tmax = std::numeric_limits<double>::infinity();
  int axis = -1;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(rd[i]) < 1e-12) {
      if (std::abs(ro[i]) > half[i]) return false;
      continue;
    }
    double t1 = (-half[i] - ro[i]) / rd[i];
    double t2 = (half[i] - ro[i]) / rd[i];
    if (t1 > t2) std::swap(t1, t2);
    if (t1 > tmin) {
      tmin = t1;
      axis = i;
    }
    tmax = std::min(tmax, t2);
    if (tmin > tmax) return false;
  }
  if (axis < 0 || tmin <= kHitEps || tmin >= hit.t) return false;
  Vec3d n = Vec3d::Zero();
  n[axis] = rd[axis] > 0 ? -1.0 : 1.0;
  hit.t = tmin;
  hit.normal = rotate_y(n, yaw_rad);
  return true;
}

bool hit_capsule(const Vec3d& o, const Vec3d& d, const Vec3d& bottom, double radius,
                 double half_len, Hit& hit) {
  const double y0 = bottom.y() + radius;
  const double y1 = bottom.y() + radius + 2.0 * half_len;
  const Vec3d p0(bottom.x(), y0, bottom.z());
  const Vec3d p1(bottom.x(), y1, bottom.z());
  bool found = false;

  const double ox = o.x() - bottom.x(), oz = o.z() - bottom.z();
  const double a = d.x() * d.x() + d.z() * d.z();
  if (a > 1e-12) {
    const double b = ox * d.x() + oz * d.z();
    const double c = ox * ox + oz * oz - radius * radius;
    const double disc = b * b - a * c;
    if (disc >= 0) {
      const double t = (-b - std::sqrt(disc)) / a;
      if (t > kHitEps && t < hit.t) {
        const double y = o.y() + t * d.y();
        if (y >= y0 && y <= y1) {
          const Vec3d p = o + t * d;
          hit.t = t;
          hit.normal = Vec3d(p.x() - bottom.x(), 0.0, p.z() - bottom.z()) / radius;
          found = true;
        }
      }
    }
  }
  found |= hit_sphere(o, d, p0, radius, hit);
  found |= hit_sphere(o, d, p1, radius, hit);
  return found;
}

bool scene_hit(const SceneSpec& scene, const Vec3d& o, const Vec3d& d, Hit& hit) {
  bool found = false;
  for (const Primitive& prim : scene.primitives) {
    Hit h = hit;
    bool ok = false;
    switch (prim.shape) {
      case Primitive::Shape::Sphere:
        ok = hit_sphere(o, d, prim.position + Vec3d(0, prim.size.x(), 0), prim.size.x(), h);
        break;
      case Primitive::Shape::Box:
        ok = hit_box(o, d, prim.position + Vec3d(0, prim.size.y(), 0), prim.size,
                     prim.yaw_deg * kPi / 180.0, h);
        break;
      case Primitive::Shape::Capsule:
        ok = hit_capsule(o, d, prim.position, prim.size.x(), prim.size.y(), h);
        break;
    }
    if (ok && h.t < hit.t) {
      hit = h;
      hit.material = &prim.material;
      found = true;
    }
  }
  return found;
}

Intrinsics scale_intrinsics(const Intrinsics& intr, int out_w, int out_h) {
  const double sx = static_cast<double>(out_w) / intr.width;
  const double sy = static_cast<double>(out_h) / intr.height;
  Intrinsics out;
  out.fx = intr.fx * sx;
  out.fy = intr.fy * sy;
  out.cx = (intr.cx + 0.5) * sx - 0.5;
  out.cy = (intr.cy + 0.5) * sy - 0.5;
  out.width = out_w;
  out.height = out_h;
  return out;
}

nlohmann::json placement_to_json(const Placement& p) {
  return {{"target", {p.target.x(), p.target.y()}},
          {"scale", p.scale},
          {"scale_fraction", p.scale_fraction},
          {"corner", p.corner},
          {"paste", {p.paste.x(), p.paste.y()}},
          {"crop_origin", {p.crop_origin.x(), p.crop_origin.y()}},
          {"crop_size", {p.crop_size.x(), p.crop_size.y()}},
          {"scaled_size", {p.scaled_size.x(), p.scaled_size.y()}}};
}

Placement placement_from_json(const nlohmann::json& j) {
  Placement p;
  p.target = {j.at("target")[0].get<int>(), j.at("target")[1].get<int>()};
  p.scale = j.at("scale").get<double>();
  p.scale_fraction = j.at("scale_fraction").get<double>();
  p.corner = j.at("corner").get<std::string>();
  p.paste = {j.at("paste")[0].get<int>(), j.at("paste")[1].get<int>()};
  p.crop_origin = {j.at("crop_origin")[0].get<int>(), j.at("crop_origin")[1].get<int>()};
  p.crop_size = {j.at("crop_size")[0].get<int>(), j.at("crop_size")[1].get<int>()};
  p.scaled_size = {j.at("scaled_size")[0].get<int>(), j.at("scaled_size")[1].get<int>()};
  return p;
}

}  // namespace

Vec3f Material::albedo_at(const Vec3d& world_pos) const {
  if (checker_size <= 0) return color_a;
  const double phase = 0.37 * checker_size;
  const long parity = static_cast<long>(std::floor((world_pos.x() + phase) / checker_size)) +
                      static_cast<long>(std::floor((world_pos.y() + phase) / checker_size)) +
                      static_cast<long>(std::floor((world_pos.z() + phase) / checker_size));
  return (parity & 1) ? color_b : color_a;
}

RenderedObject render_geometry(const SceneSpec& scene, const Intrinsics& intr, int threads) {
  if (scene.primitives.empty()) throw std::invalid_argument("render: empty scene");
  intr.validate();
  const int wid = intr.width, hgt = intr.height;

  RenderedObject out;
  out.intrinsics = intr;
  out.ground_plane_cam = Eigen::Vector4d(0, -1, 0, scene.camera.eye.y());
  out.depth.values = Planef::Zero(hgt, wid);
  out.depth.valid = Planeb::Zero(hgt, wid);
  out.normals.nx = Planef::Zero(hgt, wid);
  out.normals.ny = Planef::Zero(hgt, wid);
  out.normals.nz = Planef::Zero(hgt, wid);
  out.normals.valid = Planeb::Zero(hgt, wid);
  out.albedo = Albedo(hgt, wid);
  out.mask.m = Planeb::Zero(hgt, wid);

  const Vec3d eye = scene.camera.eye;
  parallel_for(0, hgt, threads, [&](Eigen::Index y) {
    for (int x = 0; x < wid; ++x) {
      const Vec3d dir_cam =
          Vec3d((x - intr.cx) / intr.fx, (static_cast<double>(y) - intr.cy) / intr.fy, 1.0)
              .normalized();
      const Vec3d dir_w = cam_to_world(dir_cam);
      Hit hit;
      if (!scene_hit(scene, eye, dir_w, hit)) continue;
      const Vec3d p_world = eye + hit.t * dir_w;
      const Vec3d p_cam = world_to_cam(p_world - eye);
      Vec3d n_cam = world_to_cam(hit.normal);
      if (n_cam.dot(p_cam) > 0) n_cam = -n_cam;
      out.depth.values(y, x) = static_cast<float>(p_cam.z());
      out.depth.valid(y, x) = 1;
      out.normals.nx(y, x) = static_cast<float>(n_cam.x());
      out.normals.ny(y, x) = static_cast<float>(n_cam.y());
      out.normals.nz(y, x) = static_cast<float>(n_cam.z());
      out.normals.valid(y, x) = 1;
      const Vec3f albedo = hit.material->albedo_at(p_world);
      out.albedo.r(y, x) = albedo.x();
      out.albedo.g(y, x) = albedo.y();
      out.albedo.b(y, x) = albedo.z();
      out.mask.m(y, x) = 1;
    }
  });
  return out;
}

RenderedObject render_object(const SceneSpec& scene, const EnvMap& env, double rotation_deg,
                             int out_w, int out_h, const ShadowConfig& cfg, int threads,
                             const std::optional<Intrinsics>& intrinsics_override) {
  const double rem = std::remainder(rotation_deg, 45.0);
  if (std::abs(rem) > 1e-9) {
    throw std::invalid_argument("render_object: rotation must be a multiple of 45 degrees");
  }
  const Intrinsics intr = intrinsics_override ? *intrinsics_override
                                              : scale_intrinsics(scene.camera.intrinsics, out_w, out_h);
  RenderedObject obj = render_geometry(scene, intr, threads);
  const EnvMap rotated = rotate_envmap(env, rotation_deg);
  ShadowConfig shadow = cfg;
  shadow.ground_plane = obj.ground_plane_cam;
  obj.shading = reference_shading(obj.depth, obj.normals, intr, rotated, shadow, threads);
  obj.image = render_image(obj.albedo, obj.shading);
  return obj;
}

LinearImage crop_background(const EnvMap& env, double yaw_deg, double fov_deg,
                            int out_w, int out_h) {
  if (!(fov_deg > 0 && fov_deg < 180)) {
    throw std::invalid_argument("crop_background: fov must be in (0, 180)");
  }
  if (out_w < 1 || out_h < 1) throw std::invalid_argument("crop_background: bad size");
  const double focal = (out_w / 2.0) / std::tan(fov_deg * kPi / 360.0);
  const double yaw_rad = yaw_deg * kPi / 180.0;
  LinearImage out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const Vec3d dir_cam((x + 0.5 - out_w / 2.0) / focal, (y + 0.5 - out_h / 2.0) / focal, 1.0);
      const Vec3d dir_w = rotate_y(cam_to_world(dir_cam.normalized()), yaw_rad);
      const Vec3f radiance = env.sample(dir_w);
      out.r(y, x) = radiance.x();
      out.g(y, x) = radiance.y();
      out.b(y, x) = radiance.z();
    }
  }
  return out;
}

std::vector<Eigen::Vector2i> PlanarAnnotation::rasterize(int width, int height) const {
  std::vector<Eigen::Vector2i> pixels;
  if (polygons.empty()) return pixels;
  for (int y = 0; y < height; ++y) {
    const double py = (y + 0.5) / height;
    for (int x = 0; x < width; ++x) {
      const double px = (x + 0.5) / width;
      bool inside_any = false;
      for (const auto& poly : polygons) {
        if (poly.size() < 3) continue;
        bool inside = false;
        for (size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
          const auto& a = poly[i];
          const auto& b = poly[j];
          if ((a.y() > py) != (b.y() > py) &&
              px < (b.x() - a.x()) * (py - a.y()) / (b.y() - a.y()) + a.x()) {
            inside = !inside;
          }
        }
        if (inside) {
          inside_any = true;
          break;
        }
      }
      if (inside_any) pixels.emplace_back(x, y);
    }
  }
  return pixels;
}

PlanarAnnotation default_horizon_annotation() {
  PlanarAnnotation ann;
  ann.polygons.push_back({Eigen::Vector2d(0.05, 0.55), Eigen::Vector2d(0.95, 0.55),
                          Eigen::Vector2d(0.95, 0.90), Eigen::Vector2d(0.05, 0.90)});
  return ann;
}

std::map<std::string, PlanarAnnotation> load_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  std::map<std::string, PlanarAnnotation> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    PlanarAnnotation ann;
    for (const auto& poly : it.value()) {
      std::vector<Eigen::Vector2d> points;
      for (const auto& pt : poly) {
        points.emplace_back(pt[0].get<double>(), pt[1].get<double>());
      }
      ann.polygons.push_back(std::move(points));
    }
    out[it.key()] = std::move(ann);
  }
  return out;
}

Placement draw_placement(const Mask& fg_mask, int bg_w, int bg_h,
                         const PlanarAnnotation& annotation, Rng& rng,
                         double scale_min, double scale_max) {
  const auto pixels = annotation.rasterize(bg_w, bg_h);
  if (pixels.empty()) throw std::invalid_argument("draw_placement: empty annotation");

  Eigen::Index x0 = fg_mask.m.cols(), x1 = -1, y0 = fg_mask.m.rows(), y1 = -1;
  for (Eigen::Index y = 0; y < fg_mask.m.rows(); ++y) {
    for (Eigen::Index x = 0; x < fg_mask.m.cols(); ++x) {
      if (!fg_mask.m(y, x)) continue;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) throw std::invalid_argument("draw_placement: empty foreground mask");

  Placement p;
  p.crop_origin = {static_cast<int>(x0), static_cast<int>(y0)};
  p.crop_size = {static_cast<int>(x1 - x0 + 1), static_cast<int>(y1 - y0 + 1)};
  p.target = pixels[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(pixels.size()) - 1))];
  p.scale_fraction = rng.uniform(scale_min, scale_max);
  p.scale = p.scale_fraction * bg_h / p.crop_size.y();
  p.scaled_size = {std::max(1, static_cast<int>(std::lround(p.crop_size.x() * p.scale))),
                   std::max(1, static_cast<int>(std::lround(p.crop_size.y() * p.scale)))};
  if (p.scaled_size.minCoeff() < 8) {
    throw std::runtime_error("draw_placement: placement degenerate (scaled object < 8 px)");
  }
  p.corner = "bottom-left";
  p.paste = {p.target.x(), p.target.y() - (p.scaled_size.y() - 1)};
  return p;
}

PlacedObject place_object(const LinearImage& fg_image, const Mask& fg_mask,
                          const LinearImage& bg, const PlanarAnnotation& annotation,
                          std::uint64_t rng_seed, double scale_min, double scale_max) {
  if (fg_mask.m.rows() != fg_image.rows() || fg_mask.m.cols() != fg_image.cols()) {
    throw std::invalid_argument("place_object: mask does not align with foreground");
  }
  Rng rng(rng_seed);
  const int bg_w = static_cast<int>(bg.cols()), bg_h = static_cast<int>(bg.rows());
  const Placement rec = draw_placement(fg_mask, bg_w, bg_h, annotation, rng, scale_min, scale_max);

  Planef src_alpha = fg_mask.has_alpha() ? fg_mask.alpha : fg_mask.m.cast<float>().eval();
  Image3 premult(fg_image.rows(), fg_image.cols());
  for (int c = 0; c < 3; ++c) premult.channel(c) = fg_image.channel(c) * src_alpha;

  // Zero-padded bilinear sample restricted to the crop box.
  auto sample = [&](const Planef& plane, double sx, double sy) -> double {
    const int cx0 = rec.crop_origin.x(), cy0 = rec.crop_origin.y();
    const int cx1 = cx0 + rec.crop_size.x() - 1, cy1 = cy0 + rec.crop_size.y() - 1;
    const int ix = static_cast<int>(std::floor(sx));
    const int iy = static_cast<int>(std::floor(sy));
    const double fx = sx - ix, fy = sy - iy;
    double acc = 0;
    for (int dy = 0; dy <= 1; ++dy) {
      for (int dx = 0; dx <= 1; ++dx) {
        const int xx = ix + dx, yy = iy + dy;
        if (xx < cx0 || xx > cx1 || yy < cy0 || yy > cy1) continue;
        const double w = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy);
        acc += w * plane(yy, xx);
      }
    }
    return acc;
  };

  PlacedObject out;
  out.record = rec;
  out.composite = bg;
  Planef alpha = Planef::Zero(bg_h, bg_w);
  for (int y = std::max(0, rec.paste.y()); y < std::min(bg_h, rec.paste.y() + rec.scaled_size.y()); ++y) {
    for (int x = std::max(0, rec.paste.x()); x < std::min(bg_w, rec.paste.x() + rec.scaled_size.x()); ++x) {
      const double sx = (x - rec.paste.x() + 0.5) / rec.scale - 0.5 + rec.crop_origin.x();
      const double sy = (y - rec.paste.y() + 0.5) / rec.scale - 0.5 + rec.crop_origin.y();
      const double a = sample(src_alpha, sx, sy);
      if (a <= 0) continue;
      alpha(y, x) = static_cast<float>(a);
      for (int c = 0; c < 3; ++c) {
        const double fg_v = sample(premult.channel(c), sx, sy);
        out.composite.channel(c)(y, x) =
            static_cast<float>(fg_v + (1.0 - a) * bg.channel(c)(y, x));
      }
    }
  }
  out.mask = mask_from_alpha(alpha);
  return out;
}

namespace {

nlohmann::json config_to_json(const ForgeConfig& cfg) {
  return {{"image", {{"width", cfg.width}, {"height", cfg.height}}},
          {"fov_deg", cfg.fov_deg},
          {"split", cfg.split},
          {"scale_range", {cfg.scale_min, cfg.scale_max}},
          {"shadow",
           {{"samples_per_cell", cfg.shadow.samples_per_cell},
            {"ray_step", cfg.shadow.ray_step},
            {"max_ray_distance", cfg.shadow.max_ray_distance},
            {"shadow_bias", cfg.shadow.shadow_bias}}}};
}

}  // namespace

ForgeManifest build_tuples(const std::vector<SceneSpec>& scenes, const std::vector<ForgeEnv>& envs,
                           std::uint64_t seed, const std::string& out_dir, const ForgeConfig& cfg) {
  if (envs.size() < 2) throw std::invalid_argument("build_tuples: need at least 2 envs");
  if (scenes.empty()) throw std::invalid_argument("build_tuples: need at least 1 scene");

  const Rng root(seed);
  ForgeManifest manifest;
  manifest.seed = seed;
  manifest.config = cfg;
  for (const auto& env : envs) {
    manifest.env_ids.push_back(env.id);
    manifest.env_files[env.id] = "envs/" + env.id + ".pfm";
    manifest.env_conditions[env.id] = env.condition;
  }

  fs::create_directories(fs::path(out_dir) / "tuples");
  fs::create_directories(fs::path(out_dir) / "envs");
  for (const auto& env : envs) {
    write_pfm((fs::path(out_dir) / "envs" / (env.id + ".pfm")).string(), env.map.radiance);
  }

  // Select half the envs (at least one) without replacement.
  std::vector<int> env_order(envs.size());
  for (size_t i = 0; i < envs.size(); ++i) env_order[i] = static_cast<int>(i);
  Rng rng_env = root.child(0xE5);
  rng_env.shuffle(env_order);
  const size_t selected_count = std::max<size_t>(1, envs.size() / 2);
  std::vector<int> selected(env_order.begin(), env_order.begin() + static_cast<long>(selected_count));
  for (int ei : selected) manifest.selected_env_ids.push_back(envs[static_cast<size_t>(ei)].id);

  // Base geometry per scene at tuple resolution, shared by every placement draw.
  std::vector<RenderedObject> base_geometry;
  base_geometry.reserve(scenes.size());
  for (const auto& scene : scenes) {
    const Intrinsics intr = scale_intrinsics(scene.camera.intrinsics, cfg.width, cfg.height);
    RenderedObject geo = render_geometry(scene, intr, cfg.threads);
    if (geo.mask.count() == 0) {
      throw std::runtime_error("build_tuples: scene '" + scene.id + "' renders an empty mask");
    }
    base_geometry.push_back(std::move(geo));
  }

  const double angles[8] = {0, 45, 90, 135, 180, 225, 270, 315};
  long pair_index = 0;
  for (size_t si = 0; si < scenes.size(); ++si) {
    for (int ei : selected) {
      std::vector<int> angle_idx = {0, 1, 2, 3, 4, 5, 6, 7};
      Rng rng_ang = root.child(0xA0000000ull + static_cast<std::uint64_t>(pair_index));
      rng_ang.shuffle(angle_idx);

      for (int ai = 0; ai < 4; ++ai) {
        const double angle = angles[angle_idx[static_cast<size_t>(ai)]];
        Rng rng_tuple = root.child(0x70000000ull + static_cast<std::uint64_t>(pair_index) * 16 +
                                   static_cast<std::uint64_t>(ai));
        const ForgeEnv& env = envs[static_cast<size_t>(ei)];

        // Placement with a lower scale bound that keeps both scaled
        // dimensions at or above the 8 px degeneracy floor.
        const Mask& base_mask = base_geometry[si].mask;
        Eigen::Index bx0 = base_mask.m.cols(), bx1 = -1, by0 = base_mask.m.rows(), by1 = -1;
        for (Eigen::Index y = 0; y < base_mask.m.rows(); ++y) {
          for (Eigen::Index x = 0; x < base_mask.m.cols(); ++x) {
            if (!base_mask.m(y, x)) continue;
            bx0 = std::min(bx0, x);
            bx1 = std::max(bx1, x);
            by0 = std::min(by0, y);
            by1 = std::max(by1, y);
          }
        }
        const double crop_w = static_cast<double>(bx1 - bx0 + 1);
        const double crop_h = static_cast<double>(by1 - by0 + 1);
        double lo = std::max(cfg.scale_min, 8.5 / cfg.height);
        lo = std::max(lo, 8.5 * crop_h / (crop_w * cfg.height));
        if (lo > cfg.scale_max) {
          throw std::runtime_error("build_tuples: scene '" + scenes[si].id +
                                   "' too thin for the configured scale range");
        }
        const Placement placement = draw_placement(base_mask, cfg.width, cfg.height,
                                                   env.annotation, rng_tuple, lo, cfg.scale_max);

        // Source env for the unharmonized foreground: uniform among the others.
        int src_ei = rng_tuple.uniform_int(0, static_cast<int>(envs.size()) - 2);
        if (src_ei >= ei) ++src_ei;
        const ForgeEnv& src_env = envs[static_cast<size_t>(src_ei)];

        // Placement-adjusted intrinsics: the tuple rasters are re-rendered at
        // the placed scale/offset so depth, albedo and both shadings stay
        // exactly consistent with the composited pixels.
        const Intrinsics base_intr = base_geometry[si].intrinsics;
        Intrinsics intr;
        intr.fx = base_intr.fx * placement.scale;
        intr.fy = base_intr.fy * placement.scale;
        intr.cx = placement.paste.x() - 0.5 + placement.scale * (0.5 + base_intr.cx - placement.crop_origin.x());
        intr.cy = placement.paste.y() - 0.5 + placement.scale * (0.5 + base_intr.cy - placement.crop_origin.y());
        intr.width = cfg.width;
        intr.height = cfg.height;

        RenderedObject geo = render_geometry(scenes[si], intr, cfg.threads);
        if (geo.mask.count() == 0) {
          throw std::runtime_error("build_tuples: placed object left the frame in scene '" +
                                   scenes[si].id + "'");
        }
        ShadowConfig shadow = cfg.shadow;
        shadow.ground_plane = geo.ground_plane_cam;

        const EnvMap env_rot = rotate_envmap(env.map, angle);
        const EnvMap src_rot = rotate_envmap(src_env.map, angle);
        const Shading shading_gt =
            reference_shading(geo.depth, geo.normals, intr, env_rot, shadow, cfg.threads);
        const Shading shading_src =
            reference_shading(geo.depth, geo.normals, intr, src_rot, shadow, cfg.threads);
        const LinearImage image_gt = render_image(geo.albedo, shading_gt);
        const LinearImage image_src = render_image(geo.albedo, shading_src);

        const LinearImage bg = crop_background(env_rot, 0.0, cfg.fov_deg, cfg.width, cfg.height);
        const LinearImage composite_gt = composite(image_gt, bg, geo.mask);
        const LinearImage composite_in = composite(image_src, bg, geo.mask);

        TupleRecord rec;
        char angle_tag[16];
        std::snprintf(angle_tag, sizeof(angle_tag), "r%03d", static_cast<int>(angle));
        rec.id = scenes[si].id + "_" + env.id + "_" + angle_tag;
        rec.dir = "tuples/" + rec.id;
        rec.scene_id = scenes[si].id;
        rec.env_id = env.id;
        rec.src_env_id = src_env.id;
        rec.rotation_deg = angle;
        rec.condition = env.condition;
        rec.split = cfg.split;
        rec.placement = placement;

        const fs::path dir = fs::path(out_dir) / "tuples" / rec.id;
        fs::create_directories(dir);
        save_display_png((dir / "composite.png").string(), composite_in);
        save_display_png((dir / "gt.png").string(), composite_gt);
        write_png_gray8((dir / "mask.png").string(), geo.mask.m.cast<float>());
        save_display_png((dir / "bg.png").string(), bg);
        write_pfm((dir / "bg.pfm").string(), bg);  // unclipped linear crop for estimation
        write_pfm((dir / "depth.pfm").string(), geo.depth.values);
        write_pfm((dir / "albedo.pfm").string(), geo.albedo);
        write_pfm((dir / "shading.pfm").string(), shading_gt);
        write_pfm((dir / "src_shading.pfm").string(), shading_src);

        nlohmann::json meta;
        meta["id"] = rec.id;
        meta["scene_id"] = rec.scene_id;
        meta["env_id"] = rec.env_id;
        meta["src_env_id"] = rec.src_env_id;
        meta["rotation_deg"] = rec.rotation_deg;
        meta["condition"] = rec.condition;
        meta["split"] = rec.split;
        meta["intrinsics"] = {{"fx", intr.fx}, {"fy", intr.fy}, {"cx", intr.cx},
                              {"cy", intr.cy}, {"width", intr.width}, {"height", intr.height}};
        meta["ground_plane"] = {geo.ground_plane_cam[0], geo.ground_plane_cam[1],
                                geo.ground_plane_cam[2], geo.ground_plane_cam[3]};
        meta["placement"] = placement_to_json(placement);
        std::ofstream meta_out(dir / "meta.json", std::ios::trunc);
        if (!meta_out) throw std::runtime_error((dir / "meta.json").string() + ": cannot write");
        meta_out << meta.dump(2) << "\n";

        manifest.tuples.push_back(std::move(rec));
      }
      ++pair_index;
    }
  }

  nlohmann::json j;
  j["seed"] = seed;
  j["config"] = config_to_json(cfg);
  nlohmann::json env_list = nlohmann::json::array();
  for (const auto& env : envs) {
    env_list.push_back({{"id", env.id}, {"file", "envs/" + env.id + ".pfm"}, {"condition", env.condition}});
  }
  j["envs"] = std::move(env_list);
  j["selected_env_ids"] = manifest.selected_env_ids;
  nlohmann::json tuple_list = nlohmann::json::array();
  for (const auto& rec : manifest.tuples) {
    tuple_list.push_back({{"id", rec.id},
                          {"dir", rec.dir},
                          {"scene_id", rec.scene_id},
                          {"env_id", rec.env_id},
                          {"src_env_id", rec.src_env_id},
                          {"rotation_deg", rec.rotation_deg},
                          {"condition", rec.condition},
                          {"split", rec.split},
                          {"placement", placement_to_json(rec.placement)}});
  }
  j["tuples"] = std::move(tuple_list);
  j["count"] = manifest.tuples.size();
  std::ofstream out(fs::path(out_dir) / "manifest.json", std::ios::trunc);
  if (!out) throw std::runtime_error(out_dir + "/manifest.json: cannot write");
  out << j.dump(2) << "\n";
  return manifest;
}

ForgeManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  ForgeManifest m;
  m.seed = j.at("seed").get<std::uint64_t>();
  const auto& cj = j.at("config");
  m.config.width = cj.at("image").at("width").get<int>();
  m.config.height = cj.at("image").at("height").get<int>();
  m.config.fov_deg = cj.at("fov_deg").get<double>();
  m.config.split = cj.at("split").get<std::string>();
  m.config.scale_min = cj.at("scale_range")[0].get<double>();
  m.config.scale_max = cj.at("scale_range")[1].get<double>();
  for (const auto& env : j.at("envs")) {
    m.env_ids.push_back(env.at("id").get<std::string>());
    m.env_files[env.at("id").get<std::string>()] = env.at("file").get<std::string>();
    m.env_conditions[env.at("id").get<std::string>()] = env.value("condition", "custom");
  }
  if (j.contains("selected_env_ids")) {
    m.selected_env_ids = j.at("selected_env_ids").get<std::vector<std::string>>();
  }
  for (const auto& t : j.at("tuples")) {
    TupleRecord rec;
    rec.id = t.at("id").get<std::string>();
    rec.dir = t.at("dir").get<std::string>();
    rec.scene_id = t.at("scene_id").get<std::string>();
    rec.env_id = t.at("env_id").get<std::string>();
    rec.src_env_id = t.at("src_env_id").get<std::string>();
    rec.rotation_deg = t.at("rotation_deg").get<double>();
    rec.condition = t.at("condition").get<std::string>();
    rec.split = t.at("split").get<std::string>();
    rec.placement = placement_from_json(t.at("placement"));
    m.tuples.push_back(std::move(rec));
  }
  return m;
}

SceneSpec random_scene(Rng& rng, const std::string& id) {
  SceneSpec scene;
  scene.id = id;
  scene.ground.color_a = Vec3f(0.5f, 0.5f, 0.5f);

  auto random_material = [&rng]() {
    Material mat;
    auto channel = [&rng] { return static_cast<float>(rng.uniform(0.15, 0.9)); };
    mat.color_a = Vec3f(channel(), channel(), channel());
    if (rng.next_double() < 0.35) {
      mat.color_b = Vec3f(channel(), channel(), channel());
      mat.checker_size = static_cast<float>(rng.uniform(0.08, 0.2));
    }
    return mat;
  };

  auto random_primitive = [&](bool secondary) {
    Primitive prim;
    const double roll = rng.next_double();
    const double shrink = secondary ? 0.65 : 1.0;
    if (roll < 1.0 / 3.0) {
      prim.shape = Primitive::Shape::Sphere;
      prim.size = Vec3d::Constant(rng.uniform(0.25, 0.42) * shrink);
    } else if (roll < 2.0 / 3.0) {
      prim.shape = Primitive::Shape::Box;
      prim.size = Vec3d(rng.uniform(0.18, 0.4), rng.uniform(0.2, 0.45), rng.uniform(0.18, 0.4)) * shrink;
      prim.yaw_deg = rng.uniform(0.0, 90.0);
    } else {
      prim.shape = Primitive::Shape::Capsule;
      const double radius = rng.uniform(0.14, 0.24) * shrink;
      prim.size = Vec3d(radius, std::min(rng.uniform(0.12, 0.3) * shrink, 1.8 * radius), 0.0);
    }
    prim.position = Vec3d(rng.uniform(-0.12, 0.12), 0.0, rng.uniform(-0.12, 0.12));
    if (secondary) {
      prim.position.z() += (rng.next_double() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.55, 0.85);
    }
    prim.material = random_material();
    return prim;
  };

  scene.primitives.push_back(random_primitive(false));
  if (rng.next_double() < 0.35) scene.primitives.push_back(random_primitive(true));

  const double fov_deg = rng.uniform(45.0, 60.0);
  Intrinsics intr;
  intr.width = 640;
  intr.height = 480;
  intr.fx = intr.fy = (intr.width / 2.0) / std::tan(fov_deg * kPi / 360.0);
  intr.cx = intr.width / 2.0;
  intr.cy = intr.height / 2.0;
  scene.camera.intrinsics = intr;
  scene.camera.eye = Vec3d(-rng.uniform(1.9, 2.6), rng.uniform(0.45, 0.95), rng.uniform(-0.15, 0.15));
  return scene;
}

ForgeEnv random_sky(Rng& rng, const std::string& id, int env_w, int env_h) {
  ForgeEnv env;
  env.id = id;

  SkyParams params;
  const double roll = rng.next_double();
  double sun_energy = 0.0;  // integral of the disc over the sphere
  if (roll < 0.40) {
    env.condition = "sunny";
    // Sky appearance correlates with the (possibly out-of-frame) sun, as in
    // real skies: clearer skies are darker-blue with a stronger sun, and
    // lower suns tint the ambient warm. Background crops stay informative
    // about illumination they cannot see directly.
    const double clarity = rng.next_double();
    const double elevation_deg = rng.uniform(20.0, 65.0);
    const double elevation = elevation_deg * kPi / 180.0;
    const double warmth = (65.0 - elevation_deg) / 45.0;  // 0 high sun .. 1 low sun
    const double zen = 0.16 - 0.06 * clarity + 0.01 * rng.next_double();
    params.ambient_zenith = Vec3d(0.85 + 0.1 * warmth, 0.95, 1.20 - 0.15 * warmth) * zen;
    params.ambient_horizon = Vec3d(1.05 + 0.25 * warmth, 1.0, 0.95 - 0.2 * warmth) * zen *
                             (1.5 + 0.6 * clarity);
    params.ambient_ground = params.ambient_horizon * 0.35;
    params.sun_angular_radius = rng.uniform(0.10, 0.18);
    sun_energy = 0.2 + 0.42 * clarity + 0.04 * rng.next_double();
    const double azimuth = rng.uniform(0.0, 2.0 * kPi);
    params.sun_dir = dir_from_spherical(kPi / 2 - elevation, azimuth);
    params.sun_radiance = Vec3d(1.0, 0.93 - 0.2 * warmth, 0.82 - 0.3 * warmth);
    params.horizon_modulation_amp = 0.08 + 0.2 * clarity;
    params.horizon_modulation_phase = azimuth;
  } else if (roll < 0.60) {
    env.condition = "sunrise_sunset";
    const double clarity = rng.next_double();
    const double zen = 0.07 - 0.035 * clarity + 0.005 * rng.next_double();
    params.ambient_zenith = Vec3d(0.8, 0.8, 1.05) * zen;
    params.ambient_horizon = Vec3d(1.3, 0.9, 0.7) * zen * (2.0 + 1.0 * clarity);
    params.ambient_ground = params.ambient_horizon * 0.3;
    params.sun_angular_radius = rng.uniform(0.08, 0.14);
    sun_energy = 0.08 + 0.25 * clarity + 0.02 * rng.next_double();
    const double elevation = rng.uniform(3.0, 14.0) * kPi / 180.0;
    const double azimuth = rng.uniform(0.0, 2.0 * kPi);
    params.sun_dir = dir_from_spherical(kPi / 2 - elevation, azimuth);
    params.sun_radiance = Vec3d(1.0, 0.6, 0.35);
    params.horizon_modulation_amp = 0.2 + 0.3 * clarity;
    params.horizon_modulation_phase = azimuth;
  } else if (roll < 0.90) {
    env.condition = "cloudy";
    const double zen = rng.uniform(0.15, 0.30);
    params.ambient_zenith = Vec3d(1.0, 1.0, 1.02) * zen;
    params.ambient_horizon = params.ambient_zenith * rng.uniform(1.2, 1.6);
    params.ambient_ground = params.ambient_horizon * 0.4;
    params.horizon_modulation_amp = rng.uniform(0.15, 0.45);
    params.horizon_modulation_phase = rng.uniform(0.0, 2.0 * kPi);
  } else {
    env.condition = "night";
    const double clarity = rng.next_double();
    const double zen = 0.011 - 0.006 * clarity + 0.001 * rng.next_double();
    params.ambient_zenith = Vec3d(0.8, 0.85, 1.1) * zen;
    params.ambient_horizon = params.ambient_zenith * rng.uniform(1.3, 1.9);
    params.ambient_ground = params.ambient_horizon * 0.4;
    params.sun_angular_radius = rng.uniform(0.05, 0.10);
    sun_energy = 0.003 + 0.011 * clarity;  // moon
    const double elevation = rng.uniform(15.0, 60.0) * kPi / 180.0;
    const double azimuth = rng.uniform(0.0, 2.0 * kPi);
    params.sun_dir = dir_from_spherical(kPi / 2 - elevation, azimuth);
    params.sun_radiance = Vec3d(0.9, 0.95, 1.1);
    params.horizon_modulation_amp = 0.1 + 0.2 * clarity;
    params.horizon_modulation_phase = azimuth;
  }
  if (sun_energy > 0) {
    const double cos_outer = std::cos(params.sun_angular_radius);
    const double cos_inner = std::cos(0.8 * params.sun_angular_radius);
    const double omega_eff = 2.0 * kPi * ((1.0 - cos_inner) + 0.5 * (cos_inner - cos_outer));
    params.sun_radiance *= sun_energy / omega_eff;
  } else {
    params.sun_radiance = Vec3d::Zero();
  }
  env.map = procedural_sky(params, env_w, env_h);
  env.annotation = default_horizon_annotation();
  return env;
}

}  // namespace shadeharm
