#include "shadeharm/shading.hpp"

#include "shadeharm/image_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

namespace shadeharm {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct CellSample {
  Vec3d dir_cam;
  double weight;        // solid angle carried by the sample
  double plane_descent; // ground-plane normal . dir, precomputed
};

// Stratified directions for one partition cell, one sample at the midpoint of
// each stratum of the cell's area parametrization. Midpoints keep the
// composed shading an unbiased product quadrature (jittered patterns were
// tried and cost 1-2% on the uniform-sky furnace at 8 samples); samples == 1
// degenerates to the exact cell center, which the pixel-grid refinement
// identity relies on.
void cell_samples(const BasisPartition& part, int k, int samples,
                  const std::optional<Eigen::Vector4d>& plane, std::vector<CellSample>& out) {
  const int band = k / part.sectors;
  const int sector = k % part.sectors;
  const double phi0 = kTwoPi * sector / part.sectors;
  const double dphi = kTwoPi / part.sectors;

  int sy = 1;
  for (int d = 1; d * d <= samples; ++d) {
    if (samples % d == 0) sy = d;
  }
  int sx = samples / sy;
  if (sx < sy) std::swap(sx, sy);

  for (int jy = 0; jy < sy; ++jy) {
    for (int jx = 0; jx < sx; ++jx) {
      const double fx = (jx + 0.5) / sx;
      const double fy = (jy + 0.5) / sy;
      const double phi = phi0 + dphi * fx;
      double theta, weight;
      if (part.scheme == BasisPartition::Scheme::EqualArea) {
        const double c_hi = 1.0 - 2.0 * band / part.bands;
        const double c_lo = 1.0 - 2.0 * (band + 1) / part.bands;
        const double ct = c_hi + (c_lo - c_hi) * fy;
        theta = std::acos(std::clamp(ct, -1.0, 1.0));
        weight = part.cell_solid_angle(k) / samples;
      } else {
        const double t0 = kPi * band / part.bands;
        const double dt = kPi / part.bands;
        theta = t0 + dt * fy;
        const double strat_lo = t0 + dt * jy / sy;
        const double strat_hi = t0 + dt * (jy + 1) / sy;
        weight = (dphi / sx) * (std::cos(strat_lo) - std::cos(strat_hi));
      }
      CellSample s;
      s.dir_cam = world_to_cam(dir_from_spherical(theta, phi));
      s.weight = weight;
      s.plane_descent = plane ? plane->head<3>().dot(s.dir_cam) : 1.0;
      out.push_back(s);
    }
  }
}

// Heightfield occlusion tracer over a depth map in camera space.
struct Tracer {
  const Planef* depth = nullptr;
  const Planeb* valid = nullptr;
  Intrinsics intr;
  double step = 0, bias = 0, max_dist = 0;
  std::optional<Eigen::Vector4d> plane;
  float min_depth = 0;

  bool plane_blocks(const Vec3d& origin_cam, double descent) const {
    if (!plane) return false;
    if (descent < -1e-12) return true;
    if (descent <= 1e-12) {
      const double s0 = plane->head<3>().dot(origin_cam) + plane->w();
      return s0 < -1e-9;
    }
    return false;
  }

  bool heightfield_blocks(const Vec3d& origin, const Vec3d& dir) const {
    const Eigen::Index hgt = depth->rows(), wid = depth->cols();
    bool was_inside = false;
    for (double t = step; t <= max_dist; t += step) {
      const Vec3d x = origin + t * dir;
      if (x.z() <= 1e-6) break;
      if (dir.z() <= 0.0 && x.z() < min_depth) break;  // in front of every surface
      const double u = intr.fx * x.x() / x.z() + intr.cx;
      const double v = intr.fy * x.y() / x.z() + intr.cy;
      const int u0 = static_cast<int>(std::floor(u));
      const int v0 = static_cast<int>(std::floor(v));
      if (u0 < 0 || v0 < 0 || u0 + 1 >= wid || v0 + 1 >= hgt) {
        if (was_inside) break;  // projected path is a straight 2D line
        continue;
      }
      was_inside = true;
      if (!(*valid)(v0, u0) || !(*valid)(v0, u0 + 1) || !(*valid)(v0 + 1, u0) ||
          !(*valid)(v0 + 1, u0 + 1)) {
        continue;  // hole in the heightfield, nothing to occlude here
      }
      const double fu = u - u0, fv = v - v0;
      const double top = (*depth)(v0, u0) * (1.0 - fu) + (*depth)(v0, u0 + 1) * fu;
      const double bot = (*depth)(v0 + 1, u0) * (1.0 - fu) + (*depth)(v0 + 1, u0 + 1) * fu;
      const double d = top * (1.0 - fv) + bot * fv;
      if (x.z() > d * (1.0 + 1e-5)) return true;
    }
    return false;
  }

  // 1 iff unoccluded.
  bool visible(const Vec3d& p, const Vec3d& n, const Vec3d& dir, double plane_descent) const {
    const Vec3d origin = p + bias * n;
    if (plane_blocks(origin, plane_descent)) return false;
    return !heightfield_blocks(origin, dir);
  }
};

double median_adjacent_spacing(const PointMap& pm) {
  std::vector<float> gaps;
  gaps.reserve(static_cast<size_t>(pm.rows()) * static_cast<size_t>(pm.cols()) / 2);
  for (Eigen::Index v = 0; v < pm.rows(); ++v) {
    for (Eigen::Index u = 0; u + 1 < pm.cols(); ++u) {
      if (pm.valid(v, u) && pm.valid(v, u + 1)) {
        gaps.push_back(static_cast<float>((pm.point(v, u) - pm.point(v, u + 1)).norm()));
      }
    }
  }
  for (Eigen::Index v = 0; v + 1 < pm.rows(); ++v) {
    for (Eigen::Index u = 0; u < pm.cols(); ++u) {
      if (pm.valid(v, u) && pm.valid(v + 1, u)) {
        gaps.push_back(static_cast<float>((pm.point(v, u) - pm.point(v + 1, u)).norm()));
      }
    }
  }
  if (gaps.empty()) return 0.0;
  const size_t mid = gaps.size() / 2;
  std::nth_element(gaps.begin(), gaps.begin() + static_cast<long>(mid), gaps.end());
  return gaps[mid];
}

Tracer make_tracer(const DepthMap& depth, const Intrinsics& intr, const ShadowConfig& resolved) {
  Tracer tr;
  tr.depth = &depth.values;
  tr.valid = &depth.valid;
  tr.intr = intr;
  tr.step = resolved.ray_step;
  tr.bias = resolved.shadow_bias;
  tr.max_dist = resolved.max_ray_distance;
  tr.plane = resolved.ground_plane;
  float min_d = std::numeric_limits<float>::max();
  for (Eigen::Index i = 0; i < depth.values.size(); ++i) {
    if (depth.valid.data()[i]) min_d = std::min(min_d, depth.values.data()[i]);
  }
  tr.min_depth = min_d == std::numeric_limits<float>::max() ? 0.0f : min_d;
  return tr;
}

void check_aligned(const DepthMap& depth, const NormalMap& normals, const Intrinsics& intr) {
  intr.validate();
  if (depth.rows() != intr.height || depth.cols() != intr.width) {
    throw std::invalid_argument("shading: depth size does not match intrinsics");
  }
  if (normals.rows() != depth.rows() || normals.cols() != depth.cols()) {
    throw std::invalid_argument("shading: normals size does not match depth");
  }
}

bool any_valid_geometry(const DepthMap& depth, const NormalMap& normals) {
  for (Eigen::Index i = 0; i < depth.valid.size(); ++i) {
    if (depth.valid.data()[i] && normals.valid.data()[i]) return true;
  }
  return false;
}

}  // namespace

void ShadowConfig::validate() const {
  if (samples_per_cell < 1) throw std::invalid_argument("ShadowConfig: samples_per_cell must be >= 1");
  if (ray_step < 0 || max_ray_distance < 0 || shadow_bias < 0) {
    throw std::invalid_argument("ShadowConfig: lengths must be >= 0 (0 = auto)");
  }
  if (ground_plane) {
    const double n = ground_plane->head<3>().norm();
    if (std::abs(n - 1.0) > 1e-6) {
      throw std::invalid_argument("ShadowConfig: ground plane normal must be unit length");
    }
  }
}

ShadowConfig resolve_shadow_config(const ShadowConfig& cfg, const DepthMap& depth,
                                   const Intrinsics& intr) {
  cfg.validate();
  ShadowConfig out = cfg;
  const PointMap pm = unproject(depth, intr);
  if (out.ray_step <= 0) {
    const double spacing = median_adjacent_spacing(pm);
    out.ray_step = spacing > 0 ? 0.5 * spacing : 1e-3;
  }
  if (out.shadow_bias <= 0) out.shadow_bias = 2.0 * out.ray_step;
  if (out.max_ray_distance <= 0) {
    Vec3d lo = Vec3d::Constant(std::numeric_limits<double>::max());
    Vec3d hi = Vec3d::Constant(std::numeric_limits<double>::lowest());
    bool any = false;
    for (Eigen::Index v = 0; v < pm.rows(); ++v) {
      for (Eigen::Index u = 0; u < pm.cols(); ++u) {
        if (!pm.valid(v, u)) continue;
        const Vec3d p = pm.point(v, u);
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
        any = true;
      }
    }
    const double diag = any ? (hi - lo).norm() : 0.0;
    out.max_ray_distance = diag > 0 ? diag : 100.0 * out.ray_step;
  }
  return out;
}

int visibility(const PointMap& points, const NormalMap& normals, const Intrinsics& intr,
               int pixel_y, int pixel_x, const Vec3d& dir_cam, const ShadowConfig& cfg) {
  if (pixel_y < 0 || pixel_y >= points.rows() || pixel_x < 0 || pixel_x >= points.cols()) {
    throw std::invalid_argument("visibility: pixel out of range");
  }
  if (!points.valid(pixel_y, pixel_x) || !normals.valid(pixel_y, pixel_x)) return 0;

  DepthMap depth;
  depth.values = points.z.cast<float>();
  depth.valid = points.valid;
  const ShadowConfig resolved = resolve_shadow_config(cfg, depth, intr);
  const Tracer tr = make_tracer(depth, intr, resolved);
  const double descent =
      resolved.ground_plane ? resolved.ground_plane->head<3>().dot(dir_cam) : 1.0;
  return tr.visible(points.point(pixel_y, pixel_x), normals.normal(pixel_y, pixel_x), dir_cam,
                    descent)
             ? 1
             : 0;
}

ShadingBases shading_bases(const DepthMap& depth, const NormalMap& normals,
                           const Intrinsics& intr, const BasisPartition& part,
                           const ShadowConfig& cfg, int threads) {
  check_aligned(depth, normals, intr);
  if (!any_valid_geometry(depth, normals)) {
    throw std::invalid_argument("shading_bases: no valid geometry");
  }
  const ShadowConfig resolved = resolve_shadow_config(cfg, depth, intr);
  const Tracer tracer = make_tracer(depth, intr, resolved);
  const PointMap pm = unproject(depth, intr);

  const int K = part.cell_count();
  std::vector<std::vector<CellSample>> samples(static_cast<size_t>(K));
  for (int k = 0; k < K; ++k) {
    samples[static_cast<size_t>(k)].reserve(static_cast<size_t>(resolved.samples_per_cell));
    cell_samples(part, k, resolved.samples_per_cell, resolved.ground_plane,
                 samples[static_cast<size_t>(k)]);
  }

  ShadingBases bases;
  bases.partition = part;
  bases.geometry_hash = geometry_hash(depth, intr);
  bases.sb.assign(static_cast<size_t>(K), Planef::Zero(depth.rows(), depth.cols()));

  parallel_for(0, depth.rows(), threads, [&](Eigen::Index v) {
    for (Eigen::Index u = 0; u < depth.cols(); ++u) {
      if (!depth.is_valid(v, u) || !normals.valid(v, u)) continue;
      const Vec3d p = pm.point(v, u);
      const Vec3d n = normals.normal(v, u);
      for (int k = 0; k < K; ++k) {
        double acc = 0.0;
        for (const CellSample& s : samples[static_cast<size_t>(k)]) {
          const double cosine = n.dot(s.dir_cam);
          if (cosine <= 0.0) continue;
          if (!tracer.visible(p, n, s.dir_cam, s.plane_descent)) continue;
          acc += cosine * s.weight;
        }
        bases.sb[static_cast<size_t>(k)](v, u) =
            static_cast<float>(acc / part.cell_solid_angle(k));
      }
    }
  });
  return bases;
}

Shading compose_shading(const ShadingBases& bases, const IlluminationDescriptor& descriptor) {
  if (bases.K() != descriptor.K()) {
    throw std::invalid_argument("compose_shading: basis count " + std::to_string(bases.K()) +
                                " != descriptor K " + std::to_string(descriptor.K()));
  }
  if (!(bases.partition == descriptor.partition)) {
    throw std::invalid_argument("compose_shading: partition mismatch (" + bases.partition.id() +
                                " vs " + descriptor.partition.id() + ")");
  }
  const Eigen::Index hgt = bases.rows(), wid = bases.cols();
  Shading out(hgt, wid);
  Planed acc(hgt, wid);
  for (int c = 0; c < 3; ++c) {
    acc.setZero();
    for (int k = 0; k < bases.K(); ++k) {
      acc += descriptor.l(c, k) * bases.sb[static_cast<size_t>(k)].cast<double>();
    }
    out.channel(c) = acc.cast<float>();
  }
  return out;
}

Shading reference_shading(const DepthMap& depth, const NormalMap& normals,
                          const Intrinsics& intr, const EnvMap& env,
                          const ShadowConfig& cfg, int threads) {
  check_aligned(depth, normals, intr);
  const ShadowConfig resolved = resolve_shadow_config(cfg, depth, intr);
  const Tracer tracer = make_tracer(depth, intr, resolved);
  const PointMap pm = unproject(depth, intr);

  struct EnvSample {
    Vec3d dir_cam;
    double descent;
    double wr, wg, wb;  // radiance * solid angle
  };
  const int ew = static_cast<int>(env.width()), eh = static_cast<int>(env.height());
  std::vector<EnvSample> lights;
  lights.reserve(static_cast<size_t>(ew) * static_cast<size_t>(eh));
  for (int v = 0; v < eh; ++v) {
    const double omega = pixel_solid_angle(v, ew, eh);
    for (int u = 0; u < ew; ++u) {
      EnvSample s;
      s.dir_cam = world_to_cam(dir_from_pixel(u, v, ew, eh));
      s.descent = resolved.ground_plane ? resolved.ground_plane->head<3>().dot(s.dir_cam) : 1.0;
      s.wr = env.radiance.r(v, u) * omega;
      s.wg = env.radiance.g(v, u) * omega;
      s.wb = env.radiance.b(v, u) * omega;
      lights.push_back(s);
    }
  }

  Shading out(depth.rows(), depth.cols());
  parallel_for(0, depth.rows(), threads, [&](Eigen::Index v) {
    for (Eigen::Index u = 0; u < depth.cols(); ++u) {
      if (!depth.is_valid(v, u) || !normals.valid(v, u)) continue;
      const Vec3d p = pm.point(v, u);
      const Vec3d n = normals.normal(v, u);
      double ar = 0, ag = 0, ab = 0;
      for (const EnvSample& s : lights) {
        const double cosine = n.dot(s.dir_cam);
        if (cosine <= 0.0) continue;
        if (s.wr == 0.0 && s.wg == 0.0 && s.wb == 0.0) continue;
        if (!tracer.visible(p, n, s.dir_cam, s.descent)) continue;
        ar += s.wr * cosine;
        ag += s.wg * cosine;
        ab += s.wb * cosine;
      }
      out.r(v, u) = static_cast<float>(ar);
      out.g(v, u) = static_cast<float>(ag);
      out.b(v, u) = static_cast<float>(ab);
    }
  });
  return out;
}

std::uint64_t geometry_hash(const DepthMap& depth, const Intrinsics& intr) {
  std::uint64_t h = fnv1a64(depth.values.data(), static_cast<size_t>(depth.values.size()) * sizeof(float));
  h = fnv1a64(depth.valid.data(), static_cast<size_t>(depth.valid.size()), h);
  const double fields[4] = {intr.fx, intr.fy, intr.cx, intr.cy};
  return fnv1a64(fields, sizeof(fields), h);
}

void save_bases(const std::string& dir, const ShadingBases& bases) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json meta;
  meta["K"] = bases.K();
  meta["H"] = static_cast<int>(bases.rows());
  meta["W"] = static_cast<int>(bases.cols());
  meta["partition"] = {
      {"scheme",
       bases.partition.scheme == BasisPartition::Scheme::EqualArea ? "equal_area" : "pixel_grid"},
      {"rings", bases.partition.bands},
      {"sectors", bases.partition.sectors}};
  char hash_hex[32];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(bases.geometry_hash));
  meta["geometry_hash"] = hash_hex;
  std::ofstream out(fs::path(dir) / "meta.json", std::ios::trunc);
  if (!out) throw std::runtime_error(dir + "/meta.json: cannot open for writing");
  out << meta.dump(2) << "\n";
  for (int k = 0; k < bases.K(); ++k) {
    write_pfm((fs::path(dir) / ("SB_" + std::to_string(k) + ".pfm")).string(),
              bases.sb[static_cast<size_t>(k)]);
  }
}

ShadingBases load_bases(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "meta.json");
  if (!in) throw std::runtime_error(dir + "/meta.json: cannot open for reading");
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(dir + "/meta.json: " + e.what());
  }
  ShadingBases bases;
  const auto& pj = meta.at("partition");
  const std::string scheme = pj.value("scheme", "equal_area");
  bases.partition.scheme = scheme == "pixel_grid" ? BasisPartition::Scheme::PixelGrid
                                                  : BasisPartition::Scheme::EqualArea;
  bases.partition.bands = pj.at("rings").get<int>();
  bases.partition.sectors = pj.at("sectors").get<int>();
  const int K = meta.at("K").get<int>();
  if (K != bases.partition.cell_count()) {
    throw std::runtime_error(dir + ": meta K does not match partition");
  }
  const int hgt = meta.at("H").get<int>(), wid = meta.at("W").get<int>();
  if (meta.contains("geometry_hash")) {
    bases.geometry_hash =
        std::stoull(meta.at("geometry_hash").get<std::string>(), nullptr, 16);
  }
  bases.sb.reserve(static_cast<size_t>(K));
  for (int k = 0; k < K; ++k) {
    Planef plane = read_pfm_gray((fs::path(dir) / ("SB_" + std::to_string(k) + ".pfm")).string());
    if (plane.rows() != hgt || plane.cols() != wid) {
      throw std::runtime_error(dir + ": basis " + std::to_string(k) + " size mismatch");
    }
    bases.sb.push_back(std::move(plane));
  }
  return bases;
}

}  // namespace shadeharm
