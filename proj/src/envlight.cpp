#include "shadeharm/envlight.hpp"

#include "shadeharm/image_io.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>

namespace shadeharm {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}  // namespace

void EnvMap::validate() const {
  for (int c = 0; c < 3; ++c) {
    const Planef& plane = radiance.channel(c);
    for (Eigen::Index i = 0; i < plane.size(); ++i) {
      const float v = plane.data()[i];
      if (!std::isfinite(v) || v < 0.0f) {
        throw std::invalid_argument("EnvMap: radiance must be finite and >= 0");
      }
    }
  }
}

Vec3f EnvMap::sample(const Vec3d& dir) const {
  const Eigen::Vector2d uv = pixel_from_dir(dir, static_cast<int>(width()), static_cast<int>(height()));
  const int wid = static_cast<int>(width()), hgt = static_cast<int>(height());
  const double u = uv.x(), v = uv.y();
  const int u0 = static_cast<int>(std::floor(u));
  const int v0c = static_cast<int>(std::floor(v));
  const double fu = u - u0, fv = v - v0c;
  auto wrap_u = [&](int uu) { return ((uu % wid) + wid) % wid; };
  auto clamp_v = [&](int vv) { return std::min(std::max(vv, 0), hgt - 1); };
  const int ua = wrap_u(u0), ub = wrap_u(u0 + 1);
  const int va = clamp_v(v0c), vb = clamp_v(v0c + 1);
  Vec3f out;
  for (int c = 0; c < 3; ++c) {
    const Planef& p = radiance.channel(c);
    const double top = p(va, ua) * (1.0 - fu) + p(va, ub) * fu;
    const double bot = p(vb, ua) * (1.0 - fu) + p(vb, ub) * fu;
    out[c] = static_cast<float>(top * (1.0 - fv) + bot * fv);
  }
  return out;
}

Vec3d dir_from_spherical(double theta, double phi) {
  const double st = std::sin(theta);
  return {st * std::cos(phi), std::cos(theta), st * std::sin(phi)};
}

Vec3d dir_from_pixel(int u, int v, int width, int height) {
  const double theta = kPi * (v + 0.5) / height;
  const double phi = kTwoPi * (u + 0.5) / width;
  return dir_from_spherical(theta, phi);
}

Eigen::Vector2d pixel_from_dir(const Vec3d& dir, int width, int height) {
  const double theta = std::acos(std::clamp(dir.y(), -1.0, 1.0));
  double phi = std::atan2(dir.z(), dir.x());
  if (phi < 0) phi += kTwoPi;
  return {phi / kTwoPi * width - 0.5, theta / kPi * height - 0.5};
}

double pixel_solid_angle(int v, int width, int height) {
  if (v < 0 || v >= height) throw std::invalid_argument("pixel_solid_angle: row out of range");
  return (kTwoPi / width) * (std::cos(kPi * v / height) - std::cos(kPi * (v + 1) / height));
}

std::string BasisPartition::id() const {
  const char* tag = scheme == Scheme::EqualArea ? "eqarea" : "pixgrid";
  return std::string(tag) + ":" + std::to_string(bands) + "x" + std::to_string(sectors);
}

int BasisPartition::cell_of_direction(const Vec3d& dir) const {
  double phi = std::atan2(dir.z(), dir.x());
  if (phi < 0) phi += kTwoPi;
  int sector = static_cast<int>(phi / kTwoPi * sectors);
  sector = std::min(std::max(sector, 0), sectors - 1);
  int band;
  if (scheme == Scheme::EqualArea) {
    const double y = std::clamp(dir.y(), -1.0, 1.0);
    band = static_cast<int>((1.0 - y) / 2.0 * bands);
  } else {
    const double theta = std::acos(std::clamp(dir.y(), -1.0, 1.0));
    band = static_cast<int>(theta / kPi * bands);
  }
  band = std::min(std::max(band, 0), bands - 1);
  return band * sectors + sector;
}

double BasisPartition::cell_solid_angle(int k) const {
  if (k < 0 || k >= cell_count()) throw std::invalid_argument("cell_solid_angle: bad cell index");
  if (scheme == Scheme::EqualArea) return 4.0 * kPi / cell_count();
  const int band = k / sectors;
  return (kTwoPi / sectors) * (std::cos(kPi * band / bands) - std::cos(kPi * (band + 1) / bands));
}

Vec3d BasisPartition::cell_centroid(int k) const {
  if (k < 0 || k >= cell_count()) throw std::invalid_argument("cell_centroid: bad cell index");
  const int band = k / sectors;
  const int sector = k % sectors;
  const double phi = kTwoPi * (sector + 0.5) / sectors;
  double theta;
  if (scheme == Scheme::EqualArea) {
    const double cos_theta = 1.0 - (2.0 * band + 1.0) / bands;
    theta = std::acos(std::clamp(cos_theta, -1.0, 1.0));
  } else {
    theta = kPi * (band + 0.5) / bands;
  }
  return dir_from_spherical(theta, phi);
}

double BasisPartition::total_solid_angle() const {
  double total = 0.0;
  for (int k = 0; k < cell_count(); ++k) total += cell_solid_angle(k);
  return total;
}

BasisPartition make_partition(int K) {
  if (K < 1) throw std::invalid_argument("make_partition: K must be >= 1");
  int bands = 1;
  for (int b = 1; b * b <= K; ++b) {
    if (K % b == 0) bands = b;
  }
  BasisPartition part;
  part.scheme = BasisPartition::Scheme::EqualArea;
  part.bands = bands;
  part.sectors = K / bands;
  return part;
}

BasisPartition pixel_grid_partition(int width, int height) {
  if (width < 1 || height < 1) throw std::invalid_argument("pixel_grid_partition: bad size");
  BasisPartition part;
  part.scheme = BasisPartition::Scheme::PixelGrid;
  part.bands = height;
  part.sectors = width;
  return part;
}

IlluminationDescriptor descriptor_from_envmap(const EnvMap& env, const BasisPartition& part) {
  const int wid = static_cast<int>(env.width()), hgt = static_cast<int>(env.height());
  if (wid == 0 || hgt == 0) throw std::invalid_argument("descriptor_from_envmap: empty map");
  IlluminationDescriptor d;
  d.partition = part;
  d.l = Eigen::Matrix<double, 3, Eigen::Dynamic>::Zero(3, part.cell_count());
  for (int v = 0; v < hgt; ++v) {
    const double omega = pixel_solid_angle(v, wid, hgt);
    for (int u = 0; u < wid; ++u) {
      const int k = part.cell_of_direction(dir_from_pixel(u, v, wid, hgt));
      d.l(0, k) += env.radiance.r(v, u) * omega;
      d.l(1, k) += env.radiance.g(v, u) * omega;
      d.l(2, k) += env.radiance.b(v, u) * omega;
    }
  }
  return d;
}

namespace {

nlohmann::json partition_to_json(const BasisPartition& part) {
  return {{"scheme", part.scheme == BasisPartition::Scheme::EqualArea ? "equal_area" : "pixel_grid"},
          {"rings", part.bands},
          {"sectors", part.sectors}};
}

BasisPartition partition_from_json(const nlohmann::json& j) {
  BasisPartition part;
  const std::string scheme = j.value("scheme", "equal_area");
  if (scheme == "equal_area") {
    part.scheme = BasisPartition::Scheme::EqualArea;
  } else if (scheme == "pixel_grid") {
    part.scheme = BasisPartition::Scheme::PixelGrid;
  } else {
    throw std::runtime_error("partition: unknown scheme '" + scheme + "'");
  }
  part.bands = j.at("rings").get<int>();
  part.sectors = j.at("sectors").get<int>();
  if (part.bands < 1 || part.sectors < 1) throw std::runtime_error("partition: bad ring/sector counts");
  return part;
}

}  // namespace

std::string descriptor_to_json(const IlluminationDescriptor& d) {
  nlohmann::json j;
  j["K"] = d.K();
  j["partition"] = partition_to_json(d.partition);
  nlohmann::json rows = nlohmann::json::array();
  for (int c = 0; c < 3; ++c) {
    nlohmann::json row = nlohmann::json::array();
    for (int k = 0; k < d.K(); ++k) row.push_back(d.l(c, k));
    rows.push_back(row);
  }
  j["l"] = rows;
  return j.dump(2);
}

IlluminationDescriptor descriptor_from_json(const std::string& json_text) {
  const nlohmann::json j = nlohmann::json::parse(json_text);
  IlluminationDescriptor d;
  d.partition = partition_from_json(j.at("partition"));
  const int K = j.at("K").get<int>();
  if (K != d.partition.cell_count()) {
    throw std::runtime_error("descriptor: K does not match partition cell count");
  }
  const auto& rows = j.at("l");
  if (!rows.is_array() || rows.size() != 3) throw std::runtime_error("descriptor: 'l' must have 3 rows");
  d.l.resize(3, K);
  for (int c = 0; c < 3; ++c) {
    if (static_cast<int>(rows[static_cast<size_t>(c)].size()) != K) {
      throw std::runtime_error("descriptor: row length != K");
    }
    for (int k = 0; k < K; ++k) d.l(c, k) = rows[static_cast<size_t>(c)][static_cast<size_t>(k)].get<double>();
  }
  return d;
}

void save_descriptor(const std::string& path, const IlluminationDescriptor& d) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << descriptor_to_json(d) << "\n";
}

IlluminationDescriptor load_descriptor(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return descriptor_from_json(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

EnvMap rotate_envmap(const EnvMap& env, double yaw_degrees) {
  const int wid = static_cast<int>(env.width()), hgt = static_cast<int>(env.height());
  double shift = yaw_degrees / 360.0 * wid;
  shift = std::fmod(shift, static_cast<double>(wid));
  if (shift < 0) shift += wid;

  EnvMap out;
  out.radiance = Image3(hgt, wid);
  const double rounded = std::round(shift);
  if (std::abs(shift - rounded) < 1e-9) {
    const int s = static_cast<int>(rounded) % wid;
    for (int c = 0; c < 3; ++c) {
      const Planef& src = env.radiance.channel(c);
      Planef& dst = out.radiance.channel(c);
      for (int v = 0; v < hgt; ++v) {
        for (int u = 0; u < wid; ++u) dst(v, u) = src(v, (u + s) % wid);
      }
    }
    return out;
  }
  const int s0 = static_cast<int>(std::floor(shift));
  const double frac = shift - s0;
  for (int c = 0; c < 3; ++c) {
    const Planef& src = env.radiance.channel(c);
    Planef& dst = out.radiance.channel(c);
    for (int v = 0; v < hgt; ++v) {
      for (int u = 0; u < wid; ++u) {
        const int a = (u + s0) % wid;
        const int b = (u + s0 + 1) % wid;
        dst(v, u) = static_cast<float>(src(v, a) * (1.0 - frac) + src(v, b) * frac);
      }
    }
  }
  return out;
}

EnvMap procedural_sky(const SkyParams& params, int width, int height) {
  if (width < 1 || height < 1) throw std::invalid_argument("procedural_sky: bad size");
  if (std::abs(params.sun_dir.norm() - 1.0) > 1e-6) {
    throw std::invalid_argument("procedural_sky: sun_dir must be a unit vector");
  }
  const double cos_outer = std::cos(params.sun_angular_radius);
  const double cos_inner = std::cos(params.sun_angular_radius * 0.8);
  constexpr int kSub = 4;

  EnvMap env;
  env.radiance = Image3(height, width);
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      Vec3d acc = Vec3d::Zero();
      for (int sv = 0; sv < kSub; ++sv) {
        const double theta = kPi * (v + (sv + 0.5) / kSub) / height;
        const double ct = std::cos(theta), st = std::sin(theta);
        // Ambient gradient, piecewise linear in theta. The zenith term stays
        // azimuth-free; horizon and ground take the modulation.
        Vec3d zenith_part = Vec3d::Zero(), varying_part;
        if (theta <= kPi / 2) {
          const double t = theta / (kPi / 2);
          zenith_part = params.ambient_zenith * (1.0 - t);
          varying_part = params.ambient_horizon * t;
        } else {
          const double t = (theta - kPi / 2) / (kPi / 2);
          varying_part = params.ambient_horizon * (1.0 - t) + params.ambient_ground * t;
        }
        for (int su = 0; su < kSub; ++su) {
          const double phi = kTwoPi * (u + (su + 0.5) / kSub) / width;
          double mod = 1.0;
          if (params.horizon_modulation_amp != 0.0) {
            mod = 1.0 + params.horizon_modulation_amp *
                            std::cos(phi - params.horizon_modulation_phase);
            mod = std::max(mod, 0.0);
          }
          Vec3d value = zenith_part + varying_part * mod;
          const double mu = st * std::cos(phi) * params.sun_dir.x() + ct * params.sun_dir.y() +
                            st * std::sin(phi) * params.sun_dir.z();
          if (mu > cos_outer) {
            const double cov = cos_inner > cos_outer
                                   ? std::min(1.0, (mu - cos_outer) / (cos_inner - cos_outer))
                                   : 1.0;
            value += params.sun_radiance * cov;
          }
          acc += value;
        }
      }
      acc /= kSub * kSub;
      env.radiance.r(v, u) = static_cast<float>(acc.x());
      env.radiance.g(v, u) = static_cast<float>(acc.y());
      env.radiance.b(v, u) = static_cast<float>(acc.z());
    }
  }
  return env;
}

}  // namespace shadeharm
