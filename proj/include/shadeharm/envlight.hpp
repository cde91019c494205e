// Equirectangular HDR environment maps, sphere partitioning into basis cells,
// illumination descriptors, map rotation, and procedural skies.
//
// Equirectangular convention (fixed project-wide): row v = 0 is the zenith,
// column u = 0 is azimuth 0, azimuth increases with u. A pixel center maps to
//   theta = pi (v + 0.5) / H,  phi = 2 pi (u + 0.5) / W,
//   dir = (sin theta cos phi, cos theta, sin theta sin phi),  +y = zenith.
#pragma once

#include "shadeharm/core.hpp"

#include <string>
#include <vector>

namespace shadeharm {

/// Linear RGB radiance on the sphere (relative W sr^-1 m^-2 per channel).
struct EnvMap {
  Image3 radiance;

  Eigen::Index height() const { return radiance.rows(); }
  Eigen::Index width() const { return radiance.cols(); }

  /// Throws if any sample is negative or non-finite.
  void validate() const;

  /// Bilinear lookup of radiance toward a world direction (azimuth wraps,
  /// polar rows clamp).
  Vec3f sample(const Vec3d& dir) const;
};

/// Direction of the center of pixel (u, v) on a W x H map.
Vec3d dir_from_pixel(int u, int v, int width, int height);

/// Direction for spherical angles (theta from zenith, phi azimuth).
Vec3d dir_from_spherical(double theta, double phi);

/// Continuous pixel coordinates whose center convention inverts
/// dir_from_pixel: integer (u, v) back for exact pixel centers.
Eigen::Vector2d pixel_from_dir(const Vec3d& dir, int width, int height);

/// Exact solid angle of any pixel in row v: (2 pi / W)(cos(pi v / H) - cos(pi (v+1) / H)).
double pixel_solid_angle(int v, int width, int height);

/// Disjoint, exhaustive partition of the sphere into K = bands x sectors
/// cells. Two schemes share the type:
///  - EqualArea: bands uniform in cos(theta), so every cell covers 4 pi / K.
///  - PixelGrid: bands uniform in theta (one cell per pixel row/column of an
///    equirectangular map), used to refine the partition down to the exact
///    per-pixel oracle.
struct BasisPartition {
  enum class Scheme { EqualArea, PixelGrid };

  Scheme scheme = Scheme::EqualArea;
  int bands = 0;    // polar divisions ("rings")
  int sectors = 0;  // azimuthal divisions

  int cell_count() const { return bands * sectors; }
  std::string id() const;

  int cell_of_direction(const Vec3d& dir) const;
  double cell_solid_angle(int k) const;
  Vec3d cell_centroid(int k) const;

  /// Total solid angle, 4 pi up to accumulation error.
  double total_solid_angle() const;

  bool operator==(const BasisPartition&) const = default;
};

/// Equal-area partition for K cells. The band count is the largest divisor of
/// K not exceeding sqrt(K) (K=4 -> 2x2, 8 -> 2x4, 16 -> 4x4, 32 -> 4x8,
/// 64 -> 8x8), which nests across K, 4K, 16K... Throws for K < 1.
BasisPartition make_partition(int K);

/// One cell per pixel of a W x H equirectangular map; cell index is the
/// row-major pixel index.
BasisPartition pixel_grid_partition(int width, int height);

/// Per-cell integrated radiance, 3 x K: l(c, k) = sum over pixels whose
/// center direction falls in cell k of radiance_c * pixel solid angle.
/// Coefficients therefore carry energy and sum to the total map energy.
struct IlluminationDescriptor {
  Eigen::Matrix<double, 3, Eigen::Dynamic> l;
  BasisPartition partition;

  int K() const { return static_cast<int>(l.cols()); }
};

IlluminationDescriptor descriptor_from_envmap(const EnvMap& env, const BasisPartition& part);

std::string descriptor_to_json(const IlluminationDescriptor& d);
IlluminationDescriptor descriptor_from_json(const std::string& json_text);
void save_descriptor(const std::string& path, const IlluminationDescriptor& d);
IlluminationDescriptor load_descriptor(const std::string& path);

/// Shift the map so the new column u shows the old azimuth phi + yaw:
/// rotate(env, d) viewed at azimuth 0 equals env viewed at azimuth d.
/// Integer column shifts are exact copies, otherwise bilinear wrap.
EnvMap rotate_envmap(const EnvMap& env, double yaw_degrees);

/// Procedural sky: a sun disc (linear edge ramp over the outer 20% of the
/// radius) plus a zenith->horizon->below-horizon ambient gradient, piecewise
/// linear in theta. The horizon and ground terms may carry a first-harmonic
/// azimuthal modulation 1 + amp cos(phi - phase) (cloud/glow asymmetry); it
/// integrates to zero over azimuth, so closed-form total energies are
/// unaffected. Pixels are 4x4 supersampled; fully deterministic.
struct SkyParams {
  Vec3d sun_dir = Vec3d(0, 1, 0);
  Vec3d sun_radiance = Vec3d::Zero();
  double sun_angular_radius = 0.1;  // radians
  Vec3d ambient_zenith = Vec3d::Zero();
  Vec3d ambient_horizon = Vec3d::Zero();
  Vec3d ambient_ground = Vec3d::Zero();
  double horizon_modulation_amp = 0.0;  // in [0, 1)
  double horizon_modulation_phase = 0.0;
};

EnvMap procedural_sky(const SkyParams& params, int width, int height);

}  // namespace shadeharm
