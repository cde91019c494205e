// Shadow-aware Lambertian shading bases over a sphere partition, their
// composition with an illumination descriptor, and the dense per-pixel
// reference renderer used as the oracle for both.
#pragma once

#include "shadeharm/envlight.hpp"
#include "shadeharm/geometry.hpp"

#include <optional>
#include <string>
#include <vector>

namespace shadeharm {

using Shading = Image3;  // 3 x H x W nonnegative linear shading
using Albedo = Image3;   // 3 x H x W diffuse reflectance in [0,1]

/// Shadow ray-marching parameters. Zero-valued lengths are resolved from the
/// geometry: ray_step = half the median adjacent-point spacing, shadow_bias =
/// 2 * ray_step, max_ray_distance = bounding-box diagonal of valid points.
struct ShadowConfig {
  int samples_per_cell = 8;
  double ray_step = 0.0;          // meters
  double max_ray_distance = 0.0;  // meters
  double shadow_bias = 0.0;       // meters
  // Camera-space ground plane n.p + d = 0 with unit n pointing above-ground.
  std::optional<Eigen::Vector4d> ground_plane;

  void validate() const;
};

/// Resolve the automatic (zero) fields against a concrete depth map.
ShadowConfig resolve_shadow_config(const ShadowConfig& cfg, const DepthMap& depth,
                                   const Intrinsics& intr);

/// 1 iff the ray from point(pixel) + bias*n toward dir (camera space) neither
/// crosses the depth heightfield (ray-marched against bilinearly interpolated
/// depth) nor descends below the optional ground plane. Invalid pixels are 0.
int visibility(const PointMap& points, const NormalMap& normals, const Intrinsics& intr,
               int pixel_y, int pixel_x, const Vec3d& dir_cam, const ShadowConfig& cfg);

/// K per-pixel transfer images. SB_k(p) is the cosine-weighted, visibility-
/// masked quadrature average over cell k:
///   SB_k(p) = (1/|A_k|) sum_j max(0, n(p) . w_kj) V(p, w_kj) dw_kj,
/// so that descriptor(c,k) * SB_k(p) summed over k is a Riemann sum of the
/// Lambertian reflection integral. Values lie in [0,1]; invalid-geometry
/// pixels are all-zero.
struct ShadingBases {
  std::vector<Planef> sb;
  BasisPartition partition;
  std::uint64_t geometry_hash = 0;

  int K() const { return static_cast<int>(sb.size()); }
  Eigen::Index rows() const { return sb.empty() ? 0 : sb.front().rows(); }
  Eigen::Index cols() const { return sb.empty() ? 0 : sb.front().cols(); }
};

// Cell sample directions are stratified midpoints in the cell's area
// parametrization; samples_per_cell = 1 uses the exact cell center, which
// makes the pixel-grid partition reproduce the dense reference exactly.
ShadingBases shading_bases(const DepthMap& depth, const NormalMap& normals,
                           const Intrinsics& intr, const BasisPartition& part,
                           const ShadowConfig& cfg, int threads = 1);

/// S(c, p) = sum_k l(c, k) * SB_k(p), accumulated in doubles in ascending k.
/// Throws on K or partition mismatch.
Shading compose_shading(const ShadingBases& bases, const IlluminationDescriptor& descriptor);

/// Dense oracle: S(c, p) = sum over env pixels of radiance * clamped cosine *
/// visibility * pixel solid angle, in row-major env order.
Shading reference_shading(const DepthMap& depth, const NormalMap& normals,
                          const Intrinsics& intr, const EnvMap& env,
                          const ShadowConfig& cfg, int threads = 1);

// Bases persist as a directory: meta.json plus one single-channel PFM per
// basis (SB_0.pfm ... SB_{K-1}.pfm).
void save_bases(const std::string& dir, const ShadingBases& bases);
ShadingBases load_bases(const std::string& dir);

std::uint64_t geometry_hash(const DepthMap& depth, const Intrinsics& intr);

}  // namespace shadeharm
