// Camera-space geometry: pinhole unprojection and plane-fitting normal
// estimation from depth maps.
#pragma once

#include "shadeharm/core.hpp"

#include <Eigen/Dense>

namespace shadeharm {

/// Pinhole camera intrinsics in pixel units.
struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const;
  bool operator==(const Intrinsics&) const = default;
};

/// Depth in meters along the camera forward (+z) axis. Valid depths are
/// finite and strictly positive; everything else must be flagged invalid.
struct DepthMap {
  Planef values;
  Planeb valid;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  bool is_valid(Eigen::Index y, Eigen::Index x) const { return valid(y, x) != 0; }
};

/// Build a DepthMap from raw values, marking non-finite or <= 0 entries invalid.
DepthMap depth_from_values(const Planef& values);

/// Camera-space positions per pixel; z equals the source depth at valid
/// pixels. Stored in double so the forward projection round-trips to
/// sub-1e-6 px at any image size.
struct PointMap {
  Planed x, y, z;
  Planeb valid;

  Eigen::Index rows() const { return x.rows(); }
  Eigen::Index cols() const { return x.cols(); }
  Vec3d point(Eigen::Index py, Eigen::Index px) const {
    return {x(py, px), y(py, px), z(py, px)};
  }
};

/// Unit surface normals in camera space, oriented toward the camera
/// (n . p <= 0 for the pixel's own point p).
struct NormalMap {
  Planef nx, ny, nz;
  Planeb valid;

  Eigen::Index rows() const { return nx.rows(); }
  Eigen::Index cols() const { return nx.cols(); }
  Vec3d normal(Eigen::Index py, Eigen::Index px) const {
    return {nx(py, px), ny(py, px), nz(py, px)};
  }
};

/// point(u,v) = ((u-cx) z / fx, (v-cy) z / fy, z). Throws on dimension mismatch.
PointMap unproject(const DepthMap& depth, const Intrinsics& intr);

/// Forward pinhole projection to continuous pixel coordinates (u, v).
Eigen::Vector2d project(const Vec3d& p, const Intrinsics& intr);

/// Total-least-squares plane normal per pixel over the (2r+1)^2 window of
/// valid unprojected neighbors. Pixels with fewer than 3 valid neighbors are
/// marked invalid; invalid depth is never interpolated over. Throws if the
/// whole depth map is invalid.
NormalMap normals_from_depth(const DepthMap& depth, const Intrinsics& intr,
                             int window_radius = 2, int threads = 1);

}  // namespace shadeharm
