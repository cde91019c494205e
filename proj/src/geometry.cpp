#include "shadeharm/geometry.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace shadeharm {

void Intrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw std::invalid_argument("Intrinsics: focal lengths must be > 0");
  if (width <= 0 || height <= 0) throw std::invalid_argument("Intrinsics: image size must be positive");
  // The principal point may sit outside the frame: crops re-rendered at a
  // placement offset are pinhole cameras whose optical axis misses the crop.
  if (!std::isfinite(cx) || !std::isfinite(cy)) {
    throw std::invalid_argument("Intrinsics: principal point must be finite");
  }
}

DepthMap depth_from_values(const Planef& values) {
  DepthMap d;
  d.values = values;
  d.valid = Planeb::Zero(values.rows(), values.cols());
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const float v = values.data()[i];
    d.valid.data()[i] = (std::isfinite(v) && v > 0.0f) ? 1 : 0;
  }
  return d;
}

PointMap unproject(const DepthMap& depth, const Intrinsics& intr) {
  intr.validate();
  if (depth.rows() != intr.height || depth.cols() != intr.width) {
    throw std::invalid_argument("unproject: depth size does not match intrinsics");
  }
  PointMap pm;
  pm.x = Planed::Zero(depth.rows(), depth.cols());
  pm.y = Planed::Zero(depth.rows(), depth.cols());
  pm.z = Planed::Zero(depth.rows(), depth.cols());
  pm.valid = depth.valid;
  for (Eigen::Index v = 0; v < depth.rows(); ++v) {
    for (Eigen::Index u = 0; u < depth.cols(); ++u) {
      if (!depth.is_valid(v, u)) continue;
      const double z = depth.values(v, u);
      pm.x(v, u) = (static_cast<double>(u) - intr.cx) * z / intr.fx;
      pm.y(v, u) = (static_cast<double>(v) - intr.cy) * z / intr.fy;
      pm.z(v, u) = z;
    }
  }
  return pm;
}

Eigen::Vector2d project(const Vec3d& p, const Intrinsics& intr) {
  return {intr.fx * p.x() / p.z() + intr.cx, intr.fy * p.y() / p.z() + intr.cy};
}

NormalMap normals_from_depth(const DepthMap& depth, const Intrinsics& intr,
                             int window_radius, int threads) {
  if (window_radius < 1) throw std::invalid_argument("normals_from_depth: window_radius must be >= 1");
  const PointMap pm = unproject(depth, intr);
  bool any_valid = false;
  for (Eigen::Index i = 0; i < depth.valid.size() && !any_valid; ++i) {
    any_valid = depth.valid.data()[i] != 0;
  }
  if (!any_valid) throw std::invalid_argument("normals_from_depth: depth map has no valid pixels");

  const Eigen::Index hgt = depth.rows(), wid = depth.cols();
  NormalMap nm;
  nm.nx = Planef::Zero(hgt, wid);
  nm.ny = Planef::Zero(hgt, wid);
  nm.nz = Planef::Zero(hgt, wid);
  nm.valid = Planeb::Zero(hgt, wid);

  parallel_for(0, hgt, threads, [&](Eigen::Index v) {
    std::vector<Vec3d> points;
    points.reserve(static_cast<size_t>((2 * window_radius + 1) * (2 * window_radius + 1)));
    for (Eigen::Index u = 0; u < wid; ++u) {
      if (!depth.is_valid(v, u)) continue;
      points.clear();
      const Eigen::Index v0 = std::max<Eigen::Index>(0, v - window_radius);
      const Eigen::Index v1 = std::min<Eigen::Index>(hgt - 1, v + window_radius);
      const Eigen::Index u0 = std::max<Eigen::Index>(0, u - window_radius);
      const Eigen::Index u1 = std::min<Eigen::Index>(wid - 1, u + window_radius);
      for (Eigen::Index wv = v0; wv <= v1; ++wv) {
        for (Eigen::Index wu = u0; wu <= u1; ++wu) {
          if (depth.is_valid(wv, wu)) points.push_back(pm.point(wv, wu));
        }
      }
      if (points.size() < 3) continue;

      // Covariance of the windowed points; the smallest-eigenvalue
      // eigenvector of the scatter matrix is the TLS plane normal. A second
      // pass drops 3-sigma residual outliers, which keeps the fit on the
      // near side of depth folds at silhouettes.
      auto fit = [](const std::vector<Vec3d>& pts, Vec3d& centroid, Vec3d& normal) {
        Vec3d sum = Vec3d::Zero();
        Eigen::Matrix3d sq = Eigen::Matrix3d::Zero();
        for (const Vec3d& p : pts) {
          sum += p;
          sq += p * p.transpose();
        }
        centroid = sum / static_cast<double>(pts.size());
        const Eigen::Matrix3d cov = sq / static_cast<double>(pts.size()) -
                                     centroid * centroid.transpose();
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
        normal = es.eigenvectors().col(0);  // ascending eigenvalues
        return std::isfinite(normal.norm()) && normal.norm() > 0;
      };

      Vec3d centroid, n;
      if (!fit(points, centroid, n)) continue;
      double rms = 0;
      for (const Vec3d& p : points) {
        const double r = n.dot(p - centroid);
        rms += r * r;
      }
      rms = std::sqrt(rms / static_cast<double>(points.size()));
      if (rms > 0) {
        std::vector<Vec3d> inliers;
        inliers.reserve(points.size());
        for (const Vec3d& p : points) {
          if (std::abs(n.dot(p - centroid)) <= 3.0 * rms) inliers.push_back(p);
        }
        if (inliers.size() >= 3 && inliers.size() < points.size()) {
          Vec3d c2, n2;
          if (fit(inliers, c2, n2)) n = n2;
        }
      }
      n.normalize();
      if (n.dot(pm.point(v, u)) > 0) n = -n;  // face the camera
      nm.nx(v, u) = static_cast<float>(n.x());
      nm.ny(v, u) = static_cast<float>(n.y());
      nm.nz(v, u) = static_cast<float>(n.z());
      nm.valid(v, u) = 1;
    }
  });
  return nm;
}

}  // namespace shadeharm
