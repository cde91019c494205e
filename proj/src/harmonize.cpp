#include "shadeharm/harmonize.hpp"

#include <cmath>
#include <deque>

namespace shadeharm {

Albedo albedo_from_image(const LinearImage& img, const Shading& shading, float eps) {
  if (!img.same_size(shading) || img.empty()) {
    throw std::invalid_argument("albedo_from_image: image and shading must align");
  }
  if (!(eps > 0)) throw std::invalid_argument("albedo_from_image: eps must be > 0");
  const Eigen::Index hgt = img.rows(), wid = img.cols();
  Albedo out(hgt, wid);
  Planeb ok(hgt, wid);
  bool any_valid = false;
  for (Eigen::Index y = 0; y < hgt; ++y) {
    for (Eigen::Index x = 0; x < wid; ++x) {
      bool valid = true;
      for (int c = 0; c < 3; ++c) {
        const float s = shading.channel(c)(y, x);
        if (!(s >= eps)) valid = false;
        const float a = img.channel(c)(y, x) / std::max(s, eps);
        out.channel(c)(y, x) = std::fmin(std::fmax(a, 0.0f), 1.0f);
      }
      ok(y, x) = valid ? 1 : 0;
      any_valid |= valid;
    }
  }
  if (!any_valid) return out;

  // Shadow-floor pixels take the albedo of the nearest valid pixel.
  std::deque<std::pair<Eigen::Index, Eigen::Index>> queue;
  for (Eigen::Index y = 0; y < hgt; ++y) {
    for (Eigen::Index x = 0; x < wid; ++x) {
      if (ok(y, x)) queue.emplace_back(y, x);
    }
  }
  const int dy[4] = {-1, 1, 0, 0};
  const int dx[4] = {0, 0, -1, 1};
  while (!queue.empty()) {
    const auto [y, x] = queue.front();
    queue.pop_front();
    for (int d = 0; d < 4; ++d) {
      const Eigen::Index ny = y + dy[d], nx = x + dx[d];
      if (ny < 0 || ny >= hgt || nx < 0 || nx >= wid || ok(ny, nx)) continue;
      for (int c = 0; c < 3; ++c) out.channel(c)(ny, nx) = out.channel(c)(y, x);
      ok(ny, nx) = 1;
      queue.emplace_back(ny, nx);
    }
  }
  return out;
}

LinearImage render_image(const Albedo& albedo, const Shading& shading) {
  if (!albedo.same_size(shading)) throw std::invalid_argument("render_image: shapes differ");
  LinearImage out(albedo.rows(), albedo.cols());
  for (int c = 0; c < 3; ++c) out.channel(c) = albedo.channel(c) * shading.channel(c);
  return out;
}

LinearImage composite(const LinearImage& fg, const LinearImage& bg, const Mask& mask) {
  if (!fg.same_size(bg) || mask.m.rows() != fg.rows() || mask.m.cols() != fg.cols()) {
    throw std::invalid_argument("composite: shapes differ");
  }
  LinearImage out(fg.rows(), fg.cols());
  if (mask.has_alpha()) {
    for (int c = 0; c < 3; ++c) {
      out.channel(c) = mask.alpha * fg.channel(c) + (1.0f - mask.alpha) * bg.channel(c);
    }
    return out;
  }
  for (Eigen::Index y = 0; y < fg.rows(); ++y) {
    for (Eigen::Index x = 0; x < fg.cols(); ++x) {
      const bool inside = mask.m(y, x) != 0;
      for (int c = 0; c < 3; ++c) {
        out.channel(c)(y, x) = inside ? fg.channel(c)(y, x) : bg.channel(c)(y, x);
      }
    }
  }
  return out;
}

HarmonizeResult harmonize(const LinearImage& composite_img, const Mask& mask,
                          const DepthMap& fg_depth, const Intrinsics& intr, int K,
                          const Shading& src_shading, const IlluminationDescriptor& target,
                          const ShadowConfig& cfg, int threads, int normal_window_radius,
                          float albedo_eps) {
  if (mask.m.rows() != composite_img.rows() || mask.m.cols() != composite_img.cols()) {
    throw std::invalid_argument("harmonize: mask does not align with composite");
  }
  if (mask.count() == 0) throw std::invalid_argument("harmonize: empty mask");
  if (target.K() != K) {
    throw std::invalid_argument("harmonize: descriptor K " + std::to_string(target.K()) +
                                " != requested K " + std::to_string(K));
  }
  if (fg_depth.rows() != composite_img.rows() || fg_depth.cols() != composite_img.cols() ||
      !src_shading.same_size(composite_img)) {
    throw std::invalid_argument("harmonize: depth/src_shading do not align with composite");
  }

  const NormalMap normals = normals_from_depth(fg_depth, intr, normal_window_radius, threads);
  const ShadingBases bases = shading_bases(fg_depth, normals, intr, target.partition, cfg, threads);

  HarmonizeResult result;
  result.new_shading = compose_shading(bases, target);
  result.albedo = albedo_from_image(composite_img, src_shading, albedo_eps);
  result.image = composite(render_image(result.albedo, result.new_shading), composite_img, mask);
  return result;
}

}  // namespace shadeharm
