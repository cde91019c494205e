#include "shadeharm/metrics.hpp"

#include <array>
#include <cmath>

namespace shadeharm {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void check_pair(const Image3& a, const Image3& b) {
  if (!a.same_size(b) || a.empty()) throw std::invalid_argument("metrics: image shapes differ or empty");
}

void check_mask(const Image3& a, const Mask& mask) {
  if (mask.m.rows() != a.rows() || mask.m.cols() != a.cols()) {
    throw std::invalid_argument("metrics: mask shape differs from images");
  }
  if (mask.count() == 0) throw std::invalid_argument("metrics: empty mask");
}

const double* gaussian_kernel() {
  static const auto kernel = [] {
    std::array<double, kWindow> k{};
    double sum = 0;
    for (int i = 0; i < kWindow; ++i) {
      const double d = i - (kWindow - 1) / 2.0;
      k[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
      sum += k[static_cast<size_t>(i)];
    }
    for (auto& v : k) v /= sum;
    return k;
  }();
  return kernel.data();
}

// Separable Gaussian with border renormalization; full-size output.
Planed blur(const Planed& src) {
  const double* g = gaussian_kernel();
  const int half = kWindow / 2;
  const Eigen::Index hgt = src.rows(), wid = src.cols();
  Planed tmp(hgt, wid), out(hgt, wid);
  for (Eigen::Index y = 0; y < hgt; ++y) {
    for (Eigen::Index x = 0; x < wid; ++x) {
      double acc = 0, wsum = 0;
      for (int i = -half; i <= half; ++i) {
        const Eigen::Index xx = x + i;
        if (xx < 0 || xx >= wid) continue;
        acc += g[i + half] * src(y, xx);
        wsum += g[i + half];
      }
      tmp(y, x) = acc / wsum;
    }
  }
  for (Eigen::Index y = 0; y < hgt; ++y) {
    for (Eigen::Index x = 0; x < wid; ++x) {
      double acc = 0, wsum = 0;
      for (int i = -half; i <= half; ++i) {
        const Eigen::Index yy = y + i;
        if (yy < 0 || yy >= hgt) continue;
        acc += g[i + half] * tmp(yy, x);
        wsum += g[i + half];
      }
      out(y, x) = acc / wsum;
    }
  }
  return out;
}

Planed ssim_map_1d(const Planef& pred, const Planef& gt) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) {
    throw std::invalid_argument("ssim_map: image shapes differ");
  }
  if (pred.rows() < kWindow || pred.cols() < kWindow) {
    throw std::invalid_argument("ssim_map: image smaller than the 11x11 window");
  }
  const Planed x = pred.cast<double>(), y = gt.cast<double>();
  const Planed mu_x = blur(x), mu_y = blur(y);
  const Planed xx = blur((x * x).eval()), yy = blur((y * y).eval()), xy = blur((x * y).eval());

  Planed out(pred.rows(), pred.cols());
  for (Eigen::Index v = 0; v < pred.rows(); ++v) {
    for (Eigen::Index u = 0; u < pred.cols(); ++u) {
      const double mx = mu_x(v, u), my = mu_y(v, u);
      const double var_x = xx(v, u) - mx * mx;
      const double var_y = yy(v, u) - my * my;
      const double cov = xy(v, u) - mx * my;
      const double num = (2.0 * mx * my + kC1) * (2.0 * cov + kC2);
      const double den = (mx * mx + my * my + kC1) * (var_x + var_y + kC2);
      out(v, u) = num / den;
    }
  }
  return out;
}

Planed ssim_map_3d(const Image3& pred, const Image3& gt) {
  check_pair(pred, gt);
  Planed acc = ssim_map_1d(pred.r, gt.r);
  acc += ssim_map_1d(pred.g, gt.g);
  acc += ssim_map_1d(pred.b, gt.b);
  return (acc / 3.0).eval();
}

}  // namespace

double fmae(const Image3& pred, const Image3& gt, const Mask& mask) {
  check_pair(pred, gt);
  check_mask(pred, mask);
  double acc = 0;
  long count = 0;
  for (Eigen::Index y = 0; y < pred.rows(); ++y) {
    for (Eigen::Index x = 0; x < pred.cols(); ++x) {
      if (!mask.m(y, x)) continue;
      for (int c = 0; c < 3; ++c) {
        acc += std::abs(static_cast<double>(pred.channel(c)(y, x)) - gt.channel(c)(y, x));
      }
      ++count;
    }
  }
  return acc / (3.0 * count);
}

double fpsnr(const Image3& pred, const Image3& gt, const Mask& mask) {
  check_pair(pred, gt);
  check_mask(pred, mask);
  double acc = 0;
  long count = 0;
  for (Eigen::Index y = 0; y < pred.rows(); ++y) {
    for (Eigen::Index x = 0; x < pred.cols(); ++x) {
      if (!mask.m(y, x)) continue;
      for (int c = 0; c < 3; ++c) {
        const double d = static_cast<double>(pred.channel(c)(y, x)) - gt.channel(c)(y, x);
        acc += d * d;
      }
      ++count;
    }
  }
  const double mse = acc / (3.0 * count);
  if (mse <= 0) return 99.0;
  return std::min(10.0 * std::log10(1.0 / mse), 99.0);
}

Planef ssim_map(const Planef& pred, const Planef& gt) {
  return ssim_map_1d(pred, gt).cast<float>();
}

Planef ssim_map(const Image3& pred, const Image3& gt) {
  return ssim_map_3d(pred, gt).cast<float>();
}

double fssim(const Image3& pred, const Image3& gt, const Mask& mask) {
  check_pair(pred, gt);
  check_mask(pred, mask);
  // Out-of-mask content is zeroed on both sides so the metric depends only on
  // masked pixels; windows may still straddle the (deterministic) mask edge.
  Image3 pm(pred.rows(), pred.cols()), gm(pred.rows(), pred.cols());
  for (Eigen::Index y = 0; y < pred.rows(); ++y) {
    for (Eigen::Index x = 0; x < pred.cols(); ++x) {
      const bool inside = mask.m(y, x) != 0;
      for (int c = 0; c < 3; ++c) {
        pm.channel(c)(y, x) = inside ? pred.channel(c)(y, x) : 0.0f;
        gm.channel(c)(y, x) = inside ? gt.channel(c)(y, x) : 0.0f;
      }
    }
  }
  const Planed map = ssim_map_3d(pm, gm);
  double acc = 0;
  long count = 0;
  for (Eigen::Index y = 0; y < map.rows(); ++y) {
    for (Eigen::Index x = 0; x < map.cols(); ++x) {
      if (!mask.m(y, x)) continue;
      acc += map(y, x);
      ++count;
    }
  }
  return acc / count;
}

double ssim(const Image3& pred, const Image3& gt) {
  return ssim_map_3d(pred, gt).mean();
}

double l_nr(const Image3& shading_gt, const Image3& shading_pred,
            const Image3& albedo_gt, const Image3& albedo_pred,
            const Image3& image_gt, const Image3& image_pred, double lambda) {
  check_pair(shading_gt, shading_pred);
  check_pair(albedo_gt, albedo_pred);
  check_pair(image_gt, image_pred);
  auto mae = [](const Image3& a, const Image3& b) {
    double acc = 0;
    for (int c = 0; c < 3; ++c) {
      acc += (a.channel(c).cast<double>() - b.channel(c).cast<double>()).abs().sum();
    }
    return acc / (3.0 * a.rows() * a.cols());
  };
  double loss = mae(shading_gt, shading_pred) + mae(albedo_gt, albedo_pred) +
                mae(image_gt, image_pred);
  if (lambda != 0.0) {
    loss += lambda * (1.0 - ssim(shading_gt, shading_pred));
    loss += lambda * (1.0 - ssim(albedo_gt, albedo_pred));
    loss += lambda * (1.0 - ssim(image_gt, image_pred));
  }
  return loss;
}

MetricReport evaluate_pair(const Image3& pred, const Image3& gt, const Mask& mask) {
  MetricReport r;
  r.fmae = fmae(pred, gt, mask);
  r.fpsnr_db = fpsnr(pred, gt, mask);
  r.fssim = fssim(pred, gt, mask);
  r.pixel_count = mask.count();
  return r;
}

}  // namespace shadeharm
