// Foreground-masked image quality metrics (fMAE, fPSNR, fSSIM) and the
// toolkit's evaluable training objectives.
//
// Metric inputs are display-space images in [0,1]; callers encode linear
// radiance with to_display() first. All three metrics ignore pixels outside
// the binary mask.
#pragma once

#include "shadeharm/core.hpp"

namespace shadeharm {

/// Mean absolute error over masked pixels and all 3 channels.
double fmae(const Image3& pred, const Image3& gt, const Mask& mask);

/// 10 log10(1 / masked MSE) with peak 1.0, capped at 99 dB (the cap also
/// reports identical images).
double fpsnr(const Image3& pred, const Image3& gt, const Mask& mask);

// SSIM with an 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2,
// dynamic range 1. The window renormalizes where it straddles the image
// border so the map covers all H x W pixels. Throws if the image is smaller
// than the window.
Planef ssim_map(const Planef& pred, const Planef& gt);
Planef ssim_map(const Image3& pred, const Image3& gt);  // channel-averaged

/// Mean of the SSIM map over masked pixels. Both inputs are zeroed outside
/// the mask before the map is computed, so the metric depends only on masked
/// content (windows still straddle the deterministic mask edge).
double fssim(const Image3& pred, const Image3& gt, const Mask& mask);

/// Unmasked mean SSIM, used by the rendering loss.
double ssim(const Image3& pred, const Image3& gt);

/// Rendering loss: mean-absolute terms for shading, albedo and image plus
/// lambda-weighted (1 - SSIM) terms for each pair. Default lambda is 1.
double l_nr(const Image3& shading_gt, const Image3& shading_pred,
            const Image3& albedo_gt, const Image3& albedo_pred,
            const Image3& image_gt, const Image3& image_pred, double lambda = 1.0);

struct MetricReport {
  double fmae = 0;
  double fpsnr_db = 0;
  double fssim = 0;
  long pixel_count = 0;
};

/// All three metrics for one display-space pair.
MetricReport evaluate_pair(const Image3& pred, const Image3& gt, const Mask& mask);

}  // namespace shadeharm
