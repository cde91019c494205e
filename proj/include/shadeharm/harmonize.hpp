// Albedo recovery, re-rendering under a target descriptor, compositing, and
// the end-to-end foreground harmonization pipeline.
#pragma once

#include "shadeharm/shading.hpp"

namespace shadeharm {

/// Lambertian inversion a = clamp(img / max(S, eps), 0, 1). Pixels where any
/// shading channel sits below eps (hard shadow floor) inherit the albedo of
/// the nearest valid pixel (multi-source BFS, deterministic scan order); if
/// no pixel is valid the clamped direct quotient is kept.
Albedo albedo_from_image(const LinearImage& img, const Shading& shading, float eps = 1e-3f);

/// Elementwise product img = albedo * shading.
LinearImage render_image(const Albedo& albedo, const Shading& shading);

/// alpha-blend when the mask carries a soft band, binary selection otherwise.
LinearImage composite(const LinearImage& fg, const LinearImage& bg, const Mask& mask);

struct HarmonizeResult {
  LinearImage image;    // composited output; background pixels bit-identical
  Shading new_shading;  // composed shading under the target descriptor
  Albedo albedo;        // recovered foreground albedo
};

/// Re-render the foreground of a composite under target illumination:
/// normals from depth -> shading bases -> compose with target descriptor;
/// albedo recovered against the source shading; result composited back over
/// the input. Throws on empty mask or descriptor K != K.
HarmonizeResult harmonize(const LinearImage& composite_img, const Mask& mask,
                          const DepthMap& fg_depth, const Intrinsics& intr, int K,
                          const Shading& src_shading, const IlluminationDescriptor& target,
                          const ShadowConfig& cfg, int threads = 1,
                          int normal_window_radius = 2, float albedo_eps = 1e-3f);

}  // namespace shadeharm
