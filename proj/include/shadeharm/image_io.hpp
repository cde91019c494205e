// File formats: PFM (Pf/PF float maps), Radiance RGBE (.hdr, read only),
// and 8-bit PNG (gray and RGB) backed by zlib.
#pragma once

#include "shadeharm/core.hpp"

#include <string>

namespace shadeharm {

// PFM. Scanlines are stored bottom-up with a little-endian scale header of
// -1.0, the common convention. Readers accept either endianness and apply
// any |scale| != 1 as a multiplier.
void write_pfm(const std::string& path, const Planef& gray);
void write_pfm(const std::string& path, const Image3& rgb);
Planef read_pfm_gray(const std::string& path);
Image3 read_pfm_rgb(const std::string& path);
int pfm_channels(const std::string& path);

/// Radiance .hdr (RGBE). Handles flat and both RLE scanline encodings;
/// requires the standard "-Y H +X W" orientation.
Image3 read_hdr(const std::string& path);

// PNG, 8-bit only. The encoder always emits filter-0 rows at a fixed zlib
// level so output bytes are reproducible. The decoder accepts gray, gray+alpha,
// RGB and RGBA (alpha dropped), rejecting palette/16-bit/interlaced files.
void write_png_rgb8(const std::string& path, const Image3& display);  // display-space [0,1]
void write_png_gray8(const std::string& path, const Planef& gray);    // [0,1]
Image3 read_png_rgb(const std::string& path);   // display-space [0,1]
Planef read_png_gray(const std::string& path);  // [0,1], channel mean for color input

/// Load an image as linear radiance: .pfm passes through, .png is
/// sRGB-decoded, .hdr is already linear.
Image3 load_linear_image(const std::string& path);

/// Save a linear image as display-space PNG (sRGB, clamped).
void save_display_png(const std::string& path, const Image3& linear);

}  // namespace shadeharm
