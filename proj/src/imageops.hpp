#pragma once

#include "image.hpp"

namespace dmrf::tasks {

// Separable cubic convolution (Keys kernel, a = -0.5), center-aligned
// sampling, edge clamp. Output clamped to [0,1].
ImageBuffer bicubic_resize(const ImageBuffer& img, int out_height, int out_width);

// BT.601 full-range on the [0,1] scale. Inputs must be 3-channel.
ImageBuffer rgb_to_ycbcr(const ImageBuffer& img);
ImageBuffer ycbcr_to_rgb(const ImageBuffer& img);

// Luminance channel only.
ImageBuffer luminance(const ImageBuffer& img);

// Replace the Y plane of a YCbCr image.
ImageBuffer combine_luma_chroma(const ImageBuffer& luma, const ImageBuffer& cb_cr_source);

} // namespace dmrf::tasks
