#pragma once

#include <string>

#include "fusion_stereo/geometry.hpp"
#include "fusion_stereo/tensor.hpp"

namespace fstereo {

// 16-bit grayscale maps store value * 256 per pixel; pixel 0 means no
// measurement.  Whether the value is metres or pixels of disparity is the
// caller's contract (filenames use a _disp suffix for disparity).
SparseDisparityMap read_depth_png(const std::string& path);
void write_depth_png(const std::string& path, const SparseDisparityMap& map);

// 8-bit color images as [3,H,W] in [0,1]; grayscale and alpha inputs are
// normalized to RGB on read.
Tensor read_rgb8_png(const std::string& path);
void write_rgb8_png(const std::string& path, const Tensor& image);

// 8-bit preview of a [H,W] tensor, linearly mapping [lo,hi] to [0,255].
void write_gray8_png(const std::string& path, const Tensor& image, double lo, double hi);

}  // namespace fstereo
