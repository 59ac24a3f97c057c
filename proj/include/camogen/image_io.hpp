#pragma once

#include <filesystem>

#include "camogen/tensor.hpp"

namespace camogen::img {

// Decode an 8-bit image file to an RGB tensor (3,H,W) scaled to [0,1].
Tensor load_rgb(const std::filesystem::path& file);

// Decode to a single-channel tensor (1,H,W) scaled to [0,1].
Tensor load_gray(const std::filesystem::path& file);

Tensor resize_bilinear(const Tensor& t, int out_h, int out_w);
Tensor resize_nearest(const Tensor& t, int out_h, int out_w);

// Encode (3,H,W) values in [-1,1] to an 8-bit PNG; the linear map to [0,255]
// rounds half up.
void save_image_png(const std::filesystem::path& file, const Tensor& image);

// Encode a {0,1} mask (1,H,W) as a 0/255 single-channel PNG.
void save_mask_png(const std::filesystem::path& file, const Tensor& mask);

}  // namespace camogen::img
