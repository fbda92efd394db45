#pragma once

#include <string>

#include "dlsr/tensor.hpp"

namespace dlsr {

// Reads an 8-bit PNG or uncompressed 24/32-bit BMP as a [3, H, W] tensor in [0, 1].
Tensor load_image(const std::string& path);
// Writes a [3, H, W] (or [1, H, W]) tensor as 8-bit PNG; values are clamped and rounded.
void save_png(const std::string& path, const Tensor& img);

}  // namespace dlsr
