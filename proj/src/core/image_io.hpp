#pragma once

#include <filesystem>

#include "tensor.hpp"

namespace fading {

// 8-bit grayscale PNG <-> (1,H,W) float tensor in [0,1].
void write_png_gray(const std::filesystem::path& path, const Tensor& image);
Tensor read_png_gray(const std::filesystem::path& path);

}  // namespace fading
