#pragma once

#include <filesystem>

#include "manifest/tensor.hpp"

namespace manifest {

// 8-bit RGB PNG <-> (3,H,W) tensors in [-1,1].
Tensor read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Tensor& image);

// Bilinear resampling of a (3,H,W) tensor, pixel-center aligned.
Tensor resize_bilinear(const Tensor& image, int height, int width);

// Reads and resizes to a square resolution when needed.
Tensor read_png_resized(const std::filesystem::path& path, int resolution);

// Values in [-1,1] quantized the way write_png stores them.
inline float quantize_to_byte(float v) {
  const float x = (v + 1.0f) * 127.5f;
  return x < 0.0f ? 0.0f : (x > 255.0f ? 255.0f : static_cast<float>(static_cast<int>(x + 0.5f)));
}

}  // namespace manifest
