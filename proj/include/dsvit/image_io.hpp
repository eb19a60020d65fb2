#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dsvit/tensor.hpp"

namespace dsvit {

/// 8-bit RGB raster, interleaved row-major: pixels[(y·W + x)·3 + channel].
struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(std::size_t h, std::size_t w, std::uint8_t fill = 0)
      : height(h), width(w), pixels(h * w * 3, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }
  bool operator==(const RgbImage&) const = default;
};

/// 3×H×W tensor with values v/255.
Tensor to_tensor(const RgbImage& image);

void write_png(const std::string& path, const RgbImage& image);
/// Reads 8-bit RGB or RGBA (alpha dropped). Throws IoError naming the path.
RgbImage read_png(const std::string& path);

}  // namespace dsvit
