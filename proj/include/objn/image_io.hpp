#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "objn/tensor.hpp"

namespace objn {

// 8-bit RGB image, row-major, 3 bytes per pixel.
struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  std::uint8_t* px(int x, int y) { return rgb.data() + 3 * (y * width + x); }
  const std::uint8_t* px(int x, int y) const { return rgb.data() + 3 * (y * width + x); }
};

void write_png(const std::string& path, const ImageU8& img);

// Throws DataError for unreadable or non-PNG files (with the path).
ImageU8 read_png(const std::string& path);

// CHW float tensor scaled to [0,1].
Tensor image_to_tensor(const ImageU8& img);

}  // namespace objn
