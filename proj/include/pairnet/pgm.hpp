#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pairnet/tensor.hpp"

namespace pairnet {

// 8-bit grayscale image, row-major.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

struct Heatmap {
  GrayImage image;
  double min = 0.0;
  double max = 0.0;
};

// Min-max normalizes a matrix to 0..255 (rounded). A constant matrix maps to
// 128 everywhere.
Heatmap to_heatmap(const Tensor& matrix);

// Binary "P5" with maxval 255.
std::string encode_pgm(const GrayImage& image);
GrayImage decode_pgm(const std::string& bytes);
void write_pgm(const std::string& path, const GrayImage& image);
GrayImage read_pgm(const std::string& path);

}  // namespace pairnet
