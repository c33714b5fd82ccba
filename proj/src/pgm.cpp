#include "pairnet/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

#include "pairnet/binary_io.hpp"

namespace pairnet {

Heatmap to_heatmap(const Tensor& matrix) {
  if (matrix.rank() != 2) {
    throw std::invalid_argument("heatmap needs a matrix, got " + shape_string(matrix.shape()));
  }
  Heatmap h;
  h.image.height = matrix.dim(0);
  h.image.width = matrix.dim(1);
  const auto [lo, hi] = std::minmax_element(matrix.values().begin(), matrix.values().end());
  h.min = *lo;
  h.max = *hi;
  h.image.pixels.reserve(matrix.size());
  for (double v : matrix.values()) {
    if (h.max == h.min) {
      h.image.pixels.push_back(128);
    } else {
      h.image.pixels.push_back(
          static_cast<std::uint8_t>(std::lround(255.0 * (v - h.min) / (h.max - h.min))));
    }
  }
  return h;
}

std::string encode_pgm(const GrayImage& image) {
  if (image.pixels.size() != image.width * image.height || image.pixels.empty()) {
    throw std::invalid_argument("PGM pixel count does not match its extents");
  }
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
                    "\n255\n";
  out.append(image.pixels.begin(), image.pixels.end());
  return out;
}

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string header_token(const std::string& s, std::size_t& pos) {
  while (pos < s.size()) {
    if (std::isspace(static_cast<unsigned char>(s[pos]))) {
      ++pos;
    } else if (s[pos] == '#') {
      while (pos < s.size() && s[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  if (start == pos) throw std::runtime_error("PGM header truncated at byte " + std::to_string(pos));
  return s.substr(start, pos - start);
}

std::size_t header_number(const std::string& s, std::size_t& pos, const char* what) {
  const auto token = header_token(s, pos);
  if (!std::all_of(token.begin(), token.end(), [](unsigned char c) { return std::isdigit(c); })) {
    throw std::runtime_error(std::string("PGM ") + what + " is not a number: " + token);
  }
  return std::stoul(token);
}

}  // namespace

GrayImage decode_pgm(const std::string& bytes) {
  std::size_t pos = 0;
  if (header_token(bytes, pos) != "P5") throw std::runtime_error("not a binary PGM (P5)");
  GrayImage img;
  img.width = header_number(bytes, pos, "width");
  img.height = header_number(bytes, pos, "height");
  const auto maxval = header_number(bytes, pos, "maxval");
  if (img.width == 0 || img.height == 0) throw std::runtime_error("PGM has zero extent");
  if (maxval != 255) throw std::runtime_error("PGM maxval " + std::to_string(maxval) + " unsupported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw std::runtime_error("PGM header not terminated by whitespace");
  }
  ++pos;
  const std::size_t n = img.width * img.height;
  if (bytes.size() - pos != n) {
    throw std::runtime_error("PGM raster has " + std::to_string(bytes.size() - pos) +
                             " bytes, expected " + std::to_string(n));
  }
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return img;
}

void write_pgm(const std::string& path, const GrayImage& image) {
  BinaryWriter w;
  w.bytes(encode_pgm(image));
  w.write_file(path);
}

GrayImage read_pgm(const std::string& path) {
  try {
    return decode_pgm(read_binary_file(path));
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

}  // namespace pairnet
