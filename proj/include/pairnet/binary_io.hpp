#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "pairnet/tensor.hpp"

namespace pairnet {

// Appends little-endian encodings to an in-memory buffer.
class BinaryWriter {
 public:
  void bytes(std::string_view s);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void string(std::string_view s);  // u64 length + bytes
  void tensor(const Tensor& t);     // u64 rank, u64 extents, f64 values

  const std::string& buffer() const { return buf_; }
  void write_file(const std::string& path) const;

 private:
  std::string buf_;
};

// Reads little-endian encodings; every failure reports the byte offset.
class BinaryReader {
 public:
  explicit BinaryReader(std::string data) : data_(std::move(data)) {}
  static BinaryReader from_file(const std::string& path);

  void expect_magic(std::string_view magic);
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string string();
  Tensor tensor();

  bool at_end() const { return pos_ == data_.size(); }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n, const char* what);

  std::string data_;
  std::size_t pos_ = 0;
};

std::string read_binary_file(const std::string& path);

struct NamedTensor {
  std::string name;
  Tensor value;
};

}  // namespace pairnet
