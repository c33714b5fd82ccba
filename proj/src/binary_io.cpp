#include "pairnet/binary_io.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace pairnet {

void BinaryWriter::bytes(std::string_view s) { buf_.append(s); }

void BinaryWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void BinaryWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void BinaryWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void BinaryWriter::string(std::string_view s) {
  u64(s.size());
  bytes(s);
}

void BinaryWriter::tensor(const Tensor& t) {
  u64(t.rank());
  for (auto e : t.shape()) u64(e);
  for (double v : t.values()) f64(v);
}

void BinaryWriter::write_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
  if (!out) throw std::runtime_error("failed writing " + path);
}

std::string read_binary_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

BinaryReader BinaryReader::from_file(const std::string& path) {
  return BinaryReader(read_binary_file(path));
}

void BinaryReader::need(std::size_t n, const char* what) {
  if (data_.size() - pos_ < n) {
    throw std::runtime_error("truncated input at byte " + std::to_string(pos_) +
                             ": need " + std::to_string(n) + " bytes for " +
                             what + ", have " +
                             std::to_string(data_.size() - pos_));
  }
}

void BinaryReader::expect_magic(std::string_view magic) {
  need(magic.size(), "magic");
  if (std::string_view(data_).substr(pos_, magic.size()) != magic) {
    throw std::runtime_error("bad magic at byte " + std::to_string(pos_) +
                             ", expected \"" + std::string(magic) + "\"");
  }
  pos_ += magic.size();
}

std::uint32_t BinaryReader::u32() {
  need(4, "u32");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i]))
         << (8 * i);
  }
  pos_ += 4;
  return v;
}

std::uint64_t BinaryReader::u64() {
  need(8, "u64");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i]))
         << (8 * i);
  }
  pos_ += 8;
  return v;
}

double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

std::string BinaryReader::string() {
  const auto n = u64();
  need(n, "string");
  std::string s = data_.substr(pos_, n);
  pos_ += n;
  return s;
}

Tensor BinaryReader::tensor() {
  const std::size_t start = pos_;
  const auto rank = u64();
  if (rank > 8) {
    throw std::runtime_error("implausible tensor rank " + std::to_string(rank) +
                             " at byte " + std::to_string(start));
  }
  Shape shape(rank);
  std::uint64_t count = 1;
  for (auto& e : shape) {
    e = u64();
    if (e == 0) {
      throw std::runtime_error("zero tensor extent at byte " +
                               std::to_string(pos_ - 8));
    }
    count *= e;
  }
  need(count * 8, "tensor values");
  std::vector<double> values(count);
  for (auto& v : values) v = f64();
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace pairnet
