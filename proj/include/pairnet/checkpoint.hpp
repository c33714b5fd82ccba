#pragma once

#include <string>
#include <vector>

#include "pairnet/binary_io.hpp"
#include "pairnet/tape.hpp"

namespace pairnet {

// Parameter checkpoint layout (all integers little-endian):
//   "PNET" | u32 version | records until end of file
//   record: u64 name length | UTF-8 name | u64 rank | u64 extents | f64 values
inline constexpr char kCheckpointMagic[] = "PNET";
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const ParameterList& params);
std::vector<NamedTensor> decode_checkpoint(std::string bytes);

void save_checkpoint(const std::string& path, const ParameterList& params);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

// Copies values into matching parameters by name. Every parameter must be
// present with identical extents.
void restore_parameters(const std::vector<NamedTensor>& records,
                        const ParameterList& params);

}  // namespace pairnet
