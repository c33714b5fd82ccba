#include "pairnet/checkpoint.hpp"

#include <map>
#include <stdexcept>

namespace pairnet {

std::string encode_checkpoint(const ParameterList& params) {
  BinaryWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  for (const Parameter* p : params) {
    w.string(p->name);
    w.tensor(p->value);
  }
  return w.buffer();
}

std::vector<NamedTensor> decode_checkpoint(std::string bytes) {
  BinaryReader r(std::move(bytes));
  r.expect_magic(kCheckpointMagic);
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));
  }
  std::vector<NamedTensor> out;
  while (!r.at_end()) {
    NamedTensor rec;
    rec.name = r.string();
    rec.value = r.tensor();
    out.push_back(std::move(rec));
  }
  return out;
}

void save_checkpoint(const std::string& path, const ParameterList& params) {
  BinaryWriter w;
  w.bytes(encode_checkpoint(params));
  w.write_file(path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  auto bytes = read_binary_file(path);
  try {
    return decode_checkpoint(std::move(bytes));
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

void restore_parameters(const std::vector<NamedTensor>& records,
                        const ParameterList& params) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& rec : records) {
    if (!by_name.emplace(rec.name, &rec.value).second) {
      throw std::runtime_error("duplicate checkpoint record " + rec.name);
    }
  }
  for (Parameter* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) {
      throw std::runtime_error("checkpoint lacks parameter " + p->name);
    }
    if (it->second->shape() != p->value.shape()) {
      throw std::runtime_error("checkpoint extent mismatch for " + p->name +
                               ": file " + shape_string(it->second->shape()) +
                               ", model " + shape_string(p->value.shape()));
    }
    p->value = *it->second;
  }
  if (by_name.size() != params.size()) {
    throw std::runtime_error("checkpoint holds " +
                             std::to_string(by_name.size()) +
                             " records, model has " +
                             std::to_string(params.size()) + " parameters");
  }
}

}  // namespace pairnet
