#include "pairnet/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pairnet/binary_io.hpp"
#include "pairnet/hungarian.hpp"
#include "pairnet/random.hpp"

namespace pairnet {

BinaryMask ObjectQuerySet::binary_mask(std::size_t q) const {
  const std::size_t h = soft_masks.dim(1), w = soft_masks.dim(2);
  BinaryMask m(h, w);
  const double* src = soft_masks.data() + q * h * w;
  for (std::size_t p = 0; p < h * w; ++p) m.bits[p] = src[p] >= 0.5 ? 1 : 0;
  return m;
}

std::size_t ObjectQuerySet::predicted_class_index(std::size_t q) const {
  const std::size_t c = class_logits.dim(1);
  const double* row = class_logits.data() + q * c;
  return static_cast<std::size_t>(std::max_element(row, row + c) - row);
}

void OracleConfig::validate() const {
  if (num_queries == 0 || dim == 0) throw std::invalid_argument("empty query extents");
  if (embedding_noise < 0.0) throw std::invalid_argument("embedding noise must be >= 0");
  for (double p : {class_flip, mask_perturbation}) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("oracle probabilities must lie in [0, 1]");
  }
}

EmbeddingTable make_embedding_table(std::size_t object_classes, std::size_t dim,
                                    std::size_t num_queries, std::uint64_t seed) {
  Rng rng(mix_seed(seed, "embedding-table"));
  std::normal_distribution<double> normal(0.0, 1.0);
  EmbeddingTable t{Tensor({object_classes + 1, dim}), Tensor({num_queries, dim})};
  for (auto& v : t.class_embeddings.values()) v = normal(rng);
  for (auto& v : t.instance_offsets.values()) v = 0.5 * normal(rng);
  return t;
}

std::size_t QueryAssignment::query(int segment_id) const {
  if (!has(segment_id)) {
    throw std::out_of_range("segment " + std::to_string(segment_id) + " is not assigned");
  }
  return query_of_segment[static_cast<std::size_t>(segment_id) - 1];
}

namespace {

void perturb_boundary(std::vector<double>& mask, std::size_t h, std::size_t w,
                      double rate, Rng& rng) {
  if (rate <= 0.0) return;
  std::vector<std::size_t> boundary;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double v = mask[y * w + x];
      const bool edge = (y > 0 && mask[(y - 1) * w + x] != v) ||
                        (y + 1 < h && mask[(y + 1) * w + x] != v) ||
                        (x > 0 && mask[y * w + x - 1] != v) ||
                        (x + 1 < w && mask[y * w + x + 1] != v);
      if (edge) boundary.push_back(y * w + x);
    }
  }
  std::shuffle(boundary.begin(), boundary.end(), rng);
  const auto flips = static_cast<std::size_t>(
      std::lround(rate * static_cast<double>(boundary.size())));
  for (std::size_t i = 0; i < flips; ++i) {
    double& v = mask[boundary[i]];
    v = 1.0 - v;
  }
}

}  // namespace

OracleOutput oracle_queries(const PanopticScene& scene, const EmbeddingTable& table,
                            const OracleConfig& config) {
  config.validate();
  const std::size_t n_obj = config.num_queries, d = config.dim;
  const std::size_t n = scene.segments.size();
  if (n > n_obj) {
    throw std::invalid_argument("image " + scene.image_id + " has " + std::to_string(n) +
                                " segments but only " + std::to_string(n_obj) +
                                " query slots");
  }
  const std::size_t classes = table.class_embeddings.dim(0);  // x + 1
  if (table.class_embeddings.dim(1) != d || table.instance_offsets.dim(0) < n_obj ||
      table.instance_offsets.dim(1) != d) {
    throw std::invalid_argument("embedding table extents do not match the oracle config");
  }
  const std::size_t no_object = classes - 1;
  const std::size_t hw = scene.height * scene.width;

  Rng rng(mix_seed(config.seed, scene.image_id));
  std::normal_distribution<double> noise(0.0, 1.0);
  std::bernoulli_distribution flip(config.class_flip);

  std::vector<std::size_t> slots(n_obj);
  std::iota(slots.begin(), slots.end(), 0);
  std::shuffle(slots.begin(), slots.end(), rng);

  OracleOutput out;
  auto& qs = out.query_set;
  qs.image_id = scene.image_id;
  qs.queries = Tensor({n_obj, d});
  qs.class_logits = Tensor({n_obj, classes});
  qs.soft_masks = Tensor({n_obj, scene.height, scene.width});
  out.query_of_segment.resize(n);

  auto write_embedding = [&](std::size_t slot, std::size_t class_row, std::size_t offset_row) {
    for (std::size_t k = 0; k < d; ++k) {
      double v = table.class_embeddings.at(class_row, k) + table.instance_offsets.at(offset_row, k);
      if (config.embedding_noise > 0.0) v += config.embedding_noise * noise(rng);
      qs.queries.at(slot, k) = v;
    }
  };

  std::vector<std::size_t> seen_of_class(classes, 0);
  std::vector<bool> taken(n_obj, false);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& seg = scene.segments[i];
    const std::size_t slot = slots[i];
    taken[slot] = true;
    out.query_of_segment[i] = slot;
    const auto cls = static_cast<std::size_t>(seg.object_class - 1);
    write_embedding(slot, cls, seen_of_class[cls]++);

    std::size_t peak = cls;
    if (config.class_flip > 0.0 && flip(rng) && no_object > 1) {
      std::uniform_int_distribution<std::size_t> other(0, no_object - 2);
      peak = other(rng);
      if (peak >= cls) ++peak;
    }
    qs.class_logits.at(slot, peak) = config.class_confidence;

    std::vector<double> mask(hw);
    for (std::size_t p = 0; p < hw; ++p) mask[p] = scene.segment_map[p] == seg.id ? 1.0 : 0.0;
    perturb_boundary(mask, scene.height, scene.width, config.mask_perturbation, rng);
    std::copy(mask.begin(), mask.end(), qs.soft_masks.data() + slot * hw);
  }
  for (std::size_t slot = 0; slot < n_obj; ++slot) {
    if (taken[slot]) continue;
    write_embedding(slot, no_object, slot);
    qs.class_logits.at(slot, no_object) = config.class_confidence;
  }
  return out;
}

Tensor assignment_costs(const PanopticScene& scene, const ObjectQuerySet& qs) {
  const std::size_t n = scene.segments.size(), n_obj = qs.num_queries();
  const std::size_t classes = qs.class_logits.dim(1);
  const std::size_t hw = scene.height * scene.width;
  if (qs.soft_masks.dim(1) != scene.height || qs.soft_masks.dim(2) != scene.width) {
    throw std::invalid_argument("query masks " + shape_string(qs.soft_masks.shape()) +
                                " do not match image " + scene.image_id);
  }
  constexpr double kClamp = 1e-6;
  // Log-softmax of each query's class logits.
  std::vector<double> log_probs(n_obj * classes);
  for (std::size_t q = 0; q < n_obj; ++q) {
    const double* row = qs.class_logits.data() + q * classes;
    const double m = *std::max_element(row, row + classes);
    double s = 0.0;
    for (std::size_t c = 0; c < classes; ++c) s += std::exp(row[c] - m);
    for (std::size_t c = 0; c < classes; ++c) log_probs[q * classes + c] = row[c] - m - std::log(s);
  }
  Tensor cost({n, n_obj});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& seg = scene.segments[i];
    const auto cls = static_cast<std::size_t>(seg.object_class - 1);
    for (std::size_t q = 0; q < n_obj; ++q) {
      const double* prob = qs.soft_masks.data() + q * hw;
      double bce = 0.0, inter = 0.0, psum = 0.0, gsum = 0.0;
      for (std::size_t p = 0; p < hw; ++p) {
        const double g = scene.segment_map[p] == seg.id ? 1.0 : 0.0;
        const double pr = std::clamp(prob[p], kClamp, 1.0 - kClamp);
        bce -= g * std::log(pr) + (1.0 - g) * std::log(1.0 - pr);
        inter += prob[p] * g;
        psum += prob[p];
        gsum += g;
      }
      const double dice = 1.0 - (2.0 * inter + 1.0) / (psum + gsum + 1.0);
      cost.at(i, q) = -log_probs[q * classes + cls] + bce / static_cast<double>(hw) + dice;
    }
  }
  return cost;
}

QueryAssignment assign_queries(const PanopticScene& scene, const ObjectQuerySet& qs) {
  QueryAssignment a;
  const std::size_t n_obj = qs.num_queries();
  if (!scene.segments.empty()) a.query_of_segment = hungarian(assignment_costs(scene, qs));
  std::vector<bool> used(n_obj, false);
  for (auto q : a.query_of_segment) used[q] = true;
  for (std::size_t q = 0; q < n_obj; ++q) {
    if (!used[q]) a.unmatched_queries.push_back(q);
  }
  return a;
}

namespace {
constexpr char kQueryMagic[] = "PNQS";
constexpr std::uint32_t kQueryVersion = 1;
}  // namespace

std::string encode_query_sets(const std::vector<ObjectQuerySet>& sets) {
  BinaryWriter w;
  w.bytes(kQueryMagic);
  w.u32(kQueryVersion);
  w.u64(sets.size());
  for (const auto& s : sets) {
    w.string(s.image_id);
    w.tensor(s.queries);
    w.tensor(s.class_logits);
    w.tensor(s.soft_masks);
  }
  return w.buffer();
}

std::vector<ObjectQuerySet> decode_query_sets(std::string bytes, std::size_t expected_queries,
                                              std::size_t expected_dim) {
  BinaryReader r(std::move(bytes));
  r.expect_magic(kQueryMagic);
  const auto version = r.u32();
  if (version != kQueryVersion) {
    throw std::runtime_error("unsupported query file version " + std::to_string(version));
  }
  const auto count = r.u64();
  std::vector<ObjectQuerySet> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    ObjectQuerySet s;
    s.image_id = r.string();
    s.queries = r.tensor();
    s.class_logits = r.tensor();
    s.soft_masks = r.tensor();
    const auto where = "image " + s.image_id + ": ";
    if (s.queries.rank() != 2 || s.class_logits.rank() != 2 || s.soft_masks.rank() != 3) {
      throw std::runtime_error(where + "query tensors have wrong ranks");
    }
    if (s.queries.dim(0) != expected_queries || s.queries.dim(1) != expected_dim) {
      throw std::runtime_error(where + "queries are " + shape_string(s.queries.shape()) +
                               ", config expects [" + std::to_string(expected_queries) + "," +
                               std::to_string(expected_dim) + "]");
    }
    if (s.class_logits.dim(0) != expected_queries || s.soft_masks.dim(0) != expected_queries) {
      throw std::runtime_error(where + "logit/mask query counts disagree with queries");
    }
    for (double v : s.soft_masks.values()) {
      if (!(v >= 0.0 && v <= 1.0)) throw std::runtime_error(where + "soft mask value outside [0,1]");
    }
    out.push_back(std::move(s));
  }
  if (!r.at_end()) {
    throw std::runtime_error("trailing bytes after query sets at byte " +
                             std::to_string(r.position()));
  }
  return out;
}

void save_query_sets(const std::string& path, const std::vector<ObjectQuerySet>& sets) {
  BinaryWriter w;
  w.bytes(encode_query_sets(sets));
  w.write_file(path);
}

std::vector<ObjectQuerySet> load_precomputed(const std::string& path,
                                             std::size_t expected_queries,
                                             std::size_t expected_dim) {
  auto bytes = read_binary_file(path);
  try {
    return decode_query_sets(std::move(bytes), expected_queries, expected_dim);
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

}  // namespace pairnet
