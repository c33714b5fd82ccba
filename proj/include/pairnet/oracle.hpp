#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pairnet/scene.hpp"
#include "pairnet/tensor.hpp"

namespace pairnet {

// Segmenter output for one image. Class index c-1 holds object class c; the
// last index is "no object".
struct ObjectQuerySet {
  std::string image_id;
  Tensor queries;      // [N_obj, d]
  Tensor class_logits; // [N_obj, x + 1]
  Tensor soft_masks;   // [N_obj, H, W], values in [0, 1]

  std::size_t num_queries() const { return queries.dim(0); }
  std::size_t dim() const { return queries.dim(1); }
  std::size_t no_object_index() const { return class_logits.dim(1) - 1; }
  // Soft mask of query q thresholded at 0.5.
  BinaryMask binary_mask(std::size_t q) const;
  // Arg-max class index of query q.
  std::size_t predicted_class_index(std::size_t q) const;

  friend bool operator==(const ObjectQuerySet&, const ObjectQuerySet&) = default;
};

struct OracleConfig {
  std::size_t num_queries = 100;
  std::size_t dim = 256;
  double embedding_noise = 0.0;     // sigma of additive Gaussian noise
  double class_flip = 0.0;          // probability the logit peak moves
  double mask_perturbation = 0.0;   // fraction of boundary pixels flipped
  double class_confidence = 6.0;    // peak logit height
  std::uint64_t seed = 0;

  void validate() const;
};

// Fixed embeddings the oracle composes queries from: one row per object
// class plus a final "no object" row, and one offset per query slot.
struct EmbeddingTable {
  Tensor class_embeddings;  // [x + 1, d]
  Tensor instance_offsets;  // [N_obj, d]
};

EmbeddingTable make_embedding_table(std::size_t object_classes, std::size_t dim,
                                    std::size_t num_queries, std::uint64_t seed);

struct OracleOutput {
  ObjectQuerySet query_set;
  // query_of_segment[id - 1] is the slot that encodes segment id.
  std::vector<std::size_t> query_of_segment;
};

// Stands in for a trained segmenter. Throws std::invalid_argument when the
// scene has more segments than query slots.
OracleOutput oracle_queries(const PanopticScene& scene, const EmbeddingTable& table,
                            const OracleConfig& config);

struct QueryAssignment {
  std::vector<std::size_t> query_of_segment;  // indexed by segment id - 1
  std::vector<std::size_t> unmatched_queries; // ascending

  bool has(int segment_id) const {
    return segment_id >= 1 &&
           static_cast<std::size_t>(segment_id) <= query_of_segment.size();
  }
  std::size_t query(int segment_id) const;
};

// Per-(segment, query) cost: class cross-entropy + mean pixel binary
// cross-entropy + Dice loss, equal weights. Rows are segments.
Tensor assignment_costs(const PanopticScene& scene, const ObjectQuerySet& queries);

// Minimum-cost injective segment -> query assignment.
QueryAssignment assign_queries(const PanopticScene& scene, const ObjectQuerySet& queries);

// Precomputed query file layout (little-endian):
//   "PNQS" | u32 version | u64 image count |
//   per image: u64 id length | id | queries | class_logits | soft_masks
// where each tensor is u64 rank | u64 extents | f64 values.
std::string encode_query_sets(const std::vector<ObjectQuerySet>& sets);
std::vector<ObjectQuerySet> decode_query_sets(std::string bytes,
                                              std::size_t expected_queries,
                                              std::size_t expected_dim);
void save_query_sets(const std::string& path, const std::vector<ObjectQuerySet>& sets);
std::vector<ObjectQuerySet> load_precomputed(const std::string& path,
                                             std::size_t expected_queries,
                                             std::size_t expected_dim);

}  // namespace pairnet
