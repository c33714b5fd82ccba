#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pairnet/layers.hpp"

namespace pairnet {

// Q_pair = [Q_s; Q_o], subjects in the first k rows.
Var concat_pairs(Var q_s, Var q_o);

struct RelationDecoderConfig {
  std::size_t num_relation_queries = 100;
  std::size_t dim = 256;
  std::size_t layers = 6;
  std::size_t heads = 8;
  std::size_t ffn_multiplier = 4;
};

// Pre-norm decoder layer: self-attention, cross-attention to the pair
// queries, feed-forward, each wrapped in a residual connection.
class DecoderLayer {
 public:
  DecoderLayer() = default;
  DecoderLayer(const std::string& name, std::size_t dim, std::size_t heads,
               std::size_t ffn_width, Rng& rng);

  struct Output {
    Var target;
    Tensor cross_attention;  // [heads, N_rel, 2k]
  };

  Output operator()(Tape& tape, Var target, Var memory, Var query_pos, Var key_pos,
                    Var value_pos);
  void collect(ParameterList& out);

  MultiHeadAttention& self_attention() { return self_attn_; }
  MultiHeadAttention& cross_attention() { return cross_attn_; }
  Linear& ffn_out() { return ffn2_; }

 private:
  MultiHeadAttention self_attn_, cross_attn_;
  LayerNorm norm1_, norm2_, norm3_;
  Linear ffn1_, ffn2_;
};

class RelationDecoder {
 public:
  RelationDecoder(const RelationDecoderConfig& config, Rng& rng);

  struct Result {
    Var decoded;                                // [N_rel, d]
    std::vector<Tensor> cross_attention;        // one [heads, N_rel, 2k] per layer
  };

  // q_pair must be [2 * N_rel, d].
  Result decode(Tape& tape, Var q_pair);
  void collect(ParameterList& out);

  const RelationDecoderConfig& config() const { return config_; }
  std::vector<DecoderLayer>& layers() { return layers_; }
  Parameter& relation_queries() { return queries_; }

 private:
  RelationDecoderConfig config_;
  Parameter queries_;     // Q_r
  Parameter query_pos_;   // added to Q_r before query/key projections
  Parameter key_pos_;     // added to Q_pair before key projections
  Parameter value_pos_;   // added to Q_pair before value projections
  std::vector<DecoderLayer> layers_;
};

// Linear classifier d -> y + 1; index 0 is "no relation".
class RelationHead {
 public:
  RelationHead(std::size_t dim, std::size_t relation_classes, Rng& rng);
  Var operator()(Tape& tape, Var decoded) { return linear_(tape, decoded); }
  void collect(ParameterList& out) { linear_.collect(out); }

 private:
  Linear linear_;
};

// One ground-truth triplet expressed as 0-based logit indices: subject and
// object classes index the object logits, relation indexes the relation
// logits (>= 1).
struct TripletTarget {
  std::size_t subject_class = 0;
  std::size_t object_class = 0;
  std::size_t relation_class = 0;
};

// Hungarian matching of ground-truth triplets to prediction slots. Cost of
// (g, t) is the summed negative log-probabilities of the three ground-truth
// classes in slot t. Returns the slot of every ground-truth triplet; throws if
// there are more triplets than slots.
std::vector<std::size_t> match_triplets(const Tensor& subject_log_probs,
                                        const Tensor& object_log_probs,
                                        const Tensor& relation_log_probs,
                                        std::span<const TripletTarget> targets);

// Relation targets per slot: matched slots get their triplet's relation,
// all others class 0.
std::vector<std::size_t> slot_relation_targets(std::size_t slots,
                                               std::span<const std::size_t> slot_of_target,
                                               std::span<const TripletTarget> targets);

enum class RelationLossKind { kCrossEntropy, kFocal, kSeesaw };

RelationLossKind parse_relation_loss(const std::string& name);
std::string relation_loss_name(RelationLossKind kind);

struct RelationLossConfig {
  RelationLossKind kind = RelationLossKind::kSeesaw;
  double focal_gamma = 2.0;
  double seesaw_p = 0.8;
  double seesaw_q = 2.0;
  // Class left out of the count-based mitigation; none when unset.
  std::optional<std::size_t> background_class = 0;
};

// Mitigation factor for a sample of class `true_count` against a negative
// class with `negative_count` occurrences; counts are clamped to >= 1.
double seesaw_mitigation(double true_count, double negative_count, double p);

// Relation classification loss. Seesaw keeps cumulative class counts that
// grow with every observe() call.
class RelationLoss {
 public:
  RelationLoss(const RelationLossConfig& config, std::size_t classes);

  void observe(std::span<const std::size_t> targets);
  // Denominator weights S[row, j] of the seesaw loss, detached from the graph.
  Tensor seesaw_weights(const Tensor& logits, std::span<const std::size_t> targets) const;
  Var operator()(Var logits, std::span<const std::size_t> targets) const;

  const std::vector<double>& counts() const { return counts_; }
  void set_counts(std::vector<double> counts);
  const RelationLossConfig& config() const { return config_; }

 private:
  RelationLossConfig config_;
  std::vector<double> counts_;
};

struct LossWeights {
  double subject = 4.0;
  double object = 4.0;
  double relation = 2.0;
  double ppn = 5.0;
  double original = 1.0;
};

struct LossTerms {
  Var subject;
  Var object;
  Var relation;
  Var ppn;
  std::optional<Var> original;  // absent under the object-query oracle
};

Var total_loss(const LossTerms& terms, const LossWeights& weights);

// Per-slot relation prediction before ranking.
struct SlotPrediction {
  std::size_t slot = 0;
  std::size_t subject_query = 0;
  std::size_t object_query = 0;
  std::vector<double> subject_probs;   // x + 1, last = no object
  std::vector<double> object_probs;    // x + 1
  std::vector<double> relation_probs;  // y + 1, first = no relation
  double pair_score = 1.0;             // optional PPN factor
};

struct RankedTriplet {
  std::size_t slot = 0;
  std::size_t subject_query = 0;
  std::size_t object_query = 0;
  int subject_class = 0;   // 1-based
  int object_class = 0;    // 1-based
  int relation_class = 0;  // 1-based
  double score = 0.0;
};

// Each slot is scored by the product of its subject, object and relation
// maximum probabilities over non-background classes (times pair_score when
// include_pair_score). Sorted by descending score, ties by slot index.
std::vector<RankedTriplet> rank_triplets(const std::vector<SlotPrediction>& slots,
                                         bool include_pair_score = false);

}  // namespace pairnet
