#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pairnet/layers.hpp"
#include "pairnet/oracle.hpp"
#include "pairnet/scene.hpp"

namespace pairnet {

enum class LearnerKind { kCnnTiny, kCnnBase, kMlp };

LearnerKind parse_learner_kind(const std::string& name);
std::string learner_kind_name(LearnerKind kind);

struct PairProposalConfig {
  std::size_t num_queries = 100;
  std::size_t dim = 256;
  LearnerKind learner = LearnerKind::kCnnTiny;
  // Inner width of the matrix learner; 0 selects 64 for cnn-tiny and mlp,
  // 256 for cnn-base.
  std::size_t learner_channels = 0;
  std::size_t kernel = 7;

  std::size_t inner_width() const;
};

// Subject/object projectors plus the matrix learner that turns the rough
// cosine pair matrix into pair logits.
class PairProposalNetwork {
 public:
  PairProposalNetwork(const PairProposalConfig& config, Rng& rng);

  struct Embeddings {
    Var subject;  // E_sub [N_obj, d]
    Var object;   // E_obj [N_obj, d]
  };

  Embeddings project(Tape& tape, Var q_obj);
  // Logit matrix with the extents of `rough`.
  Var matrix_learner(Tape& tape, Var rough);
  void collect(ParameterList& out);

  const PairProposalConfig& config() const { return config_; }
  Mlp& subject_projector() { return subject_proj_; }
  Mlp& object_projector() { return object_proj_; }
  std::vector<Conv2d>& conv_layers() { return convs_; }

 private:
  PairProposalConfig config_;
  Mlp subject_proj_;
  Mlp object_proj_;
  std::vector<Conv2d> convs_;  // cnn variants
  Mlp row_mlp_;                // mlp variant, applied to each matrix row
};

// Cosine similarity M[i,j] of E_sub row i and E_obj row j, norms clamped at
// 1e-8.
Var rough_matrix(Var e_sub, Var e_obj);

// Binary [N_obj, N_obj] matrix with a 1 at (q(subject), q(object)) for every
// triplet. Throws naming the triplet when a segment has no assigned query.
Tensor build_gt_matrix(const QueryAssignment& assignment, const SceneGraph& graph,
                       std::size_t num_queries);

// Ratio of cell count to positive count; 0 when the matrix has no positive.
double pair_positive_weight(const Tensor& gt);

// Positive-weighted BCE over all cells. Without an override the weight is
// pair_positive_weight(gt).
Var ppn_loss(Var logits, const Tensor& gt,
             std::optional<double> positive_weight_override = std::nullopt);

struct PairCell {
  std::size_t subject = 0;
  std::size_t object = 0;
  double score = 0.0;
  friend bool operator==(const PairCell&, const PairCell&) = default;
};

struct TopKSelection {
  std::vector<PairCell> cells;  // descending score, ties in row-major order

  std::vector<std::size_t> subjects() const;
  std::vector<std::size_t> objects() const;
};

// The k highest off-diagonal cells. Throws when k exceeds N^2 - N.
TopKSelection top_k_pairs(const Tensor& logits, std::size_t k);

// Q_s[t] = Q_obj[subject_t], Q_o[t] = Q_obj[object_t].
std::pair<Var, Var> select_pairs(Var q_obj, const TopKSelection& selection);

}  // namespace pairnet
