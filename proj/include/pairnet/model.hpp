#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pairnet/metrics.hpp"
#include "pairnet/oracle.hpp"
#include "pairnet/pair_proposal.hpp"
#include "pairnet/relation_fusion.hpp"
#include "pairnet/scene.hpp"

namespace pairnet {

struct ModelConfig {
  std::size_t object_classes = 8;  // x
  std::size_t relation_classes = 6;  // y
  std::size_t num_queries = 100;  // N_obj
  std::size_t dim = 256;  // d
  std::size_t num_relation_queries = 100;  // N_rel = k
  std::size_t decoder_layers = 6;
  std::size_t heads = 8;
  std::size_t ffn_multiplier = 4;
  LearnerKind learner = LearnerKind::kCnnTiny;
  std::size_t learner_channels = 0;
  std::size_t kernel = 7;

  void validate() const;
};

// Pair-Net on top of a fixed segmenter: PPN, relation decoder and relation
// head. Holds its parameters in place, so it is neither copied nor moved.
class PairNet {
 public:
  PairNet(const ModelConfig& config, std::uint64_t seed);
  PairNet(const PairNet&) = delete;
  PairNet& operator=(const PairNet&) = delete;

  struct Forward {
    Var q_obj;
    Var e_sub, e_obj;
    Var rough;     // M_rough
    Var filtered;  // M_filtered logits
    TopKSelection selection;
    Var q_pair;
    RelationDecoder::Result decoded;
    Var relation_logits;  // [N_rel, y + 1]
  };

  Forward forward(Tape& tape, const ObjectQuerySet& queries);
  ParameterList parameters();
  const ModelConfig& config() const { return config_; }
  PairProposalNetwork& ppn() { return ppn_; }
  RelationDecoder& decoder() { return decoder_; }

 private:
  ModelConfig config_;
  Rng rng_;
  PairProposalNetwork ppn_;
  RelationDecoder decoder_;
  RelationHead head_;
};

// Oracle output and supervision for one annotated image.
struct PreparedImage {
  const PanopticScene* scene = nullptr;
  const SceneGraph* graph = nullptr;
  ObjectQuerySet queries;
  QueryAssignment assignment;
  Tensor gt_matrix;  // M_gt
  std::vector<TripletTarget> targets;
};

PreparedImage prepare_image(const PanopticScene& scene, const SceneGraph& graph,
                            ObjectQuerySet queries);

struct ImageLoss {
  Var total;
  double subject = 0.0;
  double object = 0.0;
  double relation = 0.0;
  double ppn = 0.0;
  std::vector<std::size_t> relation_targets;  // per slot
};

struct LossOptions {
  LossWeights weights;
  // Replaces the dynamic positive weight of L_ppn when set.
  std::optional<double> ppn_positive_weight;
};

// Composite loss of one image. The segmenter is frozen, so the subject and
// object terms are constants and the λ_original term is absent.
ImageLoss image_loss(Tape& tape, PairNet& model, const PreparedImage& image,
                     const RelationLoss& relation_loss, const LossOptions& options);

// Slot predictions with class distributions from the segmenter logits and
// relation distributions from the relation head.
std::vector<SlotPrediction> slot_predictions(const PairNet::Forward& forward,
                                             const ObjectQuerySet& queries);

// Converts ranked triplets to the metric input, masks thresholded from the
// query soft masks.
ImagePrediction to_image_prediction(const ObjectQuerySet& queries,
                                    const std::vector<RankedTriplet>& ranked);

}  // namespace pairnet
