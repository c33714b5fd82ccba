#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pairnet/oracle.hpp"
#include "pairnet/scene.hpp"

namespace pairnet {

// |a ∩ b| / |a ∪ b|. Throws on extent mismatch or when both masks are empty.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

struct ScoredTriplet {
  std::size_t subject_mask = 0;  // index into ImagePrediction::masks
  std::size_t object_mask = 0;
  int subject_class = 0;
  int object_class = 0;
  int relation_class = 0;
  double score = 0.0;
};

// Ranked triplets of one image; masks are typically one per object query.
struct ImagePrediction {
  std::string image_id;
  std::vector<BinaryMask> masks;
  std::vector<ScoredTriplet> triplets;
};

enum class ClaimMode { kGreedy, kOptimal };

struct MatchOptions {
  double iou_threshold = 0.5;
  bool require_relation = true;  // false gives pair recall
  ClaimMode mode = ClaimMode::kGreedy;
};

// Hit flag per ground-truth triplet after claiming with the top-k
// predictions. Greedy claims in rank order, each prediction taking the first
// eligible unclaimed triplet; optimal takes a maximum bipartite matching.
std::vector<bool> match_image(const ImagePrediction& prediction, const PanopticScene& scene,
                              const SceneGraph& graph, std::size_t k,
                              const MatchOptions& options = {});

// |hits| / |GT| for one image; nullopt when the image has no triplet.
std::optional<double> image_recall(const ImagePrediction& prediction, const PanopticScene& scene,
                                   const SceneGraph& graph, std::size_t k,
                                   const MatchOptions& options = {});

enum class PairCategory { kThingThing = 0, kThingStuff = 1, kStuffThing = 2, kStuffStuff = 3 };
std::string category_name(PairCategory c);
PairCategory triplet_category(const PanopticScene& scene, const Triplet& t);

struct DetectorTally {
  double subject_iou_sum = 0.0;
  double object_iou_sum = 0.0;
  std::size_t subject_hits = 0;
  std::size_t object_hits = 0;
  std::size_t triplets = 0;

  void add(const PanopticScene& scene, const SceneGraph& graph, const ObjectQuerySet& queries,
           const QueryAssignment& assignment, double threshold = 0.5);
};

// Per-pixel argmax over query soft masks among queries not classified as
// no-object; pixels whose best score is below 0.5 stay void (segment id 0).
// Segment ids are query index + 1.
PanopticScene panoptic_prediction(const ObjectQuerySet& queries);

struct PqTally {
  struct ClassTally {
    double iou_sum = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0;
  };
  std::map<int, ClassTally> classes;

  void add(const PanopticScene& prediction, const PanopticScene& gt);
  // Mean over classes with any TP, FP or FN; 0 when there are none.
  double value() const;
};

double panoptic_quality(const PanopticScene& prediction, const PanopticScene& gt);

struct EvaluationImage {
  const PanopticScene* scene = nullptr;
  const SceneGraph* graph = nullptr;
  const ImagePrediction* prediction = nullptr;
  const ObjectQuerySet* queries = nullptr;       // enables PQ
  const QueryAssignment* assignment = nullptr;   // enables detector metrics
};

struct EvaluationOptions {
  std::vector<std::size_t> ks{20, 50, 100};
  double iou_threshold = 0.5;
  std::size_t relation_classes = 0;
  bool include_optimal = false;
};

struct MetricsReport {
  std::size_t images = 0;
  std::vector<std::size_t> ks;
  std::map<std::size_t, double> recall;
  std::map<std::size_t, double> mean_recall;
  std::map<std::size_t, double> pair_recall;
  std::map<std::size_t, double> optimal_recall;       // only with include_optimal
  std::map<std::size_t, double> optimal_pair_recall;  // only with include_optimal
  // Per relation class (1-based index r at position r - 1); absent classes
  // are nullopt.
  std::map<std::size_t, std::vector<std::optional<double>>> class_recall;
  // TT, TS, ST, SS; nullopt when the category has no ground truth.
  std::map<std::size_t, std::array<std::optional<double>, 4>> category_recall;
  std::optional<double> subject_iou, object_iou, subject_recall50, object_recall50;
  std::optional<double> pq;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

MetricsReport evaluate_predictions(std::span<const EvaluationImage> images,
                                   const EvaluationOptions& options);

nlohmann::json report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);
std::string report_table(const MetricsReport& report);

}  // namespace pairnet
