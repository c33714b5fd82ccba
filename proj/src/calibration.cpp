#include "pairnet/calibration.hpp"

#include <cmath>
#include <stdexcept>

#include "pairnet/metrics.hpp"

namespace pairnet {

double mean_subject_iou(const std::vector<PanopticScene>& scenes,
                        const std::vector<SceneGraph>& graphs, const EmbeddingTable& table,
                        const OracleConfig& config) {
  if (scenes.size() != graphs.size()) {
    throw std::invalid_argument("mean_subject_iou: scene and graph counts differ");
  }
  DetectorTally tally;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto out = oracle_queries(scenes[i], table, config);
    tally.add(scenes[i], graphs[i], out.query_set, assign_queries(scenes[i], out.query_set));
  }
  if (tally.triplets == 0) throw std::invalid_argument("mean_subject_iou: no triplets");
  return tally.subject_iou_sum / static_cast<double>(tally.triplets);
}

Calibration calibrate_mask_perturbation(const std::vector<PanopticScene>& scenes,
                                        const std::vector<SceneGraph>& graphs,
                                        const EmbeddingTable& table, OracleConfig config,
                                        double target_iou, int iterations) {
  if (!(target_iou > 0.0 && target_iou <= 1.0)) {
    throw std::invalid_argument("calibration target IoU must lie in (0, 1]");
  }
  double lo = 0.0, hi = 1.0;
  Calibration best{0.0, 2.0};
  for (int i = 0; i < iterations; ++i) {
    config.mask_perturbation = 0.5 * (lo + hi);
    const double iou = mean_subject_iou(scenes, graphs, table, config);
    if (std::abs(iou - target_iou) < std::abs(best.subject_iou - target_iou)) {
      best = {config.mask_perturbation, iou};
    }
    if (iou > target_iou) {
      lo = config.mask_perturbation;
    } else {
      hi = config.mask_perturbation;
    }
  }
  return best;
}

}  // namespace pairnet
