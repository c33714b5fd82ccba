#pragma once

#include <cstddef>
#include <vector>

#include "pairnet/oracle.hpp"
#include "pairnet/scene.hpp"

namespace pairnet {

// Mean IoU between each triplet subject's assigned query mask and its ground
// truth mask, over all triplets of the given scenes.
double mean_subject_iou(const std::vector<PanopticScene>& scenes,
                        const std::vector<SceneGraph>& graphs, const EmbeddingTable& table,
                        const OracleConfig& config);

struct Calibration {
  double mask_perturbation = 0.0;
  double subject_iou = 1.0;
};

// Binary search on the boundary perturbation rate so that mean_subject_iou
// approaches target_iou.
Calibration calibrate_mask_perturbation(const std::vector<PanopticScene>& scenes,
                                        const std::vector<SceneGraph>& graphs,
                                        const EmbeddingTable& table, OracleConfig config,
                                        double target_iou, int iterations = 20);

}  // namespace pairnet
