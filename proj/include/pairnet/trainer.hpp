#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pairnet/metrics.hpp"
#include "pairnet/model.hpp"
#include "pairnet/optim.hpp"

namespace pairnet {

struct TrainConfig {
  int epochs = 12;
  std::size_t batch_size = 8;
  OptimizerConfig optimizer;
  LossWeights loss_weights;
  RelationLossConfig relation_loss;
  ModelConfig model;
  OracleConfig oracle;  // num_queries and dim follow the model
  std::uint64_t seed = 0;
  std::string output_dir;
  // Ablation: L_ppn with positive weight 1 instead of N^2 / sum(M_gt).
  bool unit_positive_weight = false;
  bool include_pair_score = false;
  std::vector<std::size_t> eval_ks{20, 50, 100};
  bool evaluate_each_epoch = true;

  void validate() const;
  OracleConfig effective_oracle() const;
};

// Settings sized for a single desktop core: N_obj 16, d 32, N_rel 20, two
// decoder layers with four heads, oracle embedding noise 0.1.
TrainConfig desk_config();

nlohmann::json config_to_json(const TrainConfig& config);
// Missing fields keep their defaults; unknown fields are rejected.
TrainConfig config_from_json(const nlohmann::json& j);
TrainConfig load_config(const std::string& path);

struct StepRecord {
  int epoch = 0;
  double total = 0.0;
  double subject = 0.0;
  double object = 0.0;
  double relation = 0.0;
  double ppn = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double learning_rate = 0.0;
  double mean_total = 0.0;
  double mean_ppn = 0.0;
  std::optional<MetricsReport> validation;
};

struct RunRecord {
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::optional<MetricsReport> initial_validation;  // before the first step
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  std::vector<std::string> skipped_images;
  double wall_clock_seconds = 0.0;
};

nlohmann::json run_record_to_json(const RunRecord& record);

// Oracle queries for every scene; scenes with more segments than query slots
// are skipped and reported through `skipped`.
std::vector<PreparedImage> prepare_dataset(const Dataset& data, const TrainConfig& config,
                                           std::vector<std::string>* skipped = nullptr);

struct TrainResult {
  std::unique_ptr<PairNet> model;
  RunRecord record;
  std::vector<double> relation_counts;
};

using ProgressFn = std::function<void(const std::string&)>;

// Deterministic in config.seed. Throws std::runtime_error naming the step
// when a loss becomes non-finite.
TrainResult train(const TrainConfig& config, const Dataset& train_data, const Dataset* val_data,
                  const ProgressFn& progress = {});

// Replaces the model's slot predictions for one image; used by test
// harnesses that wire ground truth into the pipeline.
using SlotOverride = std::function<std::vector<SlotPrediction>(
    const PreparedImage&, const PairNet::Forward&)>;

struct Evaluation {
  MetricsReport report;
  std::vector<ImagePrediction> predictions;
  std::vector<std::vector<RankedTriplet>> ranked;
  std::vector<ObjectQuerySet> query_sets;
};

Evaluation evaluate_model(PairNet& model, const std::vector<PreparedImage>& images,
                          const TrainConfig& config, const std::vector<std::size_t>& ks,
                          bool include_optimal = false, const SlotOverride& override = {});

// Expected pair-R@k of choosing k off-diagonal cells uniformly at random
// under a perfect segmenter, averaged over images with triplets.
double random_pair_baseline(const Dataset& data, std::size_t k, std::size_t num_queries);

// Files written by `train`.
inline constexpr char kCheckpointFile[] = "checkpoint.pnet";
inline constexpr char kConfigFile[] = "config.json";
inline constexpr char kRunFile[] = "run.json";

void save_run(const std::string& dir, PairNet& model, const TrainConfig& config,
              const RunRecord& record);
// Rebuilds the model from a checkpoint and its config snapshot.
std::unique_ptr<PairNet> load_model(const std::string& checkpoint_path, const TrainConfig& config);

// Prediction dump: JSON with ranked triplets per image plus a reference to a
// query-set file holding the masks.
nlohmann::json predictions_to_json(const Evaluation& evaluation, const std::string& mask_file);
void save_predictions(const std::string& json_path, const Evaluation& evaluation);

struct LoadedPredictions {
  std::vector<ImagePrediction> predictions;
  std::vector<ObjectQuerySet> query_sets;  // parallel to predictions
};

LoadedPredictions load_predictions(const std::string& json_path);

// Metrics for a prediction dump against annotated scenes looked up by image
// id. Throws when a predicted image has no annotation.
MetricsReport report_predictions(const LoadedPredictions& loaded, const Dataset& gt,
                                 const std::vector<std::size_t>& ks, bool include_optimal);

struct InspectResult {
  std::vector<std::string> files;
  nlohmann::json sidecar;
};

// Writes Q·Qᵀ, M_rough, σ(M_filtered), M_gt and the mean last-layer
// cross-attention as PGM heatmaps, plus inspect.json with the normalization
// bounds and per-slot argmax labels.
InspectResult inspect_image(PairNet& model, const PreparedImage& image, const Dataset& data,
                            const std::string& out_dir);

}  // namespace pairnet
