#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "json.hpp"
#include "pairnet/random.hpp"
#include "pairnet/scene.hpp"

namespace pairnet {

struct SynthConfig {
  std::size_t train_scenes = 500;
  std::size_t val_scenes = 50;
  std::size_t height = 24;
  std::size_t width = 24;
  std::size_t object_classes = 8;  // x, the last `stuff_classes` are stuff
  std::size_t stuff_classes = 3;
  std::size_t relation_classes = 6;  // y
  std::size_t min_segments = 4;
  std::size_t max_segments = 9;
  double mean_relations = 5.6;
  std::size_t max_relations = 16;
  // Relation class r (1-based) is drawn with probability proportional to
  // r^-skew.
  double skew = 1.0;
  // Fraction of ordered class pairs each relation prefers, and the relative
  // weight of non-preferred pairs.
  double affinity_density = 0.25;
  double affinity_floor = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
};

// Hidden table: weight[r-1][(a-1) * x + (b-1)] for subject class a, object
// class b.
struct AffinityTable {
  std::size_t object_classes = 0;
  std::vector<std::vector<double>> weight;
};

// Field names match the struct members; missing fields keep their defaults
// and unknown fields are rejected.
SynthConfig synth_config_from_json(const nlohmann::json& j);
nlohmann::json synth_config_to_json(const SynthConfig& config);

AffinityTable make_affinity_table(const SynthConfig& config);

// Deterministic in config.seed. Scenes are rectangular tilings covering every
// pixel; the first train_scenes entries form the training split.
Dataset synthesize(const SynthConfig& config);

struct DatasetSplit {
  Dataset train;
  Dataset val;
};

// The last `val_count` scenes become the validation split.
DatasetSplit split_dataset(const Dataset& all, std::size_t val_count);

}  // namespace pairnet
