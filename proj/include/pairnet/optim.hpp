#pragma once

#include <cstddef>
#include <vector>

#include "pairnet/tape.hpp"

namespace pairnet {

struct OptimizerConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<int> milestones{5, 10};
  double decay_factor = 0.1;

  void validate() const;
};

// Step schedule: initial rate times decay_factor^(number of milestones <=
// epoch). Epochs are zero-based.
double learning_rate_at(const OptimizerConfig& config, int epoch);

// AdamW with decoupled weight decay. Throws std::runtime_error naming the
// parameter if any gradient is non-finite; no parameter is modified in that
// case.
void optimizer_step(const ParameterList& params, const OptimizerConfig& config,
                    int epoch);

void zero_grads(const ParameterList& params);

}  // namespace pairnet
