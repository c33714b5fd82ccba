#include "pairnet/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pairnet {

void OptimizerConfig::validate() const {
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
    throw std::invalid_argument("decay factor must lie in (0, 1]");
  }
  for (std::size_t i = 1; i < milestones.size(); ++i) {
    if (milestones[i] <= milestones[i - 1]) {
      throw std::invalid_argument("milestones must be strictly increasing");
    }
  }
  if (!(learning_rate > 0.0) || weight_decay < 0.0 || epsilon <= 0.0 ||
      beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw std::invalid_argument("invalid optimizer hyperparameters");
  }
}

double learning_rate_at(const OptimizerConfig& config, int epoch) {
  double lr = config.learning_rate;
  for (int m : config.milestones) {
    if (m <= epoch) lr *= config.decay_factor;
  }
  return lr;
}

void optimizer_step(const ParameterList& params, const OptimizerConfig& config,
                    int epoch) {
  for (const Parameter* p : params) {
    if (!p->grad.all_finite()) {
      throw std::runtime_error("non-finite gradient in parameter " + p->name);
    }
  }
  const double lr = learning_rate_at(config, epoch);
  for (Parameter* p : params) {
    p->step += 1;
    const double t = static_cast<double>(p->step);
    const double bc1 = 1.0 - std::pow(config.beta1, t);
    const double bc2 = 1.0 - std::pow(config.beta2, t);
    const double decay = 1.0 - lr * config.weight_decay;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      double& m = p->moment1[i];
      double& v = p->moment2[i];
      m = config.beta1 * m + (1.0 - config.beta1) * g;
      v = config.beta2 * v + (1.0 - config.beta2) * g * g;
      const double update = (m / bc1) / (std::sqrt(v / bc2) + config.epsilon);
      p->value[i] = p->value[i] * decay - lr * update;
    }
  }
}

void zero_grads(const ParameterList& params) {
  for (Parameter* p : params) p->zero_grad();
}

}  // namespace pairnet
