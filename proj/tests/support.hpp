#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "pairnet/ops.hpp"
#include "pairnet/random.hpp"
#include "pairnet/scene.hpp"
#include "pairnet/tape.hpp"

namespace testing {

using pairnet::Parameter;
using pairnet::ParameterList;
using pairnet::Rng;
using pairnet::Shape;
using pairnet::Tape;
using pairnet::Tensor;
using pairnet::Var;

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = d(rng);
  return t;
}

// Reduces any output to a scalar through fixed random weights, so every
// element of the output contributes to the checked gradient.
inline Var project(Var out, const Tensor& weights) {
  const auto n = out.value().size();
  Tape& tape = out.tape();
  Var row = pairnet::ops::reshape(out, {1, n});
  Var w = tape.constant(weights.reshaped({1, n}));
  Var b = tape.constant(Tensor({1}));
  return pairnet::ops::reshape(pairnet::ops::linear(row, w, b), {1});
}

using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheck {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_tensor = 0;
};

// Central finite differences against the tape gradient for the elements of
// `inputs` and of the parameters in `params`. The error of each tensor is
// |analytic - numeric| / max(|analytic| + |numeric|, floor) in the 2-norm.
// With max_per_tensor > 0 only that many evenly spaced elements are checked.
inline GradCheck gradcheck(const ScalarFn& f, std::vector<Tensor> inputs,
                           const ParameterList& params = {}, double h = 1e-5,
                           double floor = 1e-5, std::size_t max_per_tensor = 0) {
  auto evaluate = [&](bool backward, std::vector<Tensor>* grads) {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
    for (auto* p : params) p->zero_grad();
    Var out = f(tape, leaves);
    if (backward) {
      tape.backward(out);
      for (const auto& l : leaves) grads->push_back(l.grad());
      for (auto* p : params) grads->push_back(p->grad);
    }
    return out.value().item();
  };

  std::vector<Tensor> analytic;
  evaluate(true, &analytic);

  std::vector<Tensor*> targets;
  for (auto& t : inputs) targets.push_back(&t);
  for (auto* p : params) targets.push_back(&p->value);

  GradCheck result;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    Tensor& x = *targets[i];
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    const std::size_t stride =
        max_per_tensor == 0 ? 1 : std::max<std::size_t>(1, x.size() / max_per_tensor);
    for (std::size_t e = 0; e < x.size(); e += stride) {
      const double orig = x[e];
      x[e] = orig + h;
      const double up = evaluate(false, nullptr);
      x[e] = orig - h;
      const double down = evaluate(false, nullptr);
      x[e] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i][e];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
      ++result.checked;
    }
    const double err = std::sqrt(diff2) / std::max(std::sqrt(a2) + std::sqrt(n2), floor);
    if (err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_tensor = i;
    }
  }
  return result;
}

// Largest per-tensor disagreement between central differences with steps h
// and 2h over the parameters in `params`, normalized like gradcheck. Large
// values mean a kink lies within 2h of the point, where finite differences
// are no oracle for the gradient.
inline double fd_step_spread(const ScalarFn& f, const ParameterList& params, double h = 1e-5,
                             double floor = 1e-5, std::size_t max_per_tensor = 0) {
  auto evaluate = [&] {
    Tape tape(false);
    return f(tape, {}).value().item();
  };
  double worst = 0.0;
  for (auto* p : params) {
    Tensor& x = p->value;
    double diff2 = 0.0, a2 = 0.0, b2 = 0.0;
    const std::size_t stride =
        max_per_tensor == 0 ? 1 : std::max<std::size_t>(1, x.size() / max_per_tensor);
    for (std::size_t e = 0; e < x.size(); e += stride) {
      const double orig = x[e];
      double n[2];
      for (int k = 0; k < 2; ++k) {
        const double step = h * (k + 1);
        x[e] = orig + step;
        const double up = evaluate();
        x[e] = orig - step;
        const double down = evaluate();
        n[k] = (up - down) / (2.0 * step);
      }
      x[e] = orig;
      diff2 += (n[0] - n[1]) * (n[0] - n[1]);
      a2 += n[0] * n[0];
      b2 += n[1] * n[1];
    }
    worst = std::max(worst, std::sqrt(diff2) / std::max(std::sqrt(a2) + std::sqrt(b2), floor));
  }
  return worst;
}

// Scene whose segment map is given row by row; classes are per segment id.
inline pairnet::PanopticScene make_scene(std::size_t h, std::size_t w, std::vector<int> map,
                                         const std::vector<int>& classes,
                                         const std::vector<bool>& things = {}) {
  pairnet::PanopticScene s;
  s.image_id = "scene";
  s.height = h;
  s.width = w;
  s.segment_map = std::move(map);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    s.segments.push_back({static_cast<int>(i) + 1, classes[i], things.empty() ? true : things[i]});
  }
  return s;
}

}  // namespace testing
