#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "pairnet/tensor.hpp"

namespace pairnet {

// A trainable tensor with its accumulated gradient and AdamW moment state.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor init);

  std::string name;
  Tensor value;
  Tensor grad;
  Tensor moment1;
  Tensor moment2;
  std::int64_t step = 0;

  void zero_grad() { grad.fill(0.0); }
};

using ParameterList = std::vector<Parameter*>;

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape
// lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  // Gradient after Tape::backward; zero-filled if the node was not reached.
  Tensor grad() const;
  bool requires_grad() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Records a computation graph for one forward pass and replays it in reverse
// to accumulate gradients. Nodes are only appended, so ids are topologically
// ordered.
class Tape {
 public:
  // Receives the node's output gradient; accumulates into parents via
  // Tape::grad_of.
  using Backward = std::function<void(Tape&, const Tensor&)>;

  Tape() = default;
  // With track_gradients false, parameters enter as constants and no backward
  // closures are kept.
  explicit Tape(bool track_gradients) : track_gradients_(track_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor value);
  // Backward adds this node's gradient into p.grad.
  Var parameter(Parameter& p);

  Var record(Tensor value, std::initializer_list<Var> parents, Backward fn);
  Var record(Tensor value, const std::vector<Var>& parents, Backward fn);

  // Seeds d(root)/d(root) = 1; root must hold a single value.
  void backward(const Var& root);

  const Tensor& value_of(int id) const { return nodes_[id]->value; }
  bool requires_grad(int id) const { return nodes_[id]->requires_grad; }
  // Mutable gradient buffer, allocated zero-filled on first use.
  Tensor& grad_of(int id);
  Tensor grad_copy(int id) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
    Parameter* param = nullptr;
  };

  Var push(std::unique_ptr<Node> node);

  std::vector<std::unique_ptr<Node>> nodes_;
  bool track_gradients_ = true;
};

}  // namespace pairnet
