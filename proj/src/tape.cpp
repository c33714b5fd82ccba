#include "pairnet/tape.hpp"

#include <stdexcept>

namespace pairnet {

Parameter::Parameter(std::string n, Tensor init)
    : name(std::move(n)),
      value(std::move(init)),
      grad(value.shape()),
      moment1(value.shape()),
      moment2(value.shape()) {}

const Tensor& Var::value() const { return tape_->value_of(id_); }

Tensor Var::grad() const { return tape_->grad_copy(id_); }

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::push(std::unique_ptr<Node> node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Tensor value) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  return push(std::move(node));
}

Var Tape::leaf(Tensor value) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return push(std::move(node));
}

Var Tape::parameter(Parameter& p) {
  auto node = std::make_unique<Node>();
  node->value = p.value;
  node->requires_grad = track_gradients_;
  node->param = &p;
  return push(std::move(node));
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents,
                 Backward fn) {
  return record(std::move(value), std::vector<Var>(parents), std::move(fn));
}

Var Tape::record(Tensor value, const std::vector<Var>& parents, Backward fn) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  for (const auto& p : parents) {
    if (&p.tape() != this) {
      throw std::invalid_argument("operand recorded on a different tape");
    }
    node->requires_grad = node->requires_grad || p.requires_grad();
  }
  if (node->requires_grad) node->backward = std::move(fn);
  return push(std::move(node));
}

Tensor& Tape::grad_of(int id) {
  auto& node = *nodes_[id];
  if (node.grad.empty() && !node.value.empty()) {
    node.grad = Tensor(node.value.shape());
  }
  return node.grad;
}

Tensor Tape::grad_copy(int id) const {
  const auto& node = *nodes_[id];
  if (node.grad.empty()) return Tensor(node.value.shape());
  return node.grad;
}

void Tape::backward(const Var& root) {
  if (&root.tape() != this) {
    throw std::invalid_argument("backward root recorded on a different tape");
  }
  if (root.value().size() != 1) {
    throw std::invalid_argument("backward root must be a scalar, got shape " +
                                shape_string(root.shape()));
  }
  for (auto& node : nodes_) node->grad = Tensor();
  grad_of(root.id()).fill(1.0);
  for (int i = root.id(); i >= 0; --i) {
    auto& node = *nodes_[i];
    if (!node.requires_grad || node.grad.empty()) continue;
    if (node.backward) node.backward(*this, node.grad);
    if (node.param != nullptr) node.param->grad.add_scaled(node.grad);
  }
}

}  // namespace pairnet
