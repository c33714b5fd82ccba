#include "pairnet/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace pairnet {

Tensor fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

Tensor scaled_normal(Shape shape, std::size_t dim, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = s * dist(rng);
  return t;
}

Linear::Linear(std::string name, std::size_t in, std::size_t out, Rng& rng)
    : weight_(name + ".weight", fan_in_uniform({out, in}, in, rng)),
      bias_(name + ".bias", Tensor({out})) {}

Var Linear::operator()(Tape& tape, Var x) {
  return ops::linear(x, tape.parameter(weight_), tape.parameter(bias_));
}

void Linear::collect(ParameterList& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

Mlp::Mlp(std::string name, const std::vector<std::size_t>& widths, Rng& rng) {
  if (widths.size() < 2) {
    throw std::invalid_argument("Mlp needs at least input and output widths");
  }
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers_.emplace_back(name + "." + std::to_string(i), widths[i],
                         widths[i + 1], rng);
  }
}

Var Mlp::operator()(Tape& tape, Var x) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i](tape, x);
    if (i + 1 < layers_.size()) x = ops::relu(x);
  }
  return x;
}

void Mlp::collect(ParameterList& out) {
  for (auto& l : layers_) l.collect(out);
}

Conv2d::Conv2d(std::string name, std::size_t in_channels,
               std::size_t out_channels, std::size_t kernel, Rng& rng)
    : kernels_(name + ".kernels",
               fan_in_uniform({out_channels, in_channels, kernel, kernel},
                              in_channels * kernel * kernel, rng)),
      bias_(name + ".bias", Tensor({out_channels})) {
  if (kernel % 2 == 0) {
    throw std::invalid_argument("Conv2d kernel size must be odd, got " +
                                std::to_string(kernel));
  }
}

Var Conv2d::operator()(Tape& tape, Var x) {
  return ops::conv2d(x, tape.parameter(kernels_), tape.parameter(bias_));
}

void Conv2d::collect(ParameterList& out) {
  out.push_back(&kernels_);
  out.push_back(&bias_);
}

LayerNorm::LayerNorm(std::string name, std::size_t dim, double eps)
    : gain_(name + ".gain", Tensor({dim}, 1.0)),
      shift_(name + ".shift", Tensor({dim})),
      eps_(eps) {}

Var LayerNorm::operator()(Tape& tape, Var x) {
  Var y = ops::layer_norm(x, eps_);
  y = ops::mul_row(y, tape.parameter(gain_));
  return ops::add_row(y, tape.parameter(shift_));
}

void LayerNorm::collect(ParameterList& out) {
  out.push_back(&gain_);
  out.push_back(&shift_);
}

MultiHeadAttention::MultiHeadAttention(std::string name, std::size_t dim,
                                       std::size_t heads, Rng& rng)
    : dim_(dim), heads_(heads) {
  if (heads == 0 || dim % heads != 0) {
    throw std::invalid_argument("attention width " + std::to_string(dim) +
                                " is not divisible by " + std::to_string(heads) +
                                " heads");
  }
  q_proj_ = Linear(name + ".q_proj", dim, dim, rng);
  k_proj_ = Linear(name + ".k_proj", dim, dim, rng);
  v_proj_ = Linear(name + ".v_proj", dim, dim, rng);
  out_proj_ = Linear(name + ".out_proj", dim, dim, rng);
}

AttentionOutput MultiHeadAttention::operator()(Tape& tape, Var queries,
                                               Var keys_values,
                                               std::optional<Var> query_pos,
                                               std::optional<Var> key_pos,
                                               std::optional<Var> value_pos) {
  if (queries.shape().size() != 2 || queries.shape()[1] != dim_ ||
      keys_values.shape().size() != 2 || keys_values.shape()[1] != dim_) {
    throw std::invalid_argument(
        "attention expects [L, " + std::to_string(dim_) + "] inputs, got " +
        shape_string(queries.shape()) + " and " +
        shape_string(keys_values.shape()));
  }
  Var q_in = query_pos ? ops::add(queries, *query_pos) : queries;
  Var k_in = key_pos ? ops::add(keys_values, *key_pos) : keys_values;
  Var v_in = value_pos ? ops::add(keys_values, *value_pos) : keys_values;
  Var q = q_proj_(tape, q_in);
  Var k = k_proj_(tape, k_in);
  Var v = v_proj_(tape, v_in);

  const std::size_t lq = queries.shape()[0], lkv = keys_values.shape()[0];
  const std::size_t hd = dim_ / heads_;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  Tensor weights({heads_, lq, lkv});
  std::vector<Var> head_outputs;
  head_outputs.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    Var qh = ops::slice_cols(q, h * hd, hd);
    Var kh = ops::slice_cols(k, h * hd, hd);
    Var vh = ops::slice_cols(v, h * hd, hd);
    Var attn = ops::softmax(ops::scale(ops::matmul_nt(qh, kh), inv_sqrt), 1);
    const auto& a = attn.value();
    std::copy(a.data(), a.data() + a.size(), weights.data() + h * lq * lkv);
    head_outputs.push_back(ops::matmul(attn, vh));
  }
  Var merged = heads_ == 1 ? head_outputs[0] : ops::concat_cols(head_outputs);
  return {out_proj_(tape, merged), std::move(weights)};
}

void MultiHeadAttention::collect(ParameterList& out) {
  q_proj_.collect(out);
  k_proj_.collect(out);
  v_proj_.collect(out);
  out_proj_.collect(out);
}

}  // namespace pairnet
