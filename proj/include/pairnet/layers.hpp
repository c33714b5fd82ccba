#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "pairnet/ops.hpp"
#include "pairnet/random.hpp"
#include "pairnet/tape.hpp"

namespace pairnet {

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Tensor fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng);
// Standard normal scaled by 1/sqrt(dim).
Tensor scaled_normal(Shape shape, std::size_t dim, Rng& rng);

class Linear {
 public:
  Linear() = default;
  Linear(std::string name, std::size_t in, std::size_t out, Rng& rng);

  Var operator()(Tape& tape, Var x);
  void collect(ParameterList& out);

  std::size_t in_features() const { return weight_.value.dim(1); }
  std::size_t out_features() const { return weight_.value.dim(0); }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  Parameter weight_;
  Parameter bias_;
};

// Stack of linear layers with ReLU between consecutive layers and none after
// the last one.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string name, const std::vector<std::size_t>& widths, Rng& rng);

  Var operator()(Tape& tape, Var x);
  void collect(ParameterList& out);
  std::vector<Linear>& layers() { return layers_; }

 private:
  std::vector<Linear> layers_;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels,
         std::size_t kernel, Rng& rng);

  Var operator()(Tape& tape, Var x);
  void collect(ParameterList& out);
  Parameter& kernels() { return kernels_; }
  Parameter& bias() { return bias_; }

 private:
  Parameter kernels_;
  Parameter bias_;
};

// Last-axis layer normalization with learnable gain and shift.
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(std::string name, std::size_t dim, double eps = 1e-12);

  Var operator()(Tape& tape, Var x);
  void collect(ParameterList& out);

 private:
  Parameter gain_;
  Parameter shift_;
  double eps_ = 1e-12;
};

struct AttentionOutput {
  Var output;       // [L_q, d]
  Tensor weights;   // [heads, L_q, L_kv], rows sum to 1
};

// Scaled dot-product attention with `heads` heads. Positional encodings, when
// given, are added to the query/key/value inputs before their projections.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::string name, std::size_t dim, std::size_t heads,
                     Rng& rng);

  AttentionOutput operator()(Tape& tape, Var queries, Var keys_values,
                             std::optional<Var> query_pos = std::nullopt,
                             std::optional<Var> key_pos = std::nullopt,
                             std::optional<Var> value_pos = std::nullopt);
  void collect(ParameterList& out);

  std::size_t heads() const { return heads_; }
  Linear& query_proj() { return q_proj_; }
  Linear& key_proj() { return k_proj_; }
  Linear& value_proj() { return v_proj_; }
  Linear& output_proj() { return out_proj_; }

 private:
  std::size_t dim_ = 0;
  std::size_t heads_ = 1;
  Linear q_proj_, k_proj_, v_proj_, out_proj_;
};

}  // namespace pairnet
