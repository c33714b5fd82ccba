#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pairnet/tape.hpp"

// Differentiable operations recorded on a Tape. Each op checks its operand
// shapes and throws std::invalid_argument with a diagnostic on mismatch.
namespace pairnet::ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var x, double factor);
// x[..., n] + row[n], broadcast over all leading axes.
Var add_row(Var x, Var row);
// x[..., n] * row[n], broadcast over all leading axes.
Var mul_row(Var x, Var row);
Var reshape(Var x, Shape shape);

// a[n,k] * b[k,m]
Var matmul(Var a, Var b);
// a[n,k] * b[m,k]^T
Var matmul_nt(Var a, Var b);

// input[..., in] * weights[out, in]^T + bias[out]
Var linear(Var input, Var weights, Var bias);

// Same-padded stride-1 convolution. input [C_in,H,W], kernels
// [C_out,C_in,k,k] with odd k, bias [C_out].
Var conv2d(Var input, Var kernels, Var bias);

Var relu(Var x);
Var sigmoid(Var x);
Var softmax(Var x, std::size_t axis);
Var log_softmax(Var x);  // along the last axis
// Normalizes over the last axis to zero mean and unit variance.
Var layer_norm(Var x, double eps = 1e-12);

// Pairwise cosine similarity of the rows of a[n,d] and b[m,d]; row norms are
// clamped below at eps.
Var cosine_matrix(Var a, Var b, double eps = 1e-8);

// Rows x[idx[t]] for each t; repeated indices accumulate gradient.
Var gather_rows(Var x, std::span<const std::size_t> indices);
// Stacks a[n,d] on top of b[m,d].
Var concat_rows(Var a, Var b);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var concat_cols(const std::vector<Var>& parts);

Var sum(Var x);
Var mean(Var x);
// sum_i weights[i] * terms[i], every term a scalar.
Var weighted_sum(const std::vector<Var>& terms, std::span<const double> weights);

// -mean over cells of [p*y*log sig(x) + (1-y)*log(1-sig(x))], evaluated with
// stable log-sigmoid forms.
Var positive_weighted_bce(Var logits, const Tensor& targets,
                          double positive_weight);

// Cross-entropy with per-entry multiplicative weights on the softmax
// denominator: mean over rows of
//   -z[t] + log(sum_j w[j] exp(z[j])),
// where w is a non-negative [rows, classes] constant with w[t] = 1. With all
// weights 1 this is plain cross-entropy.
Var weighted_softmax_cross_entropy(Var logits,
                                   std::span<const std::size_t> targets,
                                   const Tensor& denominator_weights);
Var cross_entropy(Var logits, std::span<const std::size_t> targets);
// mean over rows of -(1 - p_t)^gamma * log p_t.
Var focal_cross_entropy(Var logits, std::span<const std::size_t> targets,
                        double gamma);

}  // namespace pairnet::ops
