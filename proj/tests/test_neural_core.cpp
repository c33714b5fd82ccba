#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "pairnet/checkpoint.hpp"
#include "pairnet/layers.hpp"
#include "pairnet/optim.hpp"
#include "support.hpp"

using namespace pairnet;
using testing::gradcheck;
using testing::project;
using testing::random_tensor;

TEST_CASE("tensor rejects inconsistent extents") {
  CHECK_THROWS_AS(Tensor({2, 0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.at(1, 2) == 1.5);
  CHECK(t.all_finite());
  t[0] = std::nan("");
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("tape accumulates gradients through shared nodes") {
  Tape tape;
  Var x = tape.leaf(Tensor({2}, std::vector<double>{1.0, -2.0}));
  Var y = ops::add(x, x);
  Var z = ops::sum(ops::add(y, x));
  tape.backward(z);
  CHECK(x.grad() == Tensor({2}, std::vector<double>{3.0, 3.0}));
}

TEST_CASE("backward requires a scalar root") {
  Tape tape;
  Var x = tape.leaf(Tensor({3}, 1.0));
  CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
}

TEST_CASE("inference tape records no gradient") {
  Rng rng(1);
  Linear l("l", 3, 2, rng);
  Tape tape(false);
  Var out = l(tape, tape.constant(Tensor({1, 3}, 1.0)));
  CHECK_FALSE(out.requires_grad());
}

TEST_CASE("linear identity and bias-only cases") {
  Tape tape;
  Var x = tape.constant(Tensor::matrix(1, 2, {1.0, 2.0}));
  Var eye = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  Var zero_b = tape.constant(Tensor({2}));
  CHECK(ops::linear(x, eye, zero_b).value() == Tensor::matrix(1, 2, {1.0, 2.0}));
  Var zero_w = tape.constant(Tensor({2, 2}));
  Var b = tape.constant(Tensor({2}, std::vector<double>{0.5, -3.0}));
  CHECK(ops::linear(x, zero_w, b).value() == Tensor::matrix(1, 2, {0.5, -3.0}));
  CHECK_THROWS_AS(ops::linear(x, tape.constant(Tensor({2, 3})), zero_b), std::invalid_argument);
}

TEST_CASE("linear gradient matches finite differences") {
  Rng rng(7);
  const Tensor proj = random_tensor({12}, rng);
  auto f = [&](Tape&, const std::vector<Var>& in) {
    return project(ops::linear(in[0], in[1], in[2]), proj);
  };
  const auto r = gradcheck(f, {random_tensor({3, 4}, rng), random_tensor({4, 4}, rng),
                               random_tensor({4}, rng)}, {}, 1e-6);
  CHECK(r.max_relative_error < 1e-6);
}

TEST_CASE("conv2d identity, border clipping and even kernels") {
  Tape tape;
  Rng rng(2);
  const Tensor input = random_tensor({1, 4, 5}, rng);
  Var x = tape.constant(input);
  Var k1 = tape.constant(Tensor({1, 1, 1, 1}, 1.0));
  Var b1 = tape.constant(Tensor({1}));
  CHECK(ops::conv2d(x, k1, b1).value() == input);

  Tensor onehot({1, 5, 5});
  onehot.at(0, 0, 0) = 1.0;
  Var ones = tape.constant(Tensor({1, 1, 3, 3}, 1.0));
  const Tensor out = ops::conv2d(tape.constant(onehot), ones, b1).value();
  for (std::size_t y = 0; y < 5; ++y) {
    for (std::size_t xx = 0; xx < 5; ++xx) {
      CHECK(out.at(0, y, xx) == ((y <= 1 && xx <= 1) ? 1.0 : 0.0));
    }
  }
  CHECK_THROWS_AS(ops::conv2d(x, tape.constant(Tensor({1, 1, 2, 2})), b1), std::invalid_argument);
  CHECK_THROWS_AS(Conv2d("c", 1, 1, 4, rng), std::invalid_argument);
}

TEST_CASE("conv2d with a centered identity kernel is bit-exact identity") {
  Rng rng(4);
  const Tensor input = random_tensor({2, 6, 6}, rng);
  Tensor k({2, 2, 3, 3});
  k.at(0, 0, 4) = 1.0;  // [out 0][in 0][1][1]
  k[(1 * 2 + 1) * 9 + 4] = 1.0;
  Tape tape;
  const Tensor out = ops::conv2d(tape.constant(input), tape.constant(k), tape.constant(Tensor({2}))).value();
  CHECK(out == input);
}

TEST_CASE("conv2d gradient matches finite differences") {
  Rng rng(11);
  const Tensor proj = random_tensor({3 * 6 * 6}, rng);
  auto f = [&](Tape&, const std::vector<Var>& in) {
    return project(ops::conv2d(in[0], in[1], in[2]), proj);
  };
  const auto r = gradcheck(f, {random_tensor({2, 6, 6}, rng), random_tensor({3, 2, 3, 3}, rng),
                               random_tensor({3}, rng)}, {}, 1e-6);
  CHECK(r.max_relative_error < 1e-6);
}

TEST_CASE("activations and normalization") {
  Tape tape;
  CHECK(ops::sigmoid(tape.constant(Tensor::scalar(0.0))).value().item() == 0.5);
  const Tensor s = ops::softmax(tape.constant(Tensor({4}, 3.0)), 0).value();
  for (double v : s.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  const Tensor big = ops::softmax(tape.constant(Tensor({2}, std::vector<double>{1000.0, 0.0})), 0).value();
  CHECK(big[0] == 1.0);
  CHECK(big.all_finite());

  Rng rng(5);
  const Tensor x = random_tensor({3, 16}, rng, -5.0, 5.0);
  const Tensor n = ops::layer_norm(tape.constant(x)).value();
  for (std::size_t r = 0; r < 3; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < 16; ++c) mean += n.at(r, c) / 16.0;
    for (std::size_t c = 0; c < 16; ++c) var += (n.at(r, c) - mean) * (n.at(r, c) - mean) / 16.0;
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(var - 1.0) < 1e-9);
  }
}

TEST_CASE("elementwise and reduction ops pass finite-difference checks") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor proj = random_tensor({12}, rng);
    const Tensor proj_sq = random_tensor({9}, rng);
    const std::vector<std::pair<const char*, testing::ScalarFn>> cases{
        {"sigmoid", [&](Tape&, const std::vector<Var>& in) { return project(ops::sigmoid(in[0]), proj); }},
        {"relu", [&](Tape&, const std::vector<Var>& in) { return project(ops::relu(in[0]), proj); }},
        {"softmax0", [&](Tape&, const std::vector<Var>& in) { return project(ops::softmax(in[0], 0), proj); }},
        {"softmax1", [&](Tape&, const std::vector<Var>& in) { return project(ops::softmax(in[0], 1), proj); }},
        {"log_softmax", [&](Tape&, const std::vector<Var>& in) { return project(ops::log_softmax(in[0]), proj); }},
        {"layer_norm", [&](Tape&, const std::vector<Var>& in) { return project(ops::layer_norm(in[0]), proj); }},
        {"mean", [&](Tape&, const std::vector<Var>& in) { return ops::mean(ops::sigmoid(in[0])); }},
        {"matmul_nt", [&](Tape&, const std::vector<Var>& in) { return project(ops::matmul_nt(in[0], in[1]), proj_sq); }},
        {"cosine", [&](Tape&, const std::vector<Var>& in) { return project(ops::cosine_matrix(in[0], in[1]), proj_sq); }},
    };
    const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
    for (const auto& [name, fn] : cases) {
      CAPTURE(name);
      CHECK(gradcheck(fn, {a, b}).max_relative_error < 1e-4);
    }
  }
}

TEST_CASE("structural ops route gradients to their sources") {
  Rng rng(8);
  const Tensor proj = random_tensor({24}, rng);
  const std::vector<std::size_t> idx{2, 0, 2};
  auto f = [&](Tape&, const std::vector<Var>& in) {
    Var g = ops::gather_rows(in[0], idx);                   // [3,4]
    Var c = ops::concat_rows(g, ops::slice_cols(ops::concat_cols({in[1], in[1]}), 1, 4));  // [6,4]
    return project(ops::add_row(ops::mul_row(c, in[2]), in[2]), proj);
  };
  const auto r = gradcheck(f, {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng),
                               random_tensor({4}, rng)});
  CHECK(r.max_relative_error < 1e-6);
}

TEST_CASE("attention weights, single key and construction errors") {
  Rng rng(3);
  CHECK_THROWS_AS(MultiHeadAttention("a", 6, 4, rng), std::invalid_argument);
  MultiHeadAttention mha("a", 8, 2, rng);
  Tape tape;
  Var q = tape.constant(random_tensor({4, 8}, rng));
  Var kv = tape.constant(random_tensor({5, 8}, rng));
  const auto out = mha(tape, q, kv);
  CHECK(out.weights.shape() == Shape{2, 4, 5});
  for (std::size_t h = 0; h < 2; ++h) {
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 5; ++c) s += out.weights.at(h, r, c);
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }

  Var single = tape.constant(random_tensor({1, 8}, rng));
  const auto one = mha(tape, q, single);
  for (double w : one.weights.values()) CHECK(w == 1.0);
  const Tensor value_row =
      mha.output_proj()(tape, mha.value_proj()(tape, single)).value();
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 8; ++c) CHECK(one.output.value().at(r, c) == doctest::Approx(value_row.at(0, c)).epsilon(1e-12));
  }
}

TEST_CASE("attention gradient covers inputs, positions and parameters") {
  Rng rng(13);
  MultiHeadAttention mha("a", 8, 2, rng);
  ParameterList params;
  mha.collect(params);
  const Tensor proj = random_tensor({32}, rng);
  auto f = [&](Tape& tape, const std::vector<Var>& in) {
    return project(mha(tape, in[0], in[1], in[2], in[3], in[4]).output, proj);
  };
  const auto r = gradcheck(f, {random_tensor({4, 8}, rng), random_tensor({3, 8}, rng),
                               random_tensor({4, 8}, rng), random_tensor({3, 8}, rng),
                               random_tensor({3, 8}, rng)},
                           params);
  CHECK(r.max_relative_error < 1e-5);
}

TEST_CASE("learning rate schedule") {
  OptimizerConfig c;
  CHECK(learning_rate_at(c, 0) == 1e-4);
  CHECK(learning_rate_at(c, 4) == 1e-4);
  CHECK(learning_rate_at(c, 6) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(learning_rate_at(c, 11) == doctest::Approx(1e-6).epsilon(1e-12));
  c.milestones = {5, 5};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.milestones = {5};
  c.decay_factor = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("optimizer step edge cases") {
  Parameter p("p", Tensor({3}, std::vector<double>{1.0, -2.0, 0.5}));
  OptimizerConfig c;
  c.weight_decay = 0.0;
  const Tensor before = p.value;
  optimizer_step({&p}, c, 0);
  CHECK(p.value == before);

  p.grad[1] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_WITH_AS(optimizer_step({&p}, c, 0), doctest::Contains("parameter p"), std::runtime_error);
  CHECK(p.value == before);
}

TEST_CASE("AdamW decreases a scalar quadratic monotonically") {
  Parameter p("w", Tensor::scalar(3.0));
  OptimizerConfig c;
  c.learning_rate = 0.05;
  double last = 9.0;
  for (int step = 0; step < 100; ++step) {
    zero_grads({&p});
    Tape tape;
    Var w = tape.parameter(p);
    Var loss = ops::sum(ops::mul_row(ops::reshape(w, {1}), ops::reshape(w, {1})));
    tape.backward(loss);
    optimizer_step({&p}, c, 0);
    const double now = p.value.item() * p.value.item();
    CHECK(now < last);
    last = now;
  }
}

TEST_CASE("checkpoint round trip is bit exact and validated") {
  Rng rng(9);
  Linear a("layer", 3, 2, rng);
  ParameterList params;
  a.collect(params);
  const auto bytes = encode_checkpoint(params);
  CHECK(bytes.substr(0, 4) == "PNET");
  const auto records = decode_checkpoint(bytes);
  REQUIRE(records.size() == 2);
  CHECK(records[0].name == "layer.weight");
  CHECK(records[0].value == a.weight().value);

  Linear b("layer", 3, 2, rng);
  ParameterList other;
  b.collect(other);
  restore_parameters(records, other);
  CHECK(b.weight().value == a.weight().value);
  CHECK(b.bias().value == a.bias().value);

  CHECK_THROWS_WITH_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)),
                       doctest::Contains("truncated input at byte"), std::runtime_error);
  CHECK_THROWS_AS(decode_checkpoint("XXXX" + bytes.substr(4)), std::runtime_error);

  Linear wrong("layer", 4, 2, rng);
  ParameterList wrong_params;
  wrong.collect(wrong_params);
  CHECK_THROWS_AS(restore_parameters(records, wrong_params), std::exception);

  const auto path = (std::filesystem::temp_directory_path() / "pairnet_ckpt_test.pnet").string();
  save_checkpoint(path, params);
  const auto loaded = load_checkpoint(path);
  CHECK(loaded[1].value == a.bias().value);
  std::filesystem::remove(path);
}

TEST_CASE("forward passes are deterministic") {
  Rng rng(17);
  Mlp mlp("m", {4, 8, 8, 4}, rng);
  const Tensor x = random_tensor({2, 4}, rng);
  Tape t1, t2;
  CHECK(mlp(t1, t1.constant(x)).value() == mlp(t2, t2.constant(x)).value());
}
