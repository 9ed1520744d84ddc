/*
 * Copyright 2026 The SPMix Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "spmix/error.hpp"
#include "spmix/tensor.hpp"

using namespace spmix;

namespace {

constexpr double kTol = 1e-4;

Tensor rnd(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  return oracle::random_tensor(std::move(shape), rng, lo, hi);
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("scalar examples") {
  Graph g;
  Var a = g.constant(Tensor({1, 1}, std::vector<double>{2.0}));
  Var b = g.constant(Tensor({1, 1}, std::vector<double>{3.0}));
  CHECK(matmul(a, b).value().data == std::vector<double>{6.0});

  Var s = softmax(g.constant(Tensor({2}, std::vector<double>{0.0, 0.0})));
  CHECK(s.value().data[0] == doctest::Approx(0.5));
  CHECK(s.value().data[1] == doctest::Approx(0.5));

  Var x = g.constant(Tensor({3}, std::vector<double>{5.0, 5.0, 5.0}));
  Var ln = layer_norm(x, g.constant(Tensor({3}, 1.0)), g.constant(Tensor({3}, 0.0)), 1e-5);
  for (double v : ln.value().data) CHECK(std::abs(v) < 1e-9);
}

TEST_CASE("square and relu gradients") {
  {
    Graph g;
    Var x = g.input(Tensor({1}, std::vector<double>{3.0}), true);
    g.backward(mul(x, x));
    CHECK(x.grad()[0] == doctest::Approx(6.0));
  }
  {
    Graph g;
    Var x = g.input(Tensor({2}, std::vector<double>{-1.0, 2.0}), true);
    g.backward(sum(relu(x)));
    CHECK(x.grad() == std::vector<double>{0.0, 1.0});
  }
}

TEST_CASE("parameter leaves accumulate into the tensor") {
  Tensor w({2}, std::vector<double>{1.0, -2.0});
  w.requires_grad = true;
  Graph g;
  Var v = g.parameter(w);
  g.backward(sum(mul(v, v)));
  REQUIRE(w.has_grad());
  CHECK(w.grad == std::vector<double>{2.0, -4.0});
}

TEST_CASE("shape errors name both shapes") {
  Graph g;
  Var a = g.constant(Tensor({2, 3}));
  Var b = g.constant(Tensor({2, 2}));
  try {
    matmul(a, b);
    FAIL("expected ContractViolation");
  } catch (const ContractViolation& e) {
    const std::string what = e.what();
    CHECK(what.find("[2,3]") != std::string::npos);
    CHECK(what.find("[2,2]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, b), ContractViolation);
  CHECK_THROWS_AS(mul(a, g.constant(Tensor({3, 2}))), ContractViolation);
}

TEST_CASE("backward rejects a non-scalar loss") {
  Graph g;
  Var x = g.input(Tensor({2}, 1.0), true);
  CHECK_THROWS_AS(g.backward(scale(x, 2.0)), ContractViolation);
}

TEST_CASE("nodes off the loss path get zero gradient") {
  Graph g;
  Var x = g.input(Tensor({2}, 1.0), true);
  Var y = g.input(Tensor({2}, 1.0), true);
  Var unused = scale(y, 3.0);
  (void)unused;
  g.backward(sum(x));
  CHECK(y.grad() == std::vector<double>{0.0, 0.0});
}

TEST_CASE("backward is deterministic") {
  auto run = [] {
    Graph g;
    Var x = g.input(rnd({4, 5}, 1), true);
    Var w = g.input(rnd({5, 3}, 2), true);
    g.backward(oracle::weighted_sum(softmax(matmul(x, w))));
    return x.grad();
  };
  CHECK(run() == run());
}

TEST_CASE("elementwise gradients match finite differences") {
  using V = std::vector<Var>;
  CHECK(oracle::gradient_check([](Graph&, V& v) { return oracle::weighted_sum(add(v[0], v[1])); },
                               {rnd({3, 4}, 1), rnd({3, 4}, 2)}) < kTol);
  CHECK(oracle::gradient_check([](Graph&, V& v) { return oracle::weighted_sum(add(v[0], v[1])); },
                               {rnd({2, 3, 4}, 1), rnd({4}, 2)}) < kTol);
  CHECK(oracle::gradient_check([](Graph&, V& v) { return oracle::weighted_sum(sub(v[0], v[1])); },
                               {rnd({5}, 3), rnd({5}, 4)}) < kTol);
  CHECK(oracle::gradient_check([](Graph&, V& v) { return oracle::weighted_sum(mul(v[0], v[1])); },
                               {rnd({2, 5}, 5), rnd({2, 5}, 6)}) < kTol);
  CHECK(oracle::gradient_check([](Graph&, V& v) { return oracle::weighted_sum(scale(v[0], -1.7)); },
                               {rnd({6}, 7)}) < kTol);
  // Keep inputs away from the kink.
  Tensor r = rnd({10}, 8, 0.1, 1.0);
  for (std::size_t i = 0; i < r.numel(); i += 2) r.data[i] = -r.data[i];
  CHECK(oracle::gradient_check([](Graph&, V& v) { return oracle::weighted_sum(relu(v[0])); }, {r}) <
        kTol);
}

TEST_CASE("matrix gradients match finite differences") {
  using V = std::vector<Var>;
  CHECK(oracle::gradient_check([](Graph&, V& v) { return oracle::weighted_sum(matmul(v[0], v[1])); },
                               {rnd({3, 4}, 1), rnd({4, 5}, 2)}) < kTol);
  CHECK(oracle::gradient_check(
            [](Graph&, V& v) { return oracle::weighted_sum(batched_matmul(v[0], v[1])); },
            {rnd({2, 3, 4}, 3), rnd({2, 4, 2}, 4)}) < kTol);
  CHECK(oracle::gradient_check(
            [](Graph&, V& v) { return oracle::weighted_sum(batched_matmul(v[0], v[1], true)); },
            {rnd({2, 3, 4}, 5), rnd({2, 5, 4}, 6)}) < kTol);
}

TEST_CASE("conv2d gradients match finite differences") {
  using V = std::vector<Var>;
  CHECK(oracle::gradient_check(
            [](Graph&, V& v) { return oracle::weighted_sum(conv2d(v[0], v[1], v[2], 2, 1)); },
            {rnd({2, 2, 5, 5}, 1), rnd({3, 2, 3, 3}, 2), rnd({3}, 3)}) < kTol);
  CHECK(oracle::gradient_check(
            [](Graph&, V& v) {
              return oracle::weighted_sum(conv2d(v[0], v[1], std::nullopt, 2, 0));
            },
            {rnd({1, 3, 4, 4}, 4), rnd({2, 3, 2, 2}, 5)}) < kTol);
}

TEST_CASE("normalization and reduction gradients match finite differences") {
  using V = std::vector<Var>;
  CHECK(oracle::gradient_check(
            [](Graph&, V& v) { return oracle::weighted_sum(layer_norm(v[0], v[1], v[2])); },
            {rnd({3, 6}, 1), rnd({6}, 2), rnd({6}, 3)}) < kTol);
  CHECK(oracle::gradient_check([](Graph&, V& v) { return oracle::weighted_sum(softmax(v[0])); },
                               {rnd({4, 5}, 4, -3.0, 3.0)}) < kTol);
  CHECK(oracle::gradient_check([](Graph&, V& v) { return oracle::weighted_sum(mean_pool(v[0])); },
                               {rnd({2, 3, 4}, 5)}) < kTol);
  CHECK(oracle::gradient_check([](Graph&, V& v) { return oracle::weighted_sum(l2_normalize(v[0])); },
                               {rnd({3, 4}, 6)}) < kTol);
  const std::vector<int> labels{0, 2, 1};
  CHECK(oracle::gradient_check([&](Graph&, V& v) { return cross_entropy(v[0], labels); },
                               {rnd({3, 3}, 7, -2.0, 2.0)}) < kTol);
  Tensor targets({2, 3}, std::vector<double>{0.2, 0.8, 0.0, 0.5, 0.25, 0.25});
  CHECK(oracle::gradient_check([&](Graph&, V& v) { return cross_entropy_soft(v[0], targets); },
                               {rnd({2, 3}, 8, -2.0, 2.0)}) < kTol);
}

TEST_CASE("layout gradients match finite differences") {
  using V = std::vector<Var>;
  CHECK(oracle::gradient_check(
            [](Graph&, V& v) { return oracle::weighted_sum(reshape(v[0], {3, 4})); },
            {rnd({2, 6}, 1)}) < kTol);
  CHECK(oracle::gradient_check(
            [](Graph&, V& v) {
              return oracle::weighted_sum(merge_heads(split_heads(v[0], 2, 3, 2), 2, 2));
            },
            {rnd({6, 4}, 2)}) < kTol);
  CHECK(oracle::gradient_check(
            [](Graph&, V& v) { return oracle::weighted_sum(split_heads(v[0], 2, 3, 2)); },
            {rnd({6, 4}, 3)}) < kTol);
  CHECK(oracle::gradient_check([](Graph&, V& v) { return oracle::weighted_sum(nchw_to_tokens(v[0])); },
                               {rnd({2, 3, 2, 2}, 4)}) < kTol);
  const std::vector<std::size_t> rows{2, 0, 2};
  CHECK(oracle::gradient_check(
            [&](Graph&, V& v) { return oracle::weighted_sum(gather_rows(v[0], rows)); },
            {rnd({3, 2}, 5)}) < kTol);
  CHECK(oracle::gradient_check(
            [](Graph&, V& v) { return oracle::weighted_sum(concat_rows(v[0], v[1])); },
            {rnd({2, 3}, 6), rnd({1, 3}, 7)}) < kTol);
}

TEST_CASE("layout ops move values as documented") {
  Graph g;
  Tensor x({1, 2, 2, 2});
  for (std::size_t i = 0; i < 8; ++i) x.data[i] = static_cast<double>(i);
  // Token t = (gy, gx) gathers channel values at that grid cell.
  Var t = nchw_to_tokens(g.constant(x));
  CHECK(t.shape() == Shape{1, 4, 2});
  CHECK(t.value().data == std::vector<double>{0, 4, 1, 5, 2, 6, 3, 7});

  Tensor h({2, 4});
  for (std::size_t i = 0; i < 8; ++i) h.data[i] = static_cast<double>(i);
  Var split = split_heads(g.constant(h), 1, 2, 2);
  CHECK(split.shape() == Shape{2, 2, 2});
  CHECK(split.value().data == std::vector<double>{0, 1, 4, 5, 2, 3, 6, 7});
  CHECK(merge_heads(split, 1, 2).value().data == h.data);
}

TEST_CASE("l2_normalize guards the zero vector") {
  Graph g;
  Var z = l2_normalize(g.constant(Tensor({1, 3}, 0.0)));
  for (double v : z.value().data) {
    CHECK(std::isfinite(v));
    CHECK(v == 0.0);
  }
}

}  // TEST_SUITE
