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
#include <numeric>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "spmix/encoder.hpp"
#include "spmix/error.hpp"

using namespace spmix;

namespace {

EncoderConfig small_config() {
  EncoderConfig config;
  config.input_size = 16;
  config.grid = 2;
  config.dim = 8;
  config.heads = 2;
  config.depth = 1;
  config.projection_dim = 4;
  config.stem_channels1 = 4;
  config.stem_channels2 = 4;
  return config;
}

Tensor token_tensor(std::size_t b, std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  return oracle::random_tensor({b, n, d}, rng);
}

Tensor forward_features(ParameterSet& params, const EncoderConfig& config, const Tensor& tokens) {
  Graph g;
  BoundParameters bound(g, params);
  return transformer_forward(bound, config, g.constant(tokens)).value();
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("full-scale stem gives 196 tokens of width 768") {
  EncoderConfig config = EncoderConfig::full_scale();
  config.depth = 0;
  ParameterSet params = init_encoder_params(config, 1);
  Graph g(GraphOptions{.check_finite = false, .no_grad = true});
  BoundParameters bound(g, params);
  const std::vector<ImageTensor> images{ImageTensor(224, 224, 3, 0.5)};
  Var tokens = stem_forward(bound, config, g.constant(images_to_batch(images)));
  CHECK(tokens.shape() == Shape{1, 196, 768});
}

TEST_CASE("zero image through a zero final stem layer gives zero tokens") {
  EncoderConfig config = small_config();
  ParameterSet params = init_encoder_params(config, 2);
  for (const char* name : {"stem.patch.weight", "stem.patch.bias"}) {
    auto& t = params.get(name);
    std::fill(t.data.begin(), t.data.end(), 0.0);
  }
  Graph g;
  BoundParameters bound(g, params);
  const std::vector<ImageTensor> images{ImageTensor(16, 16, 3, 0.0)};
  Var tokens = stem_forward(bound, config, g.constant(images_to_batch(images)));
  for (double v : tokens.value().data) CHECK(v == 0.0);
}

TEST_CASE("stem rejects the wrong input size") {
  EncoderConfig config = small_config();
  ParameterSet params = init_encoder_params(config, 3);
  Graph g;
  BoundParameters bound(g, params);
  const std::vector<ImageTensor> images{ImageTensor(8, 8, 3, 0.0)};
  CHECK_THROWS_AS(stem_forward(bound, config, g.constant(images_to_batch(images))),
                  ContractViolation);
}

TEST_CASE("shifting by one patch permutes patchify tokens") {
  EncoderConfig config = small_config();
  config.stem = StemKind::kPatchify;
  config.input_size = 32;
  config.grid = 2;
  ParameterSet params = init_encoder_params(config, 4);
  Rng rng(5);
  ImageTensor image = oracle::random_image(32, 32, 3, rng);
  // Circular shift right by one patch (16 px).
  ImageTensor shifted(32, 32, 3);
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x)
      for (std::size_t c = 0; c < 3; ++c) shifted.at(y, (x + 16) % 32, c) = image.at(y, x, c);
  const std::vector<ImageTensor> batch{image, shifted};
  Graph g;
  BoundParameters bound(g, params);
  const Tensor tokens = stem_forward(bound, config, g.constant(images_to_batch(batch))).value();
  const std::size_t n = 4, d = config.dim;
  for (std::size_t gy = 0; gy < 2; ++gy) {
    for (std::size_t gx = 0; gx < 2; ++gx) {
      const std::size_t src = gy * 2 + gx, dst = gy * 2 + (gx + 1) % 2;
      for (std::size_t k = 0; k < d; ++k) {
        CHECK(tokens.data[n * d + dst * d + k] == doctest::Approx(tokens.data[src * d + k]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("pooled output ignores token order without positional embedding") {
  EncoderConfig config = small_config();
  config.positional_embedding = false;
  config.grid = 3;
  config.input_size = 24;
  ParameterSet params = init_encoder_params(config, 6);
  Tensor tokens = token_tensor(1, 9, 8, 7);
  Tensor permuted = tokens;
  const std::vector<std::size_t> order{4, 0, 8, 2, 1, 7, 3, 6, 5};
  for (std::size_t t = 0; t < 9; ++t)
    for (std::size_t k = 0; k < 8; ++k) permuted.data[t * 8 + k] = tokens.data[order[t] * 8 + k];
  CHECK(max_abs_diff(forward_features(params, config, tokens).data,
                     forward_features(params, config, permuted).data) < 1e-12);

  config.positional_embedding = true;
  ParameterSet with_pos = init_encoder_params(config, 6);
  CHECK(max_abs_diff(forward_features(with_pos, config, tokens).data,
                     forward_features(with_pos, config, permuted).data) > 1e-6);
}

TEST_CASE("zero depth pools the input tokens") {
  EncoderConfig config = small_config();
  config.depth = 0;
  config.positional_embedding = false;
  ParameterSet params = init_encoder_params(config, 8);
  Tensor tokens = token_tensor(2, 4, 8, 9);
  Tensor pooled = forward_features(params, config, tokens);
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t k = 0; k < 8; ++k) {
      double mean = 0.0;
      for (std::size_t t = 0; t < 4; ++t) mean += tokens.data[(b * 4 + t) * 8 + k];
      CHECK(pooled.data[b * 8 + k] == doctest::Approx(mean / 4.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("projection is unit norm") {
  EncoderConfig config = small_config();
  ParameterSet params = init_encoder_params(config, 10);
  Rng rng(11);
  Graph g;
  BoundParameters bound(g, params);
  Tensor z = project_normalize(bound, config, g.constant(oracle::random_tensor({5, 8}, rng, -5, 5))).value();
  for (std::size_t b = 0; b < 5; ++b) {
    double sq = 0.0;
    for (std::size_t k = 0; k < 4; ++k) sq += z.data[b * 4 + k] * z.data[b * 4 + k];
    CHECK(std::abs(std::sqrt(sq) - 1.0) < 1e-6);
  }
}

TEST_CASE("bias-free linear head is scale invariant") {
  EncoderConfig config = small_config();
  config.projection_hidden = false;
  config.projection_bias = false;
  ParameterSet params = init_encoder_params(config, 12);
  Rng rng(13);
  Tensor f = oracle::random_tensor({3, 8}, rng);
  Tensor f10 = f;
  for (double& v : f10.data) v *= 10.0;
  Graph g;
  BoundParameters bound(g, params);
  const Tensor z = project_normalize(bound, config, g.constant(f)).value();
  const Tensor z10 = project_normalize(bound, config, g.constant(f10)).value();
  CHECK(max_abs_diff(z.data, z10.data) < 1e-12);
}

TEST_CASE("zero input with zero weights stays finite") {
  EncoderConfig config = small_config();
  ParameterSet params = init_encoder_params(config, 14);
  for (auto& [name, t] : params) {
    if (name.rfind("head.", 0) == 0) std::fill(t.data.begin(), t.data.end(), 0.0);
  }
  Graph g;
  BoundParameters bound(g, params);
  Tensor z = project_normalize(bound, config, g.constant(Tensor({2, 8}))).value();
  for (double v : z.data) CHECK(std::isfinite(v));
}

TEST_CASE("momentum update examples") {
  ParameterSet key, query;
  key.add("w", Tensor({1}, std::vector<double>{1.0}));
  query.add("w", Tensor({1}, std::vector<double>{0.0}));
  momentum_update(key, query, 0.9);
  CHECK(key.get("w").data[0] == doctest::Approx(0.9).epsilon(1e-15));

  ParameterSet copy_key;
  copy_key.add("w", Tensor({1}, std::vector<double>{5.0}));
  query.get("w").data[0] = -2.5;
  momentum_update(copy_key, query, 0.0);
  CHECK(copy_key.get("w").data[0] == -2.5);

  CHECK_THROWS_AS(momentum_update(key, query, 1.0), ContractViolation);
  ParameterSet other;
  other.add("w", Tensor({2}));
  CHECK_THROWS_AS(momentum_update(other, query, 0.5), ContractViolation);
}

TEST_CASE("key network equals the query network bit-exactly at creation") {
  EncoderConfig config = small_config();
  EncoderPair pair = EncoderPair::create(config, 15, 0.99);
  Rng rng(16);
  std::vector<ImageTensor> images;
  for (int i = 0; i < 4; ++i) images.push_back(oracle::random_image(16, 16, 3, rng));
  const Tensor batch = images_to_batch(images);
  const std::vector<std::size_t> partners{2, 1, 0, 3};
  Tensor ratios({4, 4});
  for (double& r : ratios.data) r = rng.uniform(0.0, 0.8);

  Graph g;
  BoundParameters bound(g, pair.query);
  Tensor query = project_normalize(bound, config, encode_mixed(bound, config, batch, partners, ratios)).value();
  Tensor key = key_forward(pair.key, config, batch, partners, ratios);
  CHECK(query.data == key.data);
}

TEST_CASE("unmixed rows match plain encoding") {
  EncoderConfig config = small_config();
  ParameterSet params = init_encoder_params(config, 17);
  Rng rng(18);
  std::vector<ImageTensor> images;
  for (int i = 0; i < 3; ++i) images.push_back(oracle::random_image(16, 16, 3, rng));
  const Tensor batch = images_to_batch(images);
  const std::vector<std::size_t> self{0, 1, 2};
  Graph g;
  BoundParameters bound(g, params);
  const Tensor plain = encode(bound, config, batch).value();
  const Tensor mixed = encode_mixed(bound, config, batch, self, Tensor({3, 4}, 1.0)).value();
  CHECK(max_abs_diff(plain.data, mixed.data) < 1e-12);
}

}  // TEST_SUITE
