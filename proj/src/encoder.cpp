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


#include "spmix/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spmix/error.hpp"
#include "spmix/mixup.hpp"
#include "spmix/random.hpp"

namespace spmix {

void EncoderConfig::validate() const {
  require(input_size > 0 && grid > 0 && input_size % grid == 0,
          "encoder: input size " + std::to_string(input_size) + " must be divisible by grid " +
              std::to_string(grid));
  if (stem == StemKind::kConv) {
    require(patch_size() % 4 == 0,
            "encoder: conv stem needs input/grid divisible by 4, got " +
                std::to_string(patch_size()));
  }
  require(channels == 1 || channels == 3, "encoder: channels must be 1 or 3");
  require(dim > 0 && heads > 0 && dim % heads == 0,
          "encoder: dim " + std::to_string(dim) + " must be divisible by heads " +
              std::to_string(heads));
  require(mlp_ratio > 0 && projection_dim > 0, "encoder: mlp ratio and projection dim must be positive");
  require(stem_channels1 > 0 && stem_channels2 > 0, "encoder: stem channels must be positive");
}

EncoderConfig EncoderConfig::full_scale() {
  EncoderConfig config;
  config.input_size = 224;
  config.grid = 14;
  config.dim = 768;
  config.heads = 12;
  config.mlp_ratio = 4;
  config.projection_dim = 128;
  config.stem_channels1 = 64;
  config.stem_channels2 = 128;
  return config;
}

namespace {

Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.normal(0.0, stddev);
  return t;
}

void add_linear(ParameterSet& params, const std::string& prefix, std::size_t in, std::size_t out,
                bool bias, Rng& rng) {
  params.add(prefix + ".weight", normal_tensor({in, out}, std::sqrt(2.0 / (in + out)), rng));
  if (bias) params.add(prefix + ".bias", Tensor({out}));
}

void add_conv(ParameterSet& params, const std::string& prefix, std::size_t in, std::size_t out,
              std::size_t kernel, Rng& rng) {
  const double fan_in = static_cast<double>(in * kernel * kernel);
  params.add(prefix + ".weight", normal_tensor({out, in, kernel, kernel}, std::sqrt(2.0 / fan_in), rng));
  params.add(prefix + ".bias", Tensor({out}));
}

void add_layer_norm(ParameterSet& params, const std::string& prefix, std::size_t dim) {
  params.add(prefix + ".gain", Tensor({dim}, 1.0));
  params.add(prefix + ".bias", Tensor({dim}));
}

// x (R, in) @ W (in, out) [+ b]
Var linear(BoundParameters& params, const std::string& prefix, Var x, bool bias = true) {
  Var y = matmul(x, params[prefix + ".weight"]);
  return bias ? add(y, params[prefix + ".bias"]) : y;
}

}  // namespace

ParameterSet init_encoder_params(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ParameterSet params;
  const std::size_t d = config.dim;
  if (config.stem == StemKind::kConv) {
    add_conv(params, "stem.conv1", config.channels, config.stem_channels1, 3, rng);
    add_conv(params, "stem.conv2", config.stem_channels1, config.stem_channels2, 3, rng);
    add_conv(params, "stem.patch", config.stem_channels2, d, config.patch_size() / 4, rng);
  } else {
    add_conv(params, "stem.patch", config.channels, d, config.patch_size(), rng);
  }
  if (config.positional_embedding) {
    params.add("pos_embedding", normal_tensor({config.tokens(), d}, 0.02, rng));
  }
  for (std::size_t b = 0; b < config.depth; ++b) {
    const std::string p = "blocks." + std::to_string(b);
    add_layer_norm(params, p + ".ln1", d);
    add_linear(params, p + ".attn.q", d, d, true, rng);
    add_linear(params, p + ".attn.k", d, d, true, rng);
    add_linear(params, p + ".attn.v", d, d, true, rng);
    add_linear(params, p + ".attn.out", d, d, true, rng);
    add_layer_norm(params, p + ".ln2", d);
    add_linear(params, p + ".mlp.fc1", d, d * config.mlp_ratio, true, rng);
    add_linear(params, p + ".mlp.fc2", d * config.mlp_ratio, d, true, rng);
  }
  if (config.projection_hidden) {
    add_linear(params, "head.fc1", d, d, config.projection_bias, rng);
    add_linear(params, "head.fc2", d, config.projection_dim, config.projection_bias, rng);
  } else {
    add_linear(params, "head.fc1", d, config.projection_dim, config.projection_bias, rng);
  }
  return params;
}

Var BoundParameters::operator[](const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var v = graph_.parameter(params_.get(name));
  bound_.emplace(name, v);
  return v;
}

Tensor images_to_batch(std::span<const ImageTensor> images) {
  require(!images.empty(), "images_to_batch: empty batch");
  const ImageTensor& first = images.front();
  const std::size_t c = first.channels, h = first.height, w = first.width;
  Tensor batch({images.size(), c, h, w});
  for (std::size_t i = 0; i < images.size(); ++i) {
    require(images[i].same_shape(first), "images_to_batch: images differ in shape");
    double* dst = batch.data.data() + i * c * h * w;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t ch = 0; ch < c; ++ch) dst[(ch * h + y) * w + x] = images[i].at(y, x, ch);
  }
  return batch;
}

Var stem_forward(BoundParameters& params, const EncoderConfig& config, Var images) {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != config.channels || s[2] != config.input_size ||
      s[3] != config.input_size) {
    throw ContractViolation("stem_forward: input " + shape_string(s) + " does not match [B," +
                            std::to_string(config.channels) + "," +
                            std::to_string(config.input_size) + "," +
                            std::to_string(config.input_size) + "]");
  }
  Var x = images;
  if (config.stem == StemKind::kConv) {
    x = relu(conv2d(x, params["stem.conv1.weight"], params["stem.conv1.bias"], 2, 1));
    x = relu(conv2d(x, params["stem.conv2.weight"], params["stem.conv2.bias"], 2, 1));
    const std::size_t k = config.patch_size() / 4;
    x = conv2d(x, params["stem.patch.weight"], params["stem.patch.bias"], k, 0);
  } else {
    const std::size_t k = config.patch_size();
    x = conv2d(x, params["stem.patch.weight"], params["stem.patch.bias"], k, 0);
  }
  return nchw_to_tokens(x);
}

Var transformer_forward(BoundParameters& params, const EncoderConfig& config, Var tokens) {
  const Shape s = tokens.shape();
  if (s.size() != 3 || s[1] != config.tokens() || s[2] != config.dim) {
    throw ContractViolation("transformer_forward: token map " + shape_string(s) +
                            " does not match [B," + std::to_string(config.tokens()) + "," +
                            std::to_string(config.dim) + "]");
  }
  const std::size_t batch = s[0], n = s[1], d = s[2];
  const std::size_t heads = config.heads, dh = d / heads;
  Var x = tokens;
  if (config.positional_embedding) x = add(x, params["pos_embedding"]);
  x = reshape(x, {batch * n, d});
  for (std::size_t b = 0; b < config.depth; ++b) {
    const std::string p = "blocks." + std::to_string(b);
    Var h = layer_norm(x, params[p + ".ln1.gain"], params[p + ".ln1.bias"]);
    Var q = split_heads(linear(params, p + ".attn.q", h), batch, n, heads);
    Var k = split_heads(linear(params, p + ".attn.k", h), batch, n, heads);
    Var v = split_heads(linear(params, p + ".attn.v", h), batch, n, heads);
    Var att = softmax(scale(batched_matmul(q, k, true), 1.0 / std::sqrt(static_cast<double>(dh))));
    Var ctx = merge_heads(batched_matmul(att, v), batch, heads);
    x = add(x, linear(params, p + ".attn.out", ctx));

    h = layer_norm(x, params[p + ".ln2.gain"], params[p + ".ln2.bias"]);
    h = relu(linear(params, p + ".mlp.fc1", h));
    x = add(x, linear(params, p + ".mlp.fc2", h));
  }
  return mean_pool(reshape(x, {batch, n, d}));
}

Var project_normalize(BoundParameters& params, const EncoderConfig& config, Var features) {
  const Shape& s = features.shape();
  if (s.size() != 2 || s[1] != config.dim) {
    throw ContractViolation("project_normalize: features " + shape_string(s) +
                            " do not match [B," + std::to_string(config.dim) + "]");
  }
  Var z;
  if (config.projection_hidden) {
    z = relu(linear(params, "head.fc1", features, config.projection_bias));
    z = linear(params, "head.fc2", z, config.projection_bias);
  } else {
    z = linear(params, "head.fc1", features, config.projection_bias);
  }
  return l2_normalize(z, 1e-12);
}

Var encode_mixed(BoundParameters& params, const EncoderConfig& config, const Tensor& images,
                 std::span<const std::size_t> partner_rows, const Tensor& ratios) {
  const std::size_t anchors = partner_rows.size();
  require(images.rank() == 4 && images.dim(0) >= anchors,
          "encode_mixed: image stack " + shape_string(images.shape) + " holds fewer than " +
              std::to_string(anchors) + " anchors");
  Graph& g = params.graph();
  Var tokens = stem_forward(params, config, g.constant(images));
  if (images.dim(0) == anchors && std::all_of(ratios.data.begin(), ratios.data.end(),
                                              [](double r) { return r == 1.0; })) {
    return transformer_forward(params, config, tokens);
  }
  std::vector<std::size_t> anchor_rows(anchors);
  std::iota(anchor_rows.begin(), anchor_rows.end(), std::size_t{0});
  Var tail = gather_rows(tokens, anchor_rows);
  Var head = gather_rows(tokens, partner_rows);
  return transformer_forward(params, config, mix_features(tail, head, ratios));
}

Var encode(BoundParameters& params, const EncoderConfig& config, const Tensor& images) {
  return transformer_forward(params, config, stem_forward(params, config, params.graph().constant(images)));
}

EncoderPair EncoderPair::create(const EncoderConfig& config, std::uint64_t seed, double momentum) {
  require(momentum >= 0.0 && momentum < 1.0, "key momentum must lie in [0,1)");
  EncoderPair pair;
  pair.query = init_encoder_params(config, seed);
  pair.query.set_requires_grad(true);
  pair.key = pair.query;
  pair.key.set_requires_grad(false);
  for (auto& entry : pair.key) entry.second.clear_grad();
  pair.momentum = momentum;
  return pair;
}

void EncoderPair::momentum_update() { spmix::momentum_update(key, query, momentum); }

void momentum_update(ParameterSet& key, const ParameterSet& query, double momentum) {
  require(momentum >= 0.0 && momentum < 1.0, "momentum_update: momentum must lie in [0,1)");
  require(key.aligned_with(query), "momentum_update: key and query parameters are not aligned");
  auto q = query.begin();
  for (auto k = key.begin(); k != key.end(); ++k, ++q) {
    auto& kd = k->second.data;
    const auto& qd = q->second.data;
    for (std::size_t i = 0; i < kd.size(); ++i) kd[i] = momentum * kd[i] + (1.0 - momentum) * qd[i];
  }
}

Tensor key_forward(ParameterSet& key, const EncoderConfig& config, const Tensor& images,
                   std::span<const std::size_t> partner_rows, const Tensor& ratios) {
  Graph graph(GraphOptions{.check_finite = false, .no_grad = true});
  BoundParameters params(graph, key);
  Var f = encode_mixed(params, config, images, partner_rows, ratios);
  return project_normalize(params, config, f).value();
}

}  // namespace spmix
