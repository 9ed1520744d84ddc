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


#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>

#include "spmix/image.hpp"
#include "spmix/parameters.hpp"
#include "spmix/tensor.hpp"

namespace spmix {

enum class StemKind {
  kConv,      // conv3x3/s2 + relu, conv3x3/s2 + relu, patchify conv
  kPatchify,  // a single conv with kernel = stride = input / grid
};

struct EncoderConfig {
  std::size_t input_size = 64;
  std::size_t channels = 3;
  std::size_t grid = 8;
  std::size_t dim = 64;
  std::size_t depth = 2;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 2;
  std::size_t projection_dim = 32;
  std::size_t stem_channels1 = 16;
  std::size_t stem_channels2 = 32;
  StemKind stem = StemKind::kConv;
  bool positional_embedding = true;
  // Projection head is linear -> relu -> linear when set, one linear otherwise.
  bool projection_hidden = true;
  bool projection_bias = true;

  std::size_t tokens() const { return grid * grid; }
  // Input pixels covered by one token along each side.
  std::size_t patch_size() const { return input_size / grid; }
  void validate() const;

  // 224 px input, 14 x 14 tokens of width 768.
  static EncoderConfig full_scale();
};

ParameterSet init_encoder_params(const EncoderConfig& config, std::uint64_t seed);

/// Creates graph leaves for parameters on first use.
class BoundParameters {
 public:
  BoundParameters(Graph& graph, ParameterSet& params) : graph_(graph), params_(params) {}
  Var operator[](const std::string& name);
  Graph& graph() { return graph_; }

 private:
  Graph& graph_;
  ParameterSet& params_;
  std::unordered_map<std::string, Var> bound_;
};

// Stacks HWC images into a (B, C, H, W) tensor.
Tensor images_to_batch(std::span<const ImageTensor> images);

// (B,C,H,W) -> token map (B, G*G, D).
Var stem_forward(BoundParameters& params, const EncoderConfig& config, Var images);
// Token map (B, N, D) -> pooled features (B, D): optional positional
// embedding, pre-norm transformer blocks, mean over tokens.
Var transformer_forward(BoundParameters& params, const EncoderConfig& config, Var tokens);
// (B, D) -> unit-norm embeddings (B, P).
Var project_normalize(BoundParameters& params, const EncoderConfig& config, Var features);

/// Stem over anchors and partners, per-token mixing, then the transformer.
/// `images` holds the B anchor images followed by any partner images;
/// partner_rows[i] indexes anchor i's partner in that stack (i itself for
/// an unmixed anchor, with ratio 1). Returns pooled features (B, D).
Var encode_mixed(BoundParameters& params, const EncoderConfig& config, const Tensor& images,
                 std::span<const std::size_t> partner_rows, const Tensor& ratios);
Var encode(BoundParameters& params, const EncoderConfig& config, const Tensor& images);

/// Query network (trained by gradients) and key network (momentum copy).
struct EncoderPair {
  ParameterSet query;
  ParameterSet key;
  double momentum = 0.99;

  static EncoderPair create(const EncoderConfig& config, std::uint64_t seed, double momentum);
  void momentum_update();
};

// key <- m * key + (1 - m) * query, elementwise.
void momentum_update(ParameterSet& key, const ParameterSet& query, double momentum);

// Forward pass through the key network; nothing is recorded for gradients.
Tensor key_forward(ParameterSet& key, const EncoderConfig& config, const Tensor& images,
                   std::span<const std::size_t> partner_rows, const Tensor& ratios);

}  // namespace spmix
