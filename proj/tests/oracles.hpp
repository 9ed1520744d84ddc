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


// Independent reference implementations used by the unit and acceptance
// tests. They favour obviousness over speed.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "spmix/encoder.hpp"
#include "spmix/image.hpp"
#include "spmix/random.hpp"
#include "spmix/saliency.hpp"
#include "spmix/tensor.hpp"

namespace oracle {

// |a - b| / max(1, |a|, |b|)
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Center-surround saliency by direct summation over each clipped window.
inline spmix::SaliencyMap saliency(const spmix::ImageTensor& image, std::span<const int> windows) {
  const std::size_t h = image.height, w = image.width;
  std::vector<double> gray(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (std::size_t c = 0; c < image.channels; ++c) s += image.at(y, x, c);
      gray[y * w + x] = s / static_cast<double>(image.channels);
    }
  }
  spmix::SaliencyMap map(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double total = 0.0;
      for (int win : windows) {
        const long r = win / 2;
        double sum = 0.0;
        long count = 0;
        for (long yy = static_cast<long>(y) - r; yy <= static_cast<long>(y) + r; ++yy) {
          for (long xx = static_cast<long>(x) - r; xx <= static_cast<long>(x) + r; ++xx) {
            if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
            sum += gray[yy * w + xx];
            ++count;
          }
        }
        total += std::abs(gray[y * w + x] - sum / static_cast<double>(count));
      }
      map.at(y, x) = total;
    }
  }
  return map;
}

// Supervised contrastive loss written straight from its definition: for each
// anchor with positives, -1/|P| sum_p log(exp(s_ip) / sum_{a != i} exp(s_ia)).
inline double supcon(const std::vector<std::vector<double>>& z, const std::vector<int>& labels,
                     double tau) {
  const std::size_t m = z.size();
  auto dot = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < z[i].size(); ++k) s += z[i][k] * z[j][k];
    return s / tau;
  };
  double total = 0.0;
  std::size_t anchors = 0;
  for (std::size_t i = 0; i < m; ++i) {
    double denom = 0.0;
    for (std::size_t a = 0; a < m; ++a) {
      if (a != i) denom += std::exp(dot(i, a));
    }
    double sum = 0.0;
    std::size_t positives = 0;
    for (std::size_t p = 0; p < m; ++p) {
      if (p == i || labels[p] != labels[i]) continue;
      sum += std::log(std::exp(dot(i, p)) / denom);
      ++positives;
    }
    if (positives == 0) continue;
    total += -sum / static_cast<double>(positives);
    ++anchors;
  }
  return anchors == 0 ? 0.0 : total / static_cast<double>(anchors);
}

inline spmix::Tensor random_tensor(spmix::Shape shape, spmix::Rng& rng, double lo = -1.0,
                                   double hi = 1.0) {
  spmix::Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

inline spmix::ImageTensor random_image(std::size_t h, std::size_t w, std::size_t c, spmix::Rng& rng) {
  spmix::ImageTensor image(h, w, c);
  for (double& v : image.data) v = rng.uniform();
  return image;
}

// Builds a scalar loss from graph inputs.
using LossBuilder = std::function<spmix::Var(spmix::Graph&, std::vector<spmix::Var>&)>;

// Largest rel_err between reverse-mode gradients and central differences
// (step h) over every element of every input.
inline double gradient_check(const LossBuilder& build, std::vector<spmix::Tensor> inputs,
                             double h = 1e-5) {
  std::vector<std::vector<double>> analytic;
  {
    spmix::Graph graph;
    std::vector<spmix::Var> vars;
    for (auto& t : inputs) vars.push_back(graph.input(t, true));
    spmix::Var loss = build(graph, vars);
    graph.backward(loss);
    for (auto& v : vars) analytic.push_back(v.grad());
  }
  auto evaluate = [&](const std::vector<spmix::Tensor>& values) {
    spmix::Graph graph;
    std::vector<spmix::Var> vars;
    for (const auto& t : values) vars.push_back(graph.input(t, false));
    return build(graph, vars).value().item();
  };
  double worst = 0.0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    for (std::size_t i = 0; i < inputs[t].numel(); ++i) {
      auto plus = inputs, minus = inputs;
      plus[t].data[i] += h;
      minus[t].data[i] -= h;
      const double numeric = (evaluate(plus) - evaluate(minus)) / (2.0 * h);
      worst = std::max(worst, rel_err(analytic[t][i], numeric));
    }
  }
  return worst;
}

// sum(out * weights) with fixed pseudo-random weights, so every output
// element carries a distinct upstream gradient.
inline spmix::Var weighted_sum(spmix::Var out, std::uint64_t seed = 99) {
  spmix::Rng rng(seed);
  spmix::Tensor weights = random_tensor(out.shape(), rng);
  return spmix::sum(spmix::mul(out, out.graph().constant(std::move(weights))));
}

// Patchify stem whose token d is the mean of channel d over the patch, with
// no positional embedding. Token width equals the channel count.
inline spmix::EncoderConfig identity_stem_config(std::size_t size, std::size_t grid) {
  spmix::EncoderConfig config;
  config.input_size = size;
  config.channels = 3;
  config.grid = grid;
  config.dim = 3;
  config.heads = 1;
  config.depth = 1;
  config.stem = spmix::StemKind::kPatchify;
  config.positional_embedding = false;
  return config;
}

inline void set_identity_stem(spmix::ParameterSet& params, const spmix::EncoderConfig& config) {
  spmix::Tensor& w = params.get("stem.patch.weight");
  const std::size_t p = config.patch_size();
  const double inv = 1.0 / static_cast<double>(p * p);
  std::fill(w.data.begin(), w.data.end(), 0.0);
  for (std::size_t d = 0; d < config.dim; ++d) {
    for (std::size_t i = 0; i < p * p; ++i) w.data[(d * config.channels + d) * p * p + i] = inv;
  }
  spmix::Tensor& b = params.get("stem.patch.bias");
  std::fill(b.data.begin(), b.data.end(), 0.0);
}

}  // namespace oracle
