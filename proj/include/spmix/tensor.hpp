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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace spmix {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. `grad` is empty until a backward pass
/// (or the optimizer) populates it; when present it matches `data` in length.
struct Tensor {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;

  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t axis) const { return shape.at(axis); }

  bool has_grad() const { return !grad.empty(); }
  void zero_grad() { grad.assign(data.size(), 0.0); }
  void clear_grad() { grad.clear(); }

  double item() const;
  bool all_finite() const;
};

struct GraphOptions {
#ifdef NDEBUG
  bool check_finite = false;
#else
  bool check_finite = true;
#endif
  // When set no node requires grad, regardless of its leaves.
  bool no_grad = false;
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the Graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  bool requires_grad() const;
  // Gradient of the last backward pass w.r.t. this node; zeros when the
  // node was not on a path to the loss.
  std::vector<double> grad() const;

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Tape of executed operations. Nodes are appended in execution order, so the
/// tape is topologically sorted and backward is a single reverse sweep.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  explicit Graph(GraphOptions options = {});
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf referring to an external tensor (a parameter). Backward accumulates
  // into `tensor.grad` when the tensor requires grad.
  Var parameter(Tensor& tensor);
  // Owned leaf.
  Var input(Tensor value, bool requires_grad = false);
  Var constant(Tensor value) { return input(std::move(value), false); }

  // Appends an op result. `backward` runs only when some input requires grad.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  void backward(Var loss);

  const Tensor& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  // Gradient buffer of a node; empty when nothing flowed into it.
  std::span<const double> grad(std::size_t id) const { return nodes_.at(id).grad; }
  // Zero-initialized on first access.
  std::span<double> grad_accumulator(std::size_t id);

  std::size_t size() const { return nodes_.size(); }
  const GraphOptions& options() const { return options_; }

 private:
  struct Node {
    Tensor owned;
    Tensor* external = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::vector<double> grad;
  };

  GraphOptions options_;
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// ---------------------------------------------------------------------------
// Differentiable primitives. Shape errors throw ContractViolation naming both
// shapes.

// Elementwise sum; `b` may also match a trailing suffix of `a`'s shape and is
// then broadcast over the leading dims.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
// (M,K) x (K,N) -> (M,N)
Var matmul(Var a, Var b);
// (B,M,K) x (B,K,N) -> (B,M,N); with transpose_b, b is (B,N,K).
Var batched_matmul(Var a, Var b, bool transpose_b = false);
// x (B,C,H,W), weight (O,C,kh,kw), optional bias (O) -> (B,O,Ho,Wo).
Var conv2d(Var x, Var weight, std::optional<Var> bias, std::size_t stride, std::size_t padding);
// Normalizes over the last dim, then applies gain and bias of that length.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var softmax(Var x);
Var relu(Var x);
// (B,N,D) -> (B,D), mean over N.
Var mean_pool(Var x);
Var sum(Var x);
Var reshape(Var x, Shape shape);
// (B*N, H*dh) -> (B*H, N, dh)
Var split_heads(Var x, std::size_t batch, std::size_t tokens, std::size_t heads);
// (B*H, N, dh) -> (B*N, H*dh)
Var merge_heads(Var x, std::size_t batch, std::size_t heads);
// (B,C,G1,G2) -> (B, G1*G2, C), tokens in row-major grid order.
Var nchw_to_tokens(Var x);
// Selects rows along axis 0.
Var gather_rows(Var x, std::span<const std::size_t> rows);
// Concatenates along axis 0.
Var concat_rows(Var a, Var b);
// x / (||x|| + eps) over the last dim.
Var l2_normalize(Var x, double eps = 1e-12);
// Mean softmax cross-entropy of logits (B,K) against integer labels.
Var cross_entropy(Var logits, std::span<const int> labels);
// Mean cross-entropy against target distributions (B,K).
Var cross_entropy_soft(Var logits, const Tensor& targets);

}  // namespace spmix
