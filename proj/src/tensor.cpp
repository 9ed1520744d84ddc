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

#include "spmix/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "spmix/error.hpp"
#include "spmix/kernels.hpp"

namespace spmix {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(shape_numel(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  require(data.size() == shape_numel(shape),
          "tensor data length " + std::to_string(data.size()) + " does not match shape " +
              shape_string(shape));
}

double Tensor::item() const {
  require(data.size() == 1, "item() on non-scalar tensor of shape " + shape_string(shape));
  return data[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

const Tensor& Var::value() const { return graph_->value(id_); }
bool Var::requires_grad() const { return graph_->requires_grad(id_); }

std::vector<double> Var::grad() const {
  auto g = graph_->grad(id_);
  if (g.empty()) return std::vector<double>(value().numel(), 0.0);
  return {g.begin(), g.end()};
}

Graph::Graph(GraphOptions options) : options_(options) {}

Var Graph::parameter(Tensor& tensor) {
  Node node;
  node.external = &tensor;
  node.requires_grad = tensor.requires_grad && !options_.no_grad;
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Graph::input(Tensor value, bool requires_grad) {
  require(value.data.size() == shape_numel(value.shape),
          "input tensor data does not match shape " + shape_string(value.shape));
  Node node;
  node.requires_grad = requires_grad && !options_.no_grad;
  value.requires_grad = node.requires_grad;
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Graph::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  if (options_.check_finite && !value.all_finite()) {
    throw NumericError("non-finite value produced by op #" + std::to_string(nodes_.size()) +
                       " with shape " + shape_string(value.shape));
  }
  Node node;
  node.owned = std::move(value);
  if (!options_.no_grad) {
    node.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                     [this](std::size_t i) { return nodes_.at(i).requires_grad; });
  }
  if (node.requires_grad) {
    node.inputs = std::move(inputs);
    node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

const Tensor& Graph::value(std::size_t id) const {
  const Node& node = nodes_.at(id);
  return node.external != nullptr ? *node.external : node.owned;
}

std::span<double> Graph::grad_accumulator(std::size_t id) {
  Node& node = nodes_.at(id);
  if (node.grad.empty()) node.grad.assign(value(id).numel(), 0.0);
  return node.grad;
}

void Graph::backward(Var loss) {
  require(&loss.graph() == this, "backward: loss belongs to another graph");
  const Tensor& lv = value(loss.id());
  require(lv.numel() == 1, "backward: loss must be scalar, got shape " + shape_string(lv.shape));
  require(!backward_done_, "backward: graph already differentiated; build a fresh graph");
  backward_done_ = true;
  if (!nodes_[loss.id()].requires_grad) return;

  grad_accumulator(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || node.grad.empty() || !node.backward) continue;
    node.backward(*this, i);
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& node = nodes_[i];
    if (!node.requires_grad || node.backward) continue;
    Tensor& leaf = node.external != nullptr ? *node.external : node.owned;
    if (leaf.grad.size() != leaf.data.size()) leaf.grad.assign(leaf.data.size(), 0.0);
    for (std::size_t j = 0; j < node.grad.size(); ++j) leaf.grad[j] += node.grad[j];
  }
}

namespace {

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ContractViolation(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
                          shape_string(b));
}

void same_graph(Var a, Var b) {
  require(&a.graph() == &b.graph(), "operands belong to different graphs");
}

}  // namespace

Var add(Var a, Var b) {
  same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Shape& as = av.shape;
  const Shape& bs = bv.shape;
  if (bs.size() > as.size() || !std::equal(bs.rbegin(), bs.rend(), as.rbegin())) {
    shape_mismatch("add", as, bs);
  }
  const std::size_t inner = bv.numel();
  const std::size_t outer = inner == 0 ? 0 : av.numel() / inner;
  Tensor out(as);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < inner; ++j) {
      out.data[o * inner + j] = av.data[o * inner + j] + bv.data[j];
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {ia, ib}, [ia, ib, inner, outer](Graph& g, std::size_t self) {
    auto gy = g.grad(self);
    if (g.requires_grad(ia)) {
      auto ga = g.grad_accumulator(ia);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
    }
    if (g.requires_grad(ib)) {
      auto gb = g.grad_accumulator(ib);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t j = 0; j < inner; ++j) gb[j] += gy[o * inner + j];
      }
    }
  });
}

Var sub(Var a, Var b) {
  same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape != bv.shape) shape_mismatch("sub", av.shape, bv.shape);
  Tensor out(av.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[i] - bv.data[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {ia, ib}, [ia, ib](Graph& g, std::size_t self) {
    auto gy = g.grad(self);
    if (g.requires_grad(ia)) {
      auto ga = g.grad_accumulator(ia);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
    }
    if (g.requires_grad(ib)) {
      auto gb = g.grad_accumulator(ib);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i];
    }
  });
}

Var mul(Var a, Var b) {
  same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape != bv.shape) shape_mismatch("mul", av.shape, bv.shape);
  Tensor out(av.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[i] * bv.data[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {ia, ib}, [ia, ib](Graph& g, std::size_t self) {
    auto gy = g.grad(self);
    const auto& x = g.value(ia).data;
    const auto& y = g.value(ib).data;
    if (g.requires_grad(ia)) {
      auto ga = g.grad_accumulator(ia);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * y[i];
    }
    if (g.requires_grad(ib)) {
      auto gb = g.grad_accumulator(ib);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * x[i];
    }
  });
}

Var scale(Var a, double factor) {
  const Tensor& av = a.value();
  Tensor out(av.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[i] * factor;
  const std::size_t ia = a.id();
  return a.graph().record(std::move(out), {ia}, [ia, factor](Graph& g, std::size_t self) {
    auto gy = g.grad(self);
    auto ga = g.grad_accumulator(ia);
    for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * factor;
  });
}

Var matmul(Var a, Var b) {
  same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    shape_mismatch("matmul", av.shape, bv.shape);
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  kernels::gemm(m, n, k, av.data.data(), false, bv.data.data(), false, out.data.data(), false);
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {ia, ib}, [ia, ib, m, n, k](Graph& g, std::size_t self) {
    const double* gy = g.grad(self).data();
    if (g.requires_grad(ia)) {
      // dA = dC * B^T
      kernels::gemm(m, k, n, gy, false, g.value(ib).data.data(), true,
                    g.grad_accumulator(ia).data(), true);
    }
    if (g.requires_grad(ib)) {
      // dB = A^T * dC
      kernels::gemm(k, n, m, g.value(ia).data.data(), true, gy, false,
                    g.grad_accumulator(ib).data(), true);
    }
  });
}

Var batched_matmul(Var a, Var b, bool transpose_b) {
  same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 3 || bv.rank() != 3 || av.dim(0) != bv.dim(0)) {
    shape_mismatch("batched_matmul", av.shape, bv.shape);
  }
  const std::size_t batch = av.dim(0), m = av.dim(1), k = av.dim(2);
  const std::size_t n = transpose_b ? bv.dim(1) : bv.dim(2);
  if ((transpose_b ? bv.dim(2) : bv.dim(1)) != k) {
    shape_mismatch("batched_matmul", av.shape, bv.shape);
  }
  Tensor out({batch, m, n});
  for (std::size_t i = 0; i < batch; ++i) {
    kernels::gemm(m, n, k, av.data.data() + i * m * k, false, bv.data.data() + i * k * n,
                  transpose_b, out.data.data() + i * m * n, false);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(
      std::move(out), {ia, ib}, [ia, ib, batch, m, n, k, transpose_b](Graph& g, std::size_t self) {
        const double* gy = g.grad(self).data();
        const double* ad = g.value(ia).data.data();
        const double* bd = g.value(ib).data.data();
        if (g.requires_grad(ia)) {
          double* ga = g.grad_accumulator(ia).data();
          for (std::size_t i = 0; i < batch; ++i) {
            // dA = dC * op(B)^T
            kernels::gemm(m, k, n, gy + i * m * n, false, bd + i * k * n, !transpose_b,
                          ga + i * m * k, true);
          }
        }
        if (g.requires_grad(ib)) {
          double* gb = g.grad_accumulator(ib).data();
          for (std::size_t i = 0; i < batch; ++i) {
            if (transpose_b) {
              // B is (N,K): dB = dC^T * A
              kernels::gemm(n, k, m, gy + i * m * n, true, ad + i * m * k, false, gb + i * k * n,
                            true);
            } else {
              kernels::gemm(k, n, m, ad + i * m * k, true, gy + i * m * n, false, gb + i * k * n,
                            true);
            }
          }
        }
      });
}

namespace {

struct ConvGeometry {
  std::size_t batch, channels, height, width;
  std::size_t out_channels, kh, kw, stride, padding, out_h, out_w;

  std::size_t patch() const { return channels * kh * kw; }
  std::size_t pixels() const { return out_h * out_w; }
};

// col is (C*kh*kw, Ho*Wo) for a single image.
void im2col(const ConvGeometry& geo, const double* image, double* col) {
  for (std::size_t c = 0; c < geo.channels; ++c) {
    for (std::size_t ki = 0; ki < geo.kh; ++ki) {
      for (std::size_t kj = 0; kj < geo.kw; ++kj) {
        double* row = col + ((c * geo.kh + ki) * geo.kw + kj) * geo.pixels();
        for (std::size_t oy = 0; oy < geo.out_h; ++oy) {
          const long iy = static_cast<long>(oy * geo.stride + ki) - static_cast<long>(geo.padding);
          for (std::size_t ox = 0; ox < geo.out_w; ++ox) {
            const long ix =
                static_cast<long>(ox * geo.stride + kj) - static_cast<long>(geo.padding);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(geo.height) &&
                                ix < static_cast<long>(geo.width);
            row[oy * geo.out_w + ox] =
                inside ? image[(c * geo.height + iy) * geo.width + ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& geo, const double* col, double* image) {
  for (std::size_t c = 0; c < geo.channels; ++c) {
    for (std::size_t ki = 0; ki < geo.kh; ++ki) {
      for (std::size_t kj = 0; kj < geo.kw; ++kj) {
        const double* row = col + ((c * geo.kh + ki) * geo.kw + kj) * geo.pixels();
        for (std::size_t oy = 0; oy < geo.out_h; ++oy) {
          const long iy = static_cast<long>(oy * geo.stride + ki) - static_cast<long>(geo.padding);
          if (iy < 0 || iy >= static_cast<long>(geo.height)) continue;
          for (std::size_t ox = 0; ox < geo.out_w; ++ox) {
            const long ix =
                static_cast<long>(ox * geo.stride + kj) - static_cast<long>(geo.padding);
            if (ix < 0 || ix >= static_cast<long>(geo.width)) continue;
            image[(c * geo.height + iy) * geo.width + ix] += row[oy * geo.out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Var x, Var weight, std::optional<Var> bias, std::size_t stride, std::size_t padding) {
  same_graph(x, weight);
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  if (xv.rank() != 4 || wv.rank() != 4 || xv.dim(1) != wv.dim(1)) {
    shape_mismatch("conv2d", xv.shape, wv.shape);
  }
  require(stride >= 1, "conv2d: stride must be positive");
  ConvGeometry geo{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), wv.dim(0), wv.dim(2), wv.dim(3),
                   stride,    padding,   0,         0};
  if (geo.height + 2 * padding < geo.kh || geo.width + 2 * padding < geo.kw) {
    shape_mismatch("conv2d", xv.shape, wv.shape);
  }
  geo.out_h = (geo.height + 2 * padding - geo.kh) / stride + 1;
  geo.out_w = (geo.width + 2 * padding - geo.kw) / stride + 1;
  if (bias) {
    same_graph(x, *bias);
    const Tensor& bv = bias->value();
    if (bv.rank() != 1 || bv.dim(0) != geo.out_channels) {
      shape_mismatch("conv2d bias", wv.shape, bv.shape);
    }
  }

  Tensor out({geo.batch, geo.out_channels, geo.out_h, geo.out_w});
  const std::size_t in_size = geo.channels * geo.height * geo.width;
  const std::size_t out_size = geo.out_channels * geo.pixels();
  std::vector<double> col(geo.patch() * geo.pixels());
  for (std::size_t b = 0; b < geo.batch; ++b) {
    im2col(geo, xv.data.data() + b * in_size, col.data());
    double* o = out.data.data() + b * out_size;
    kernels::gemm(geo.out_channels, geo.pixels(), geo.patch(), wv.data.data(), false, col.data(),
                  false, o, false);
    if (bias) {
      const auto& bd = bias->value().data;
      for (std::size_t oc = 0; oc < geo.out_channels; ++oc) {
        for (std::size_t p = 0; p < geo.pixels(); ++p) o[oc * geo.pixels() + p] += bd[oc];
      }
    }
  }

  std::vector<std::size_t> inputs{x.id(), weight.id()};
  if (bias) inputs.push_back(bias->id());
  const std::size_t ix = x.id(), iw = weight.id();
  const std::optional<std::size_t> ib = bias ? std::optional<std::size_t>(bias->id()) : std::nullopt;
  return x.graph().record(std::move(out), std::move(inputs), [geo, ix, iw, ib](Graph& g, std::size_t self) {
    const double* gy = g.grad(self).data();
    const double* xd = g.value(ix).data.data();
    const double* wd = g.value(iw).data.data();
    const std::size_t in_size = geo.channels * geo.height * geo.width;
    const std::size_t out_size = geo.out_channels * geo.pixels();
    std::vector<double> col(geo.patch() * geo.pixels());
    const bool need_x = g.requires_grad(ix);
    const bool need_w = g.requires_grad(iw);
    for (std::size_t b = 0; b < geo.batch; ++b) {
      const double* gyb = gy + b * out_size;
      if (need_w) {
        im2col(geo, xd + b * in_size, col.data());
        // dW += dY (O, P) * col^T (P, CKK)
        kernels::gemm(geo.out_channels, geo.patch(), geo.pixels(), gyb, false, col.data(), true,
                      g.grad_accumulator(iw).data(), true);
      }
      if (need_x) {
        // dcol = W^T (CKK, O) * dY (O, P)
        kernels::gemm(geo.patch(), geo.pixels(), geo.out_channels, wd, true, gyb, false,
                      col.data(), false);
        col2im_add(geo, col.data(), g.grad_accumulator(ix).data() + b * in_size);
      }
    }
    if (ib && g.requires_grad(*ib)) {
      auto gb = g.grad_accumulator(*ib);
      for (std::size_t b = 0; b < geo.batch; ++b) {
        for (std::size_t oc = 0; oc < geo.out_channels; ++oc) {
          const double* row = gy + b * out_size + oc * geo.pixels();
          double s = 0.0;
          for (std::size_t p = 0; p < geo.pixels(); ++p) s += row[p];
          gb[oc] += s;
        }
      }
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  same_graph(x, gain);
  same_graph(x, bias);
  const Tensor& xv = x.value();
  require(xv.rank() >= 1, "layer_norm: scalar input");
  const std::size_t d = xv.shape.back();
  if (gain.value().shape != Shape{d}) shape_mismatch("layer_norm gain", xv.shape, gain.shape());
  if (bias.value().shape != Shape{d}) shape_mismatch("layer_norm bias", xv.shape, bias.shape());
  const std::size_t rows = d == 0 ? 0 : xv.numel() / d;
  const auto& gd = gain.value().data;
  const auto& bd = bias.value().data;

  Tensor out(xv.shape);
  std::vector<double> normalized(xv.numel());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(d);
    const double rstd = 1.0 / std::sqrt(var + eps);
    inv_std[r] = rstd;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (row[j] - mean) * rstd;
      normalized[r * d + j] = xh;
      out.data[r * d + j] = xh * gd[j] + bd[j];
    }
  }

  const std::size_t ix = x.id(), ig = gain.id(), ibias = bias.id();
  return x.graph().record(
      std::move(out), {ix, ig, ibias},
      [ix, ig, ibias, d, rows, normalized = std::move(normalized),
       inv_std = std::move(inv_std)](Graph& g, std::size_t self) {
        auto gy = g.grad(self);
        const auto& gd = g.value(ig).data;
        if (g.requires_grad(ig)) {
          auto gg = g.grad_accumulator(ig);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gg[j] += gy[r * d + j] * normalized[r * d + j];
        }
        if (g.requires_grad(ibias)) {
          auto gb = g.grad_accumulator(ibias);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gb[j] += gy[r * d + j];
        }
        if (g.requires_grad(ix)) {
          auto gx = g.grad_accumulator(ix);
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_dxh = 0.0, mean_dxh_xh = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = gy[r * d + j] * gd[j];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * normalized[r * d + j];
            }
            mean_dxh *= inv_d;
            mean_dxh_xh *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = gy[r * d + j] * gd[j];
              gx[r * d + j] +=
                  inv_std[r] * (dxh - mean_dxh - normalized[r * d + j] * mean_dxh_xh);
            }
          }
        }
      });
}

Var softmax(Var x) {
  const Tensor& xv = x.value();
  require(xv.rank() >= 1, "softmax: scalar input");
  const std::size_t d = xv.shape.back();
  const std::size_t rows = d == 0 ? 0 : xv.numel() / d;
  Tensor out(xv.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data.data() + r * d;
    double* o = out.data.data() + r * d;
    const double mx = *std::max_element(row, row + d);
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      o[j] = std::exp(row[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < d; ++j) o[j] /= total;
  }
  const std::size_t ix = x.id();
  return x.graph().record(std::move(out), {ix}, [ix, d, rows](Graph& g, std::size_t self) {
    auto gy = g.grad(self);
    const auto& y = g.value(self).data;
    auto gx = g.grad_accumulator(ix);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += gy[r * d + j] * y[r * d + j];
      for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += y[r * d + j] * (gy[r * d + j] - dot);
    }
  });
}

Var relu(Var x) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = xv.data[i] > 0.0 ? xv.data[i] : 0.0;
  const std::size_t ix = x.id();
  return x.graph().record(std::move(out), {ix}, [ix](Graph& g, std::size_t self) {
    auto gy = g.grad(self);
    const auto& xd = g.value(ix).data;
    auto gx = g.grad_accumulator(ix);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      if (xd[i] > 0.0) gx[i] += gy[i];
    }
  });
}

Var mean_pool(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 3 || xv.dim(1) == 0) shape_mismatch("mean_pool", xv.shape, Shape{0, 0, 0});
  const std::size_t b = xv.dim(0), n = xv.dim(1), d = xv.dim(2);
  Tensor out({b, d});
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t j = 0; j < d; ++j) out.data[i * d + j] += xv.data[(i * n + t) * d + j];
    }
    for (std::size_t j = 0; j < d; ++j) out.data[i * d + j] /= static_cast<double>(n);
  }
  const std::size_t ix = x.id();
  return x.graph().record(std::move(out), {ix}, [ix, b, n, d](Graph& g, std::size_t self) {
    auto gy = g.grad(self);
    auto gx = g.grad_accumulator(ix);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t j = 0; j < d; ++j) gx[(i * n + t) * d + j] += gy[i * d + j] * inv_n;
  });
}

Var sum(Var x) {
  const Tensor& xv = x.value();
  double total = 0.0;
  for (double v : xv.data) total += v;
  const std::size_t ix = x.id();
  return x.graph().record(Tensor({1}, {total}), {ix}, [ix](Graph& g, std::size_t self) {
    const double gy = g.grad(self)[0];
    auto gx = g.grad_accumulator(ix);
    for (double& v : gx) v += gy;
  });
}

Var reshape(Var x, Shape shape) {
  const Tensor& xv = x.value();
  if (shape_numel(shape) != xv.numel()) shape_mismatch("reshape", xv.shape, shape);
  Tensor out(std::move(shape), xv.data);
  const std::size_t ix = x.id();
  return x.graph().record(std::move(out), {ix}, [ix](Graph& g, std::size_t self) {
    auto gy = g.grad(self);
    auto gx = g.grad_accumulator(ix);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
  });
}

Var split_heads(Var x, std::size_t batch, std::size_t tokens, std::size_t heads) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || heads == 0 || xv.dim(0) != batch * tokens || xv.dim(1) % heads != 0) {
    shape_mismatch("split_heads", xv.shape, Shape{batch, tokens, heads});
  }
  const std::size_t dh = xv.dim(1) / heads;
  const std::size_t width = xv.dim(1);
  Tensor out({batch * heads, tokens, dh});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t n = 0; n < tokens; ++n)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t j = 0; j < dh; ++j)
          out.data[((b * heads + h) * tokens + n) * dh + j] =
              xv.data[(b * tokens + n) * width + h * dh + j];
  const std::size_t ix = x.id();
  return x.graph().record(
      std::move(out), {ix}, [ix, batch, tokens, heads, dh, width](Graph& g, std::size_t self) {
        auto gy = g.grad(self);
        auto gx = g.grad_accumulator(ix);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t n = 0; n < tokens; ++n)
            for (std::size_t h = 0; h < heads; ++h)
              for (std::size_t j = 0; j < dh; ++j)
                gx[(b * tokens + n) * width + h * dh + j] +=
                    gy[((b * heads + h) * tokens + n) * dh + j];
      });
}

Var merge_heads(Var x, std::size_t batch, std::size_t heads) {
  const Tensor& xv = x.value();
  if (xv.rank() != 3 || xv.dim(0) != batch * heads) {
    shape_mismatch("merge_heads", xv.shape, Shape{batch, heads});
  }
  const std::size_t tokens = xv.dim(1), dh = xv.dim(2), width = heads * dh;
  Tensor out({batch * tokens, width});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t n = 0; n < tokens; ++n)
        for (std::size_t j = 0; j < dh; ++j)
          out.data[(b * tokens + n) * width + h * dh + j] =
              xv.data[((b * heads + h) * tokens + n) * dh + j];
  const std::size_t ix = x.id();
  return x.graph().record(
      std::move(out), {ix}, [ix, batch, tokens, heads, dh, width](Graph& g, std::size_t self) {
        auto gy = g.grad(self);
        auto gx = g.grad_accumulator(ix);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t n = 0; n < tokens; ++n)
              for (std::size_t j = 0; j < dh; ++j)
                gx[((b * heads + h) * tokens + n) * dh + j] +=
                    gy[(b * tokens + n) * width + h * dh + j];
      });
}

Var nchw_to_tokens(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 4) shape_mismatch("nchw_to_tokens", xv.shape, Shape{0, 0, 0, 0});
  const std::size_t b = xv.dim(0), c = xv.dim(1), n = xv.dim(2) * xv.dim(3);
  Tensor out({b, n, c});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t t = 0; t < n; ++t)
        out.data[(i * n + t) * c + ch] = xv.data[(i * c + ch) * n + t];
  const std::size_t ix = x.id();
  return x.graph().record(std::move(out), {ix}, [ix, b, c, n](Graph& g, std::size_t self) {
    auto gy = g.grad(self);
    auto gx = g.grad_accumulator(ix);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t t = 0; t < n; ++t)
          gx[(i * c + ch) * n + t] += gy[(i * n + t) * c + ch];
  });
}

Var gather_rows(Var x, std::span<const std::size_t> rows) {
  const Tensor& xv = x.value();
  require(xv.rank() >= 1, "gather_rows: scalar input");
  const std::size_t count = xv.dim(0);
  const std::size_t width = count == 0 ? 0 : xv.numel() / count;
  Shape shape = xv.shape;
  shape[0] = rows.size();
  Tensor out(shape);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require(rows[r] < count, "gather_rows: row index " + std::to_string(rows[r]) +
                                 " out of range for shape " + shape_string(xv.shape));
    std::copy_n(xv.data.begin() + rows[r] * width, width, out.data.begin() + r * width);
  }
  const std::size_t ix = x.id();
  std::vector<std::size_t> picked(rows.begin(), rows.end());
  return x.graph().record(std::move(out), {ix},
                          [ix, width, picked = std::move(picked)](Graph& g, std::size_t self) {
                            auto gy = g.grad(self);
                            auto gx = g.grad_accumulator(ix);
                            for (std::size_t r = 0; r < picked.size(); ++r)
                              for (std::size_t j = 0; j < width; ++j)
                                gx[picked[r] * width + j] += gy[r * width + j];
                          });
}

Var concat_rows(Var a, Var b) {
  same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() < 1 || av.rank() != bv.rank() ||
      !std::equal(av.shape.begin() + 1, av.shape.end(), bv.shape.begin() + 1)) {
    shape_mismatch("concat_rows", av.shape, bv.shape);
  }
  Shape shape = av.shape;
  shape[0] += bv.dim(0);
  Tensor out(shape);
  std::copy(av.data.begin(), av.data.end(), out.data.begin());
  std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + av.numel());
  const std::size_t ia = a.id(), ib = b.id(), na = av.numel();
  return a.graph().record(std::move(out), {ia, ib}, [ia, ib, na](Graph& g, std::size_t self) {
    auto gy = g.grad(self);
    if (g.requires_grad(ia)) {
      auto ga = g.grad_accumulator(ia);
      for (std::size_t i = 0; i < na; ++i) ga[i] += gy[i];
    }
    if (g.requires_grad(ib)) {
      auto gb = g.grad_accumulator(ib);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[na + i];
    }
  });
}

Var l2_normalize(Var x, double eps) {
  const Tensor& xv = x.value();
  require(xv.rank() >= 1, "l2_normalize: scalar input");
  const std::size_t d = xv.shape.back();
  const std::size_t rows = d == 0 ? 0 : xv.numel() / d;
  Tensor out(xv.shape);
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += xv.data[r * d + j] * xv.data[r * d + j];
    norms[r] = std::sqrt(sq);
    const double denom = norms[r] + eps;
    for (std::size_t j = 0; j < d; ++j) out.data[r * d + j] = xv.data[r * d + j] / denom;
  }
  const std::size_t ix = x.id();
  return x.graph().record(
      std::move(out), {ix}, [ix, d, rows, eps, norms = std::move(norms)](Graph& g, std::size_t self) {
        auto gy = g.grad(self);
        const auto& xd = g.value(ix).data;
        auto gx = g.grad_accumulator(ix);
        for (std::size_t r = 0; r < rows; ++r) {
          const double n = norms[r];
          const double denom = n + eps;
          double dot = 0.0;
          for (std::size_t j = 0; j < d; ++j) dot += gy[r * d + j] * xd[r * d + j];
          // d||x||/dx = x/||x||; undefined at 0 where only the linear term remains.
          const double coupling = n > 0.0 ? dot / (denom * denom * n) : 0.0;
          for (std::size_t j = 0; j < d; ++j)
            gx[r * d + j] += gy[r * d + j] / denom - coupling * xd[r * d + j];
        }
      });
}

namespace {

std::vector<double> row_softmax(const Tensor& logits) {
  const std::size_t k = logits.dim(1);
  std::vector<double> probs(logits.numel());
  for (std::size_t r = 0; r < logits.dim(0); ++r) {
    const double* row = logits.data.data() + r * k;
    const double mx = *std::max_element(row, row + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      probs[r * k + j] = std::exp(row[j] - mx);
      total += probs[r * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) probs[r * k + j] /= total;
  }
  return probs;
}

}  // namespace

Var cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& lv = logits.value();
  if (lv.rank() != 2 || lv.dim(0) != labels.size() || lv.dim(0) == 0) {
    shape_mismatch("cross_entropy", lv.shape, Shape{labels.size()});
  }
  const std::size_t b = lv.dim(0), k = lv.dim(1);
  Tensor targets({b, k});
  for (std::size_t i = 0; i < b; ++i) {
    require(labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < k,
            "cross_entropy: label " + std::to_string(labels[i]) + " outside [0," +
                std::to_string(k) + ")");
    targets.data[i * k + labels[i]] = 1.0;
  }
  return cross_entropy_soft(logits, targets);
}

Var cross_entropy_soft(Var logits, const Tensor& targets) {
  const Tensor& lv = logits.value();
  if (lv.rank() != 2 || targets.shape != lv.shape || lv.dim(0) == 0) {
    shape_mismatch("cross_entropy_soft", lv.shape, targets.shape);
  }
  const std::size_t b = lv.dim(0), k = lv.dim(1);
  std::vector<double> probs = row_softmax(lv);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double* row = lv.data.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += std::exp(row[j] - mx);
    const double log_z = mx + std::log(total);
    for (std::size_t j = 0; j < k; ++j) {
      const double t = targets.data[i * k + j];
      if (t != 0.0) loss -= t * (row[j] - log_z);
    }
  }
  loss /= static_cast<double>(b);
  const std::size_t il = logits.id();
  return logits.graph().record(
      Tensor({1}, {loss}), {il},
      [il, b, k, probs = std::move(probs), t = targets.data](Graph& g, std::size_t self) {
        const double gy = g.grad(self)[0] / static_cast<double>(b);
        auto gl = g.grad_accumulator(il);
        for (std::size_t i = 0; i < b; ++i) {
          double mass = 0.0;
          for (std::size_t j = 0; j < k; ++j) mass += t[i * k + j];
          for (std::size_t j = 0; j < k; ++j)
            gl[i * k + j] += gy * (probs[i * k + j] * mass - t[i * k + j]);
        }
      });
}

}  // namespace spmix
