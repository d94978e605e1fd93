#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <type_traits>
#include <unordered_set>
#include <utility>
#include <vector>

#include "parconv/conv_kernels.hpp"
#include "parconv/errors.hpp"
#include "parconv/tensor.hpp"
#include "parconv/threading.hpp"

namespace parconv {

enum class ConvKind { kStandard, kGrouped, kPointwise, kParallel };

/// Hyperparameters of one convolutional layer. Stride is fixed to 1 and
/// padding to (d_k - 1) / 2, the regime where output spatial dims equal
/// input spatial dims.
struct ConvLayerSpec {
  ConvKind kind = ConvKind::kStandard;
  int d_k = 3;
  int d_m = 0;  // input channels
  int d_n = 0;  // output channels
  int groups = 1;
  int stride = 1;
  int padding = -1;  // -1 means same padding
  bool bias = true;

  int effective_padding() const { return padding < 0 ? (d_k - 1) / 2 : padding; }

  void validate() const {
    if (d_k <= 0 || d_k % 2 == 0) {
      throw InvalidConfigError("kernel size must be odd and positive, got " +
                               std::to_string(d_k));
    }
    if (d_m <= 0 || d_n <= 0) {
      throw InvalidConfigError("channel counts must be positive");
    }
    if (stride != 1) throw InvalidConfigError("only stride 1 is supported");
    if (effective_padding() != (d_k - 1) / 2) {
      throw InvalidConfigError("only same padding is supported");
    }
    if (groups <= 0) throw GroupError("group count must be positive");
    if (kind == ConvKind::kGrouped || kind == ConvKind::kParallel) {
      if (d_m % groups != 0 || d_n % groups != 0) {
        throw GroupError("groups " + std::to_string(groups) +
                         " must divide input channels " + std::to_string(d_m) +
                         " and output channels " + std::to_string(d_n));
      }
    }
    if (kind == ConvKind::kPointwise && (d_k != 1 || groups != 1)) {
      throw InvalidConfigError("pointwise layers require d_k == 1, groups == 1");
    }
  }
};

/// Checked mode: ops validate their outputs are finite and raise
/// NumericError otherwise. Off by default (costs one scan per op).
inline std::atomic<bool>& checked_mode_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}
inline void set_checked_mode(bool on) { checked_mode_flag().store(on); }
inline bool checked_mode() { return checked_mode_flag().load(); }

template <typename T>
void check_finite(const TensorT<T>& t, const char* op) {
  if (!checked_mode()) return;
  if (!t.all_finite()) {
    throw NumericError(std::string(op) + " produced a non-finite value");
  }
}

/// Reference-semantics handle to one node of the autograd graph. Leaves are
/// parameters or inputs; interior nodes record how to push gradients to
/// their parents. The graph is rebuilt on every forward pass.
template <typename T>
class VarT {
 public:
  struct Node {
    TensorT<T> value;
    TensorT<T> grad;  // empty until backward touches it
    bool requires_grad = false;
    std::vector<VarT> parents;
    std::function<void(Node&)> backprop;  // reads grad, accumulates parents'

    bool is_leaf() const { return !static_cast<bool>(backprop); }

    TensorT<T>& ensure_grad() {
      if (grad.empty()) grad = TensorT<T>(value.shape());
      return grad;
    }
  };

  VarT() = default;

  explicit VarT(TensorT<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static VarT make_op(TensorT<T> value, std::vector<VarT> parents,
                      std::function<void(Node&)> backprop) {
    VarT v(std::move(value), false);
    for (const VarT& p : parents) {
      if (p.requires_grad()) v.node_->requires_grad = true;
    }
    v.node_->parents = std::move(parents);
    v.node_->backprop = std::move(backprop);
    return v;
  }

  bool defined() const { return node_ != nullptr; }

  const TensorT<T>& value() const { return node_->value; }
  TensorT<T>& mutable_value() { return node_->value; }

  bool requires_grad() const { return node_ && node_->requires_grad; }

  /// Gradient populated by the last backward pass; GraphError when backward
  /// has not run through this variable.
  const TensorT<T>& grad() const {
    if (!node_ || node_->grad.empty()) {
      throw GraphError("gradient requested before backward populated it");
    }
    return node_->grad;
  }

  void zero_grad() {
    if (node_) node_->grad = TensorT<T>();
  }

  Node* node() const { return node_.get(); }

 private:
  std::shared_ptr<Node> node_;
};

/// Reverse-mode sweep from a scalar loss. With release_graph the values and
/// gradients of interior nodes are freed as soon as they have been consumed,
/// which bounds peak memory during training; read loss.value() first.
template <typename T>
void backward(const VarT<T>& loss, bool release_graph = false) {
  if (!loss.defined()) throw GraphError("backward on an undefined variable");
  if (loss.value().numel() != 1) {
    throw GraphError("backward requires a scalar loss, got shape " +
                     loss.value().shape_string());
  }
  if (!loss.requires_grad()) {
    throw GraphError("backward on a graph with no trainable inputs");
  }

  using Node = typename VarT<T>::Node;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  // Iterative post-order DFS; order ends up leaves-first.
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node(), 0}};
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next].node();
      ++next;
      if (seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad()[0] = T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->is_leaf()) {
      if (!node->parents.empty()) {
        throw GraphError("backward through a released graph");
      }
      continue;
    }
    if (!node->requires_grad || node->grad.empty()) continue;
    node->backprop(*node);
    if (release_graph) {
      node->value = TensorT<T>();
      node->grad = TensorT<T>();
      node->backprop = nullptr;
    }
  }
}

namespace ops {

namespace detail {

template <typename T>
kernels::Conv2dDims conv_dims(const TensorT<T>& x, const ConvLayerSpec& spec) {
  kernels::Conv2dDims d;
  d.batch = x.dim(0);
  d.in_channels = x.dim(1);
  d.height = x.dim(2);
  d.width = x.dim(3);
  d.out_channels = spec.d_n;
  d.kernel = spec.d_k;
  d.groups = spec.groups;
  return d;
}

template <typename T>
void validate_conv_shapes(const VarT<T>& x, const VarT<T>& w,
                          const std::optional<VarT<T>>& bias,
                          const ConvLayerSpec& spec) {
  spec.validate();
  if (x.value().ndim() != 4) {
    throw ShapeError("conv input must be NCHW, got " + x.value().shape_string());
  }
  if (x.value().dim(1) != spec.d_m) {
    throw ShapeError("conv input has " + std::to_string(x.value().dim(1)) +
                     " channels, spec says " + std::to_string(spec.d_m));
  }
  const std::vector<int> expect{spec.d_n, spec.d_m / spec.groups, spec.d_k, spec.d_k};
  if (w.value().shape() != expect) {
    throw ShapeError("conv weights shaped " + w.value().shape_string() +
                     ", expected " + TensorT<T>::shape_string(expect));
  }
  if (bias && bias->value().shape() != std::vector<int>{spec.d_n}) {
    throw ShapeError("conv bias shaped " + bias->value().shape_string() +
                     ", expected (" + std::to_string(spec.d_n) + ")");
  }
}

/// Shared implementation for all convolution flavors.
template <typename T>
VarT<T> conv2d(VarT<T> x, VarT<T> w, std::type_identity_t<std::optional<VarT<T>>> bias,
               ConvLayerSpec spec) {
  validate_conv_shapes(x, w, bias, spec);
  const kernels::Conv2dDims d = conv_dims(x.value(), spec);

  TensorT<T> y({d.batch, d.out_channels, d.height, d.width});
  kernels::conv2d_forward(x.value().raw(), w.value().raw(),
                          bias ? bias->value().raw() : nullptr, y.raw(), d);
  check_finite(y, "conv2d");

  std::vector<VarT<T>> parents{x, w};
  if (bias) parents.push_back(*bias);
  return VarT<T>::make_op(
      std::move(y), std::move(parents), [d](typename VarT<T>::Node& self) {
        VarT<T>& xv = self.parents[0];
        VarT<T>& wv = self.parents[1];
        const T* dy = self.grad.raw();
        if (xv.requires_grad()) {
          kernels::conv2d_backward_input(wv.node()->value.raw(), dy,
                                         xv.node()->ensure_grad().raw(), d);
        }
        if (wv.requires_grad()) {
          kernels::conv2d_backward_weights(xv.node()->value.raw(), dy,
                                           wv.node()->ensure_grad().raw(), d);
        }
        if (self.parents.size() > 2 && self.parents[2].requires_grad()) {
          kernels::conv2d_backward_bias(
              dy, self.parents[2].node()->ensure_grad().raw(), d.batch,
              d.out_channels, static_cast<std::int64_t>(d.height) * d.width);
        }
      });
}

}  // namespace detail

/// Standard convolution: every output channel sees every input channel.
template <typename T>
VarT<T> conv2d_standard(VarT<T> x, VarT<T> w, std::type_identity_t<std::optional<VarT<T>>> bias,
                        ConvLayerSpec spec) {
  if (spec.groups != 1) {
    throw GroupError("conv2d_standard requires groups == 1");
  }
  spec.kind = ConvKind::kStandard;
  return detail::conv2d(std::move(x), std::move(w), std::move(bias), spec);
}

/// Grouped convolution: channels split into `groups` independent blocks.
template <typename T>
VarT<T> conv2d_grouped(VarT<T> x, VarT<T> w, std::type_identity_t<std::optional<VarT<T>>> bias,
                       ConvLayerSpec spec) {
  spec.kind = ConvKind::kGrouped;
  return detail::conv2d(std::move(x), std::move(w), std::move(bias), spec);
}

/// 1x1 convolution: a per-pixel linear map across channels.
template <typename T>
VarT<T> conv2d_pointwise(VarT<T> x, VarT<T> w, std::type_identity_t<std::optional<VarT<T>>> bias = {}) {
  ConvLayerSpec spec;
  spec.kind = ConvKind::kPointwise;
  spec.d_k = 1;
  spec.d_m = x.value().ndim() == 4 ? x.value().dim(1) : 0;
  spec.d_n = w.value().ndim() == 4 ? w.value().dim(0) : 0;
  spec.groups = 1;
  return detail::conv2d(std::move(x), std::move(w), std::move(bias), spec);
}

template <typename T>
VarT<T> add(VarT<T> a, VarT<T> b) {
  if (!a.value().same_shape(b.value())) {
    throw ShapeError("add shape mismatch: " + a.value().shape_string() + " vs " +
                     b.value().shape_string());
  }
  TensorT<T> y(a.value().shape());
  const std::int64_t n = y.numel();
  const T* pa = a.value().raw();
  const T* pb = b.value().raw();
  T* py = y.raw();
  for (std::int64_t i = 0; i < n; ++i) py[i] = pa[i] + pb[i];
  check_finite(y, "add");
  return VarT<T>::make_op(std::move(y), {a, b}, [](typename VarT<T>::Node& self) {
    const T* dy = self.grad.raw();
    const std::int64_t n = self.grad.numel();
    for (int pi = 0; pi < 2; ++pi) {
      if (!self.parents[pi].requires_grad()) continue;
      T* dst = self.parents[pi].node()->ensure_grad().raw();
      for (std::int64_t i = 0; i < n; ++i) dst[i] += dy[i];
    }
  });
}

/// x (N,C,H,W) + bias (C), broadcast over batch and pixels.
template <typename T>
VarT<T> add_channel_bias(VarT<T> x, VarT<T> bias) {
  if (x.value().ndim() != 4 || bias.value().ndim() != 1 ||
      bias.value().dim(0) != x.value().dim(1)) {
    throw ShapeError("add_channel_bias expects NCHW input and a (C) bias");
  }
  const int batch = x.value().dim(0), c = x.value().dim(1);
  const std::int64_t hw =
      static_cast<std::int64_t>(x.value().dim(2)) * x.value().dim(3);
  TensorT<T> y(x.value().shape());
  const T* px = x.value().raw();
  const T* pb = bias.value().raw();
  T* py = y.raw();
  for (int n = 0; n < batch; ++n) {
    for (int ci = 0; ci < c; ++ci) {
      const T b = pb[ci];
      const std::size_t off = (static_cast<std::size_t>(n) * c + ci) * hw;
      for (std::int64_t i = 0; i < hw; ++i) py[off + i] = px[off + i] + b;
    }
  }
  check_finite(y, "add_channel_bias");
  return VarT<T>::make_op(
      std::move(y), {x, bias}, [batch, c, hw](typename VarT<T>::Node& self) {
        const T* dy = self.grad.raw();
        if (self.parents[0].requires_grad()) {
          T* dx = self.parents[0].node()->ensure_grad().raw();
          const std::int64_t n = self.grad.numel();
          for (std::int64_t i = 0; i < n; ++i) dx[i] += dy[i];
        }
        if (self.parents[1].requires_grad()) {
          kernels::conv2d_backward_bias(
              dy, self.parents[1].node()->ensure_grad().raw(), batch, c, hw);
        }
      });
}

/// Parallel convolution block: a grouped d_k x d_k branch and a pointwise
/// 1x1 branch over the same input, merged by elementwise sum, then bias.
template <typename T>
VarT<T> parallel_conv(VarT<T> x, VarT<T> w3, VarT<T> w1,
                      std::type_identity_t<std::optional<VarT<T>>> bias, ConvLayerSpec spec) {
  if (spec.kind != ConvKind::kParallel) {
    throw InvalidConfigError("parallel_conv requires kind == Parallel");
  }
  spec.validate();

  ConvLayerSpec grouped = spec;
  grouped.kind = ConvKind::kGrouped;
  grouped.bias = false;
  VarT<T> a = conv2d_grouped(x, w3, std::nullopt, grouped);

  if (w1.value().shape() !=
      std::vector<int>{spec.d_n, spec.d_m, 1, 1}) {
    throw ShapeError("parallel_conv pointwise weights shaped " +
                     w1.value().shape_string() + ", expected (" +
                     std::to_string(spec.d_n) + ", " + std::to_string(spec.d_m) +
                     ", 1, 1)");
  }
  VarT<T> b = conv2d_pointwise(x, w1);

  VarT<T> merged = add(std::move(a), std::move(b));
  if (bias) merged = add_channel_bias(std::move(merged), *bias);
  return merged;
}

template <typename T>
VarT<T> relu(VarT<T> x) {
  TensorT<T> y(x.value().shape());
  const std::int64_t n = y.numel();
  const T* px = x.value().raw();
  T* py = y.raw();
  for (std::int64_t i = 0; i < n; ++i) py[i] = px[i] > T{0} ? px[i] : T{0};
  check_finite(y, "relu");
  return VarT<T>::make_op(std::move(y), {x}, [](typename VarT<T>::Node& self) {
    if (!self.parents[0].requires_grad()) return;
    const T* dy = self.grad.raw();
    const T* y = self.value.raw();
    T* dx = self.parents[0].node()->ensure_grad().raw();
    const std::int64_t n = self.grad.numel();
    for (std::int64_t i = 0; i < n; ++i) {
      if (y[i] > T{0}) dx[i] += dy[i];
    }
  });
}

/// 2x2 average pooling with stride 2; spatial dims must be even.
template <typename T>
VarT<T> avg_pool2(VarT<T> x) {
  if (x.value().ndim() != 4) throw ShapeError("avg_pool2 expects NCHW");
  const int batch = x.value().dim(0), c = x.value().dim(1);
  const int h = x.value().dim(2), w = x.value().dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("avg_pool2 requires even spatial dims, got " +
                     x.value().shape_string());
  }
  const int ho = h / 2, wo = w / 2;
  TensorT<T> y({batch, c, ho, wo});
  const T* px = x.value().raw();
  T* py = y.raw();
  for (int n = 0; n < batch; ++n) {
    for (int ci = 0; ci < c; ++ci) {
      const std::size_t xoff = (static_cast<std::size_t>(n) * c + ci) *
                               static_cast<std::size_t>(h) * w;
      const std::size_t yoff = (static_cast<std::size_t>(n) * c + ci) *
                               static_cast<std::size_t>(ho) * wo;
      for (int i = 0; i < ho; ++i) {
        for (int j = 0; j < wo; ++j) {
          const std::size_t p = xoff + static_cast<std::size_t>(2 * i) * w + 2 * j;
          py[yoff + static_cast<std::size_t>(i) * wo + j] =
              (px[p] + px[p + 1] + px[p + w] + px[p + w + 1]) / T{4};
        }
      }
    }
  }
  check_finite(y, "avg_pool2");
  return VarT<T>::make_op(
      std::move(y), {x}, [batch, c, h, w, ho, wo](typename VarT<T>::Node& self) {
        if (!self.parents[0].requires_grad()) return;
        const T* dy = self.grad.raw();
        T* dx = self.parents[0].node()->ensure_grad().raw();
        for (int n = 0; n < batch; ++n) {
          for (int ci = 0; ci < c; ++ci) {
            const std::size_t xoff = (static_cast<std::size_t>(n) * c + ci) *
                                     static_cast<std::size_t>(h) * w;
            const std::size_t yoff = (static_cast<std::size_t>(n) * c + ci) *
                                     static_cast<std::size_t>(ho) * wo;
            for (int i = 0; i < ho; ++i) {
              for (int j = 0; j < wo; ++j) {
                const T g = dy[yoff + static_cast<std::size_t>(i) * wo + j] / T{4};
                const std::size_t p =
                    xoff + static_cast<std::size_t>(2 * i) * w + 2 * j;
                dx[p] += g;
                dx[p + 1] += g;
                dx[p + w] += g;
                dx[p + w + 1] += g;
              }
            }
          }
        }
      });
}

/// N x C x H x W -> N x C, mean over pixels.
template <typename T>
VarT<T> global_avg_pool(VarT<T> x) {
  if (x.value().ndim() != 4) throw ShapeError("global_avg_pool expects NCHW");
  const int batch = x.value().dim(0), c = x.value().dim(1);
  const std::int64_t hw =
      static_cast<std::int64_t>(x.value().dim(2)) * x.value().dim(3);
  TensorT<T> y({batch, c});
  const T* px = x.value().raw();
  T* py = y.raw();
  for (int n = 0; n < batch; ++n) {
    for (int ci = 0; ci < c; ++ci) {
      const T* p = px + (static_cast<std::size_t>(n) * c + ci) * hw;
      T acc{0};
      for (std::int64_t i = 0; i < hw; ++i) acc += p[i];
      py[static_cast<std::size_t>(n) * c + ci] = acc / static_cast<T>(hw);
    }
  }
  check_finite(y, "global_avg_pool");
  return VarT<T>::make_op(
      std::move(y), {x}, [batch, c, hw](typename VarT<T>::Node& self) {
        if (!self.parents[0].requires_grad()) return;
        const T* dy = self.grad.raw();
        T* dx = self.parents[0].node()->ensure_grad().raw();
        for (int n = 0; n < batch; ++n) {
          for (int ci = 0; ci < c; ++ci) {
            const T g = dy[static_cast<std::size_t>(n) * c + ci] / static_cast<T>(hw);
            T* p = dx + (static_cast<std::size_t>(n) * c + ci) * hw;
            for (std::int64_t i = 0; i < hw; ++i) p[i] += g;
          }
        }
      });
}

/// y = x * w^T + b with x (N, In), w (Out, In), b (Out).
template <typename T>
VarT<T> linear(VarT<T> x, VarT<T> w, std::type_identity_t<std::optional<VarT<T>>> bias = {}) {
  if (x.value().ndim() != 2 || w.value().ndim() != 2 ||
      x.value().dim(1) != w.value().dim(1)) {
    throw ShapeError("linear shape mismatch: x " + x.value().shape_string() +
                     ", w " + w.value().shape_string());
  }
  const int batch = x.value().dim(0);
  const int in = x.value().dim(1);
  const int out = w.value().dim(0);
  if (bias && bias->value().shape() != std::vector<int>{out}) {
    throw ShapeError("linear bias shaped " + bias->value().shape_string());
  }

  TensorT<T> y({batch, out});
  const T* px = x.value().raw();
  const T* pw = w.value().raw();
  T* py = y.raw();
  for (int n = 0; n < batch; ++n) {
    for (int o = 0; o < out; ++o) {
      T acc = bias ? bias->value()[o] : T{0};
      const T* xr = px + static_cast<std::size_t>(n) * in;
      const T* wr = pw + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) acc += xr[i] * wr[i];
      py[static_cast<std::size_t>(n) * out + o] = acc;
    }
  }
  check_finite(y, "linear");

  std::vector<VarT<T>> parents{x, w};
  if (bias) parents.push_back(*bias);
  return VarT<T>::make_op(
      std::move(y), std::move(parents),
      [batch, in, out](typename VarT<T>::Node& self) {
        const T* dy = self.grad.raw();
        VarT<T>& xv = self.parents[0];
        VarT<T>& wv = self.parents[1];
        if (xv.requires_grad()) {
          T* dx = xv.node()->ensure_grad().raw();
          const T* pw = wv.node()->value.raw();
          for (int n = 0; n < batch; ++n) {
            for (int o = 0; o < out; ++o) {
              const T g = dy[static_cast<std::size_t>(n) * out + o];
              const T* wr = pw + static_cast<std::size_t>(o) * in;
              T* xr = dx + static_cast<std::size_t>(n) * in;
              for (int i = 0; i < in; ++i) xr[i] += g * wr[i];
            }
          }
        }
        if (wv.requires_grad()) {
          T* dw = wv.node()->ensure_grad().raw();
          const T* px = xv.node()->value.raw();
          for (int n = 0; n < batch; ++n) {
            for (int o = 0; o < out; ++o) {
              const T g = dy[static_cast<std::size_t>(n) * out + o];
              const T* xr = px + static_cast<std::size_t>(n) * in;
              T* wr = dw + static_cast<std::size_t>(o) * in;
              for (int i = 0; i < in; ++i) wr[i] += g * xr[i];
            }
          }
        }
        if (self.parents.size() > 2 && self.parents[2].requires_grad()) {
          T* db = self.parents[2].node()->ensure_grad().raw();
          for (int n = 0; n < batch; ++n) {
            for (int o = 0; o < out; ++o) {
              db[o] += dy[static_cast<std::size_t>(n) * out + o];
            }
          }
        }
      });
}

/// Row-wise stable softmax of a (N, K) tensor; plain function, no graph.
template <typename T>
TensorT<T> softmax(const TensorT<T>& logits) {
  if (logits.ndim() != 2) throw ShapeError("softmax expects (N, K)");
  const int batch = logits.dim(0), k = logits.dim(1);
  TensorT<T> out(logits.shape());
  for (int n = 0; n < batch; ++n) {
    const T* row = logits.raw() + static_cast<std::size_t>(n) * k;
    T* orow = out.raw() + static_cast<std::size_t>(n) * k;
    T mx = row[0];
    for (int i = 1; i < k; ++i) mx = std::max(mx, row[i]);
    T denom{0};
    for (int i = 0; i < k; ++i) {
      orow[i] = std::exp(row[i] - mx);
      denom += orow[i];
    }
    for (int i = 0; i < k; ++i) orow[i] /= denom;
  }
  return out;
}

/// Mean over the batch of -log softmax(logits)[label]. Scalar output.
template <typename T>
VarT<T> softmax_cross_entropy(VarT<T> logits, const std::vector<int>& labels) {
  if (logits.value().ndim() != 2) {
    throw ShapeError("softmax_cross_entropy expects (N, K) logits");
  }
  const int batch = logits.value().dim(0);
  const int k = logits.value().dim(1);
  if (static_cast<int>(labels.size()) != batch) {
    throw ShapeError("label count " + std::to_string(labels.size()) +
                     " does not match batch " + std::to_string(batch));
  }
  for (const int l : labels) {
    if (l < 0 || l >= k) {
      throw LabelError("label " + std::to_string(l) + " out of range [0, " +
                       std::to_string(k) + ")");
    }
  }

  TensorT<T> probs = softmax(logits.value());
  T loss{0};
  for (int n = 0; n < batch; ++n) {
    const T p = probs.at(n, labels[static_cast<std::size_t>(n)]);
    loss -= std::log(std::max(p, std::numeric_limits<T>::min()));
  }
  loss /= static_cast<T>(batch);

  TensorT<T> out({1});
  out[0] = loss;
  check_finite(out, "softmax_cross_entropy");
  return VarT<T>::make_op(
      std::move(out), {logits},
      [probs = std::move(probs), labels, batch, k](typename VarT<T>::Node& self) {
        if (!self.parents[0].requires_grad()) return;
        const T upstream = self.grad[0];
        T* dl = self.parents[0].node()->ensure_grad().raw();
        const T scale = upstream / static_cast<T>(batch);
        for (int n = 0; n < batch; ++n) {
          for (int i = 0; i < k; ++i) {
            T g = probs.at(n, i);
            if (i == labels[static_cast<std::size_t>(n)]) g -= T{1};
            dl[static_cast<std::size_t>(n) * k + i] += scale * g;
          }
        }
      });
}

/// Scalar sum of all elements.
template <typename T>
VarT<T> sum(VarT<T> x) {
  T acc{0};
  for (const T v : x.value().data()) acc += v;
  TensorT<T> out({1});
  out[0] = acc;
  return VarT<T>::make_op(std::move(out), {x}, [](typename VarT<T>::Node& self) {
    if (!self.parents[0].requires_grad()) return;
    const T g = self.grad[0];
    TensorT<T>& dx = self.parents[0].node()->ensure_grad();
    for (auto& v : dx.data()) v += g;
  });
}

}  // namespace ops

using Var = VarT<float>;

}  // namespace parconv
