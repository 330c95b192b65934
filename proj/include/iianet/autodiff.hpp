// Copyright 2026 The IIANet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Reverse-mode automatic differentiation on a per-forward-pass tape.
//
// A Tape records every operation of one forward pass in topological order.
// backward() walks the records in reverse exactly once, accumulating
// gradients into per-node buffers, so a value consumed by several operations
// (fan-out, shared weights across cycles) receives the sum of its consumers'
// contributions. Tapes are confined to one thread and discarded after use.

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "iianet/tensor.hpp"

namespace iianet {

template <typename T>
class Tape;

/// Handle to a node recorded on a Tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  std::size_t channels() const { return value().channels(); }
  std::size_t length() const { return value().length(); }
  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename T>
class Tape {
 public:
  /// Receives the node's upstream gradient; accumulates into input buffers.
  using BackwardFn = std::function<void(const Tensor<T>& grad_out, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) {
    value.check_finite("constant");
    nodes_.push_back(Node{std::move(value), {}, {}, "const", false, {}});
    return Var<T>(this, nodes_.size() - 1);
  }

  /// Trainable leaf. Named leaves are reported by backward().
  Var<T> leaf(Tensor<T> value, std::string name = {}) {
    value.check_finite("leaf " + name);
    nodes_.push_back(Node{std::move(value), {}, {}, "leaf", true, std::move(name)});
    return Var<T>(this, nodes_.size() - 1);
  }

  Var<T> record(Tensor<T> value, const char* op,
                std::initializer_list<Var<T>> inputs, BackwardFn fn) {
    if (!value.all_finite()) {
      throw NonFiniteError(std::string("non-finite output of ") + op + " " +
                           shape_str(value.shape()));
    }
    bool needs = false;
    for (const auto& in : inputs) needs = needs || nodes_[in.id()].requires_grad;
    nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : BackwardFn{},
                          op, needs, {}});
    return Var<T>(this, nodes_.size() - 1);
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient accumulation buffer for `id`, allocated as zeros on first use.
  Tensor<T>& grad_buffer(std::size_t id) {
    auto& n = nodes_[id];
    if (!n.grad) n.grad.emplace(Tensor<T>::zeros(n.value.shape()));
    return *n.grad;
  }

  void accumulate(std::size_t id, const Tensor<T>& g) {
    auto& buf = grad_buffer(id);
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
  }

  /// Gradient of the last backward() root w.r.t. `v` (zeros if unreached).
  Tensor<T> grad(const Var<T>& v) const {
    const auto& n = nodes_[v.id()];
    return n.grad ? *n.grad : Tensor<T>::zeros(n.value.shape());
  }

  /// Runs reverse accumulation from a scalar root. Returns gradients of every
  /// named leaf; leaves the root does not reach get zero tensors.
  std::map<std::string, Tensor<T>> backward(const Var<T>& root) {
    if (root.value().size() != 1) {
      throw ShapeError("backward root must be scalar, got " +
                       shape_str(root.shape()));
    }
    for (auto& n : nodes_) n.grad.reset();
    grad_buffer(root.id())[0] = T(1);
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.grad || !n.backward) continue;
      n.backward(*n.grad, *this);
    }
    std::map<std::string, Tensor<T>> out;
    for (const auto& n : nodes_) {
      if (n.name.empty()) continue;
      out[n.name] = n.grad ? *n.grad : Tensor<T>::zeros(n.value.shape());
    }
    return out;
  }

 private:
  struct Node {
    Tensor<T> value;
    std::optional<Tensor<T>> grad;
    BackwardFn backward;
    const char* op;
    bool requires_grad;
    std::string name;
  };

  std::deque<Node> nodes_;
};

namespace detail {

// Broadcast geometry of b into a. Only rank <= 2 tensors broadcast, and each
// extent of b must equal a's or be 1 (singleton channel / temporal axis).
struct Broadcast {
  std::size_t rows, cols;        // output viewed as [rows x cols]
  std::size_t b_row_stride;      // 0 when b has a singleton row axis
  std::size_t b_col_stride;      // 0 when b has a singleton column axis
  bool trivial;
};

inline Broadcast broadcast_geometry(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return {1, shape_numel(a), 0, 1, true};
  auto fail = [&] {
    return ShapeError(std::string(op) + ": cannot broadcast " + shape_str(b) +
                      " into " + shape_str(a));
  };
  if (a.size() != b.size() || a.size() > 2) throw fail();
  std::size_t ar = a.size() == 2 ? a[0] : 1, ac = a.back();
  std::size_t br = b.size() == 2 ? b[0] : 1, bc = b.back();
  if ((br != ar && br != 1) || (bc != ac && bc != 1)) throw fail();
  return {ar, ac, br == 1 ? 0 : bc, bc == 1 ? std::size_t{0} : 1, false};
}

template <typename T>
void reduce_into(const Tensor<T>& g, Tensor<T>& out, const Broadcast& bc) {
  if (bc.trivial) {
    for (std::size_t i = 0; i < g.size(); ++i) out[i] += g[i];
    return;
  }
  for (std::size_t r = 0; r < bc.rows; ++r)
    for (std::size_t c = 0; c < bc.cols; ++c)
      out[r * bc.b_row_stride + c * bc.b_col_stride] += g[r * bc.cols + c];
}

}  // namespace detail

/// Element-wise a + b; b may broadcast along singleton axes.
template <typename T>
Var<T> ew_add(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  auto bc = detail::broadcast_geometry(av.shape(), bv.shape(), "ew_add");
  Tensor<T> out(av.shape());
  if (bc.trivial) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  } else {
    for (std::size_t r = 0; r < bc.rows; ++r)
      for (std::size_t c = 0; c < bc.cols; ++c)
        out[r * bc.cols + c] =
            av[r * bc.cols + c] + bv[r * bc.b_row_stride + c * bc.b_col_stride];
  }
  auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), "ew_add", {a, b},
                         [ia, ib, bc](const Tensor<T>& g, Tape<T>& tp) {
                           if (tp.requires_grad(ia)) tp.accumulate(ia, g);
                           if (tp.requires_grad(ib))
                             detail::reduce_into(g, tp.grad_buffer(ib), bc);
                         });
}

template <typename T>
Var<T> ew_sub(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw ShapeError("ew_sub shape mismatch " + shape_str(av.shape()) + " vs " +
                     shape_str(bv.shape()));
  }
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), "ew_sub", {a, b},
                         [ia, ib](const Tensor<T>& g, Tape<T>& tp) {
                           if (tp.requires_grad(ia)) tp.accumulate(ia, g);
                           if (tp.requires_grad(ib)) {
                             auto& gb = tp.grad_buffer(ib);
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                           }
                         });
}

/// Hadamard product; b may broadcast along singleton axes.
template <typename T>
Var<T> ew_mul(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  auto bc = detail::broadcast_geometry(av.shape(), bv.shape(), "ew_mul");
  Tensor<T> out(av.shape());
  if (bc.trivial) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  } else {
    for (std::size_t r = 0; r < bc.rows; ++r)
      for (std::size_t c = 0; c < bc.cols; ++c)
        out[r * bc.cols + c] =
            av[r * bc.cols + c] * bv[r * bc.b_row_stride + c * bc.b_col_stride];
  }
  auto ia = a.id(), ib = b.id();
  return a.tape().record(
      std::move(out), "ew_mul", {a, b},
      [ia, ib, bc](const Tensor<T>& g, Tape<T>& tp) {
        const auto& av = tp.value(ia);
        const auto& bv = tp.value(ib);
        if (bc.trivial) {
          if (tp.requires_grad(ia)) {
            auto& ga = tp.grad_buffer(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
          }
          if (tp.requires_grad(ib)) {
            auto& gb = tp.grad_buffer(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
          }
          return;
        }
        for (std::size_t r = 0; r < bc.rows; ++r) {
          for (std::size_t c = 0; c < bc.cols; ++c) {
            std::size_t i = r * bc.cols + c;
            std::size_t j = r * bc.b_row_stride + c * bc.b_col_stride;
            if (tp.requires_grad(ia)) tp.grad_buffer(ia)[i] += g[i] * bv[j];
            if (tp.requires_grad(ib)) tp.grad_buffer(ib)[j] += g[i] * av[i];
          }
        }
      });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  const auto& av = a.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  auto ia = a.id();
  return a.tape().record(std::move(out), "scale", {a},
                         [ia, factor](const Tensor<T>& g, Tape<T>& tp) {
                           auto& ga = tp.grad_buffer(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
                         });
}

template <typename T>
T sigmoid_scalar(T x) {
  // Branching keeps exp() argument non-positive, so large |x| saturates
  // instead of overflowing.
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  const auto& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(xv[i]);
  auto ix = x.id();
  // The output node lands at the current end of the tape.
  auto iy = x.tape().size();
  return x.tape().record(std::move(out), "sigmoid", {x},
                         [ix, iy](const Tensor<T>& g, Tape<T>& tp) {
                           const auto& yv = tp.value(iy);
                           auto& gx = tp.grad_buffer(ix);
                           for (std::size_t i = 0; i < g.size(); ++i)
                             gx[i] += g[i] * yv[i] * (T(1) - yv[i]);
                         });
}

/// max(0, x); the subgradient at exactly 0 is 0.
template <typename T>
Var<T> relu(const Var<T>& x) {
  const auto& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
  auto ix = x.id();
  return x.tape().record(std::move(out), "relu", {x},
                         [ix](const Tensor<T>& g, Tape<T>& tp) {
                           const auto& xv = tp.value(ix);
                           auto& gx = tp.grad_buffer(ix);
                           for (std::size_t i = 0; i < g.size(); ++i)
                             if (xv[i] > T(0)) gx[i] += g[i];
                         });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  const auto& xv = x.value();
  double s = 0;
  for (auto v : xv.data()) s += v;
  auto ix = x.id();
  return x.tape().record(Tensor<T>::scalar(T(s)), "sum", {x},
                         [ix](const Tensor<T>& g, Tape<T>& tp) {
                           auto& gx = tp.grad_buffer(ix);
                           for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
                         });
}

/// Σ x ⊙ w for a constant weight tensor; the scalar probe used by gradient checks.
template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& w) {
  const auto& xv = x.value();
  if (xv.shape() != w.shape()) {
    throw ShapeError("weighted_sum shape mismatch " + shape_str(xv.shape()) +
                     " vs " + shape_str(w.shape()));
  }
  double s = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) s += double(xv[i]) * double(w[i]);
  auto ix = x.id();
  return x.tape().record(Tensor<T>::scalar(T(s)), "weighted_sum", {x},
                         [ix, w](const Tensor<T>& g, Tape<T>& tp) {
                           auto& gx = tp.grad_buffer(ix);
                           for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0] * w[i];
                         });
}

/// Right-pads the temporal axis of [C x L] with zeros to `target_len`.
template <typename T>
Var<T> pad_time(const Var<T>& x, std::size_t target_len) {
  const auto& xv = x.value();
  std::size_t c = xv.channels(), l = xv.length();
  if (target_len < l) throw ShapeError("pad_time target shorter than input");
  if (target_len == l) return x;
  Tensor<T> out(Shape{c, target_len});
  for (std::size_t ch = 0; ch < c; ++ch)
    std::copy_n(&xv.data()[ch * l], l, &out.data()[ch * target_len]);
  auto ix = x.id();
  return x.tape().record(std::move(out), "pad_time", {x},
                         [ix, c, l, target_len](const Tensor<T>& g, Tape<T>& tp) {
                           auto& gx = tp.grad_buffer(ix);
                           for (std::size_t ch = 0; ch < c; ++ch)
                             for (std::size_t t = 0; t < l; ++t)
                               gx[ch * l + t] += g[ch * target_len + t];
                         });
}

/// Keeps the first `len` frames of [C x L].
template <typename T>
Var<T> trim_time(const Var<T>& x, std::size_t len) {
  const auto& xv = x.value();
  std::size_t c = xv.channels(), l = xv.length();
  if (len > l || len == 0) throw ShapeError("trim_time length out of range");
  if (len == l) return x;
  Tensor<T> out(Shape{c, len});
  for (std::size_t ch = 0; ch < c; ++ch)
    std::copy_n(&xv.data()[ch * l], len, &out.data()[ch * len]);
  auto ix = x.id();
  return x.tape().record(std::move(out), "trim_time", {x},
                         [ix, c, l, len](const Tensor<T>& g, Tape<T>& tp) {
                           auto& gx = tp.grad_buffer(ix);
                           for (std::size_t ch = 0; ch < c; ++ch)
                             for (std::size_t t = 0; t < len; ++t)
                               gx[ch * l + t] += g[ch * len + t];
                         });
}

/// Channel rows [begin, begin + count) of [C x L].
template <typename T>
Var<T> slice_channels(const Var<T>& x, std::size_t begin, std::size_t count) {
  const auto& xv = x.value();
  std::size_t l = xv.length();
  if (begin + count > xv.channels() || count == 0) {
    throw ShapeError("slice_channels out of range");
  }
  Tensor<T> out(Shape{count, l});
  std::copy_n(&xv.data()[begin * l], count * l, out.data().begin());
  auto ix = x.id();
  return x.tape().record(std::move(out), "slice_channels", {x},
                         [ix, begin, l](const Tensor<T>& g, Tape<T>& tp) {
                           auto& gx = tp.grad_buffer(ix);
                           for (std::size_t i = 0; i < g.size(); ++i) gx[begin * l + i] += g[i];
                         });
}

/// Central-difference gradient of a scalar function, evaluated in double.
template <typename F>
Tensor<double> finite_difference_grad(F&& f, const Tensor<double>& x, double eps) {
  if (!(eps > 0)) throw Error("finite_difference_grad: eps must be positive");
  Tensor<double> probe = x;
  Tensor<double> grad(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = f(probe);
    probe[i] = orig - eps;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2 * eps);
  }
  return grad;
}

}  // namespace iianet
