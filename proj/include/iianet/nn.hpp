// Copyright 2026 The IIANet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Differentiable layers over [channels x time] tensors: 1-D (transposed)
// convolution, pooling, nearest resampling, global layer norm, the
// conv+GLN unit `q_op`, the three-conv FFN, and dropout.

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>

#include "iianet/autodiff.hpp"

namespace iianet {

/// Multiply-accumulate tally of executed convolutions, active while a
/// MacTally is alive on the current thread.
class MacTally {
 public:
  MacTally() : prev_(current()) { current() = this; }
  ~MacTally() { current() = prev_; }
  MacTally(const MacTally&) = delete;
  MacTally& operator=(const MacTally&) = delete;

  std::uint64_t total() const { return total_; }

  static void add(std::uint64_t macs) {
    if (auto* t = current()) t->total_ += macs;
  }

 private:
  static MacTally*& current() {
    thread_local MacTally* active = nullptr;
    return active;
  }

  MacTally* prev_;
  std::uint64_t total_ = 0;
};

/// Convolution parameters. Weight is [C_out x C_in/groups x K]; the group
/// count is implied by the input channel count at call time.
template <typename T>
struct Conv1dParams {
  Var<T> weight;
  std::optional<Var<T>> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

template <typename T>
struct GlnParams {
  Var<T> gain;
  Var<T> bias;
  static constexpr double eps = 1e-8;
};

/// The conv + GLN unit.
template <typename T>
struct QParams {
  Conv1dParams<T> conv;
  GlnParams<T> norm;
};

template <typename T>
struct FfnParams {
  Conv1dParams<T> in;    // C -> hidden, kernel 1, no bias
  Conv1dParams<T> mid;   // hidden -> hidden, kernel 5, biased, length-preserving
  Conv1dParams<T> out;   // hidden -> C, kernel 1, no bias
  GlnParams<T> norm;
};

inline std::size_t conv_out_length(std::size_t l_in, std::size_t k,
                                   std::size_t stride, std::size_t padding) {
  if (k == 0 || stride == 0) throw ShapeError("conv: kernel and stride must be >= 1");
  if (l_in + 2 * padding < k) {
    throw ShapeError("conv: input length " + std::to_string(l_in) +
                     " too short for kernel " + std::to_string(k));
  }
  return (l_in + 2 * padding - k) / stride + 1;
}

inline std::size_t conv_transpose_out_length(std::size_t l_in, std::size_t k,
                                             std::size_t stride, std::size_t padding) {
  if (k == 0 || stride == 0) throw ShapeError("conv_transpose: kernel and stride must be >= 1");
  std::size_t full = (l_in - 1) * stride + k;
  if (full <= 2 * padding) throw ShapeError("conv_transpose: padding consumes the output");
  return full - 2 * padding;
}

namespace detail {

// Output frames t for which t*stride + k - padding lies in [0, l_in).
inline void valid_range(std::size_t k, std::size_t stride, std::size_t padding,
                        std::size_t l_in, std::size_t l_out, std::size_t& t0,
                        std::size_t& t1) {
  long off = long(k) - long(padding);
  long lo = off >= 0 ? 0 : (-off + long(stride) - 1) / long(stride);
  long hi = (long(l_in) - 1 - off);
  hi = hi < 0 ? -1 : hi / long(stride);
  t0 = std::size_t(lo);
  t1 = std::size_t(std::min<long>(hi + 1, long(l_out)));
  if (t1 < t0) t1 = t0;
}

struct ConvGeometry {
  std::size_t c_in, c_out, k, l_in, l_out, groups, in_per_group, out_per_group;
};

}  // namespace detail

template <typename T>
Var<T> conv1d(const Var<T>& x, const Conv1dParams<T>& p) {
  const auto& xv = x.value();
  const auto& wv = p.weight.value();
  if (xv.rank() != 2 || wv.rank() != 3) throw ShapeError("conv1d expects [C x L] input and [Co x Ci x K] weight");
  detail::ConvGeometry g;
  g.c_in = xv.dim(0);
  g.l_in = xv.dim(1);
  g.c_out = wv.dim(0);
  g.in_per_group = wv.dim(1);
  g.k = wv.dim(2);
  if (g.c_in % g.in_per_group != 0) {
    throw ShapeError("conv1d: input channels " + std::to_string(g.c_in) +
                     " incompatible with weight " + shape_str(wv.shape()));
  }
  g.groups = g.c_in / g.in_per_group;
  if (g.c_out % g.groups != 0) throw ShapeError("conv1d: output channels not divisible by groups");
  g.out_per_group = g.c_out / g.groups;
  g.l_out = conv_out_length(g.l_in, g.k, p.stride, p.padding);
  if (p.bias && p.bias->value().size() != g.c_out) throw ShapeError("conv1d: bias length mismatch");

  const std::size_t s = p.stride, pad = p.padding;
  Tensor<T> out(Shape{g.c_out, g.l_out});
  for (std::size_t co = 0; co < g.c_out; ++co) {
    T* orow = &out.data()[co * g.l_out];
    if (p.bias) std::fill_n(orow, g.l_out, p.bias->value()[co]);
    const std::size_t grp = co / g.out_per_group;
    for (std::size_t cl = 0; cl < g.in_per_group; ++cl) {
      const std::size_t ci = grp * g.in_per_group + cl;
      const T* xrow = &xv.data()[ci * g.l_in];
      for (std::size_t kk = 0; kk < g.k; ++kk) {
        const T w = wv[(co * g.in_per_group + cl) * g.k + kk];
        std::size_t t0, t1;
        detail::valid_range(kk, s, pad, g.l_in, g.l_out, t0, t1);
        if (s == 1) {
          for (std::size_t t = t0; t < t1; ++t) orow[t] += w * xrow[t + kk - pad];
        } else {
          for (std::size_t t = t0; t < t1; ++t) orow[t] += w * xrow[t * s + kk - pad];
        }
      }
    }
  }
  MacTally::add(std::uint64_t(g.c_out) * g.in_per_group * g.k * g.l_out);

  auto ix = x.id(), iw = p.weight.id();
  std::optional<std::size_t> ib;
  if (p.bias) ib = p.bias->id();
  auto fn = [ix, iw, ib, g, s, pad](const Tensor<T>& go, Tape<T>& tp) {
    const auto& xv = tp.value(ix);
    const auto& wv = tp.value(iw);
    const bool want_x = tp.requires_grad(ix), want_w = tp.requires_grad(iw);
    Tensor<T>* gx = want_x ? &tp.grad_buffer(ix) : nullptr;
    Tensor<T>* gw = want_w ? &tp.grad_buffer(iw) : nullptr;
    if (ib && tp.requires_grad(*ib)) {
      auto& gb = tp.grad_buffer(*ib);
      for (std::size_t co = 0; co < g.c_out; ++co) {
        double acc = 0;
        for (std::size_t t = 0; t < g.l_out; ++t) acc += go[co * g.l_out + t];
        gb[co] += T(acc);
      }
    }
    for (std::size_t co = 0; co < g.c_out; ++co) {
      const T* grow = &go.data()[co * g.l_out];
      const std::size_t grp = co / g.out_per_group;
      for (std::size_t cl = 0; cl < g.in_per_group; ++cl) {
        const std::size_t ci = grp * g.in_per_group + cl;
        for (std::size_t kk = 0; kk < g.k; ++kk) {
          const std::size_t widx = (co * g.in_per_group + cl) * g.k + kk;
          std::size_t t0, t1;
          detail::valid_range(kk, s, pad, g.l_in, g.l_out, t0, t1);
          if (want_w) {
            const T* src = &xv.data()[ci * g.l_in];
            T acc = 0;
#pragma omp simd reduction(+ : acc)
            for (std::size_t t = t0; t < t1; ++t) acc += grow[t] * src[t * s + kk - pad];
            (*gw)[widx] += acc;
          }
          if (want_x) {
            const T w = wv[widx];
            T* dst = &gx->data()[ci * g.l_in];
            for (std::size_t t = t0; t < t1; ++t) dst[t * s + kk - pad] += w * grow[t];
          }
        }
      }
    }
  };
  if (p.bias) return x.tape().record(std::move(out), "conv1d", {x, p.weight, *p.bias}, fn);
  return x.tape().record(std::move(out), "conv1d", {x, p.weight}, fn);
}

/// Adjoint of conv1d for groups == 1. Weight is [C_in x C_out x K].
template <typename T>
Var<T> conv_transpose1d(const Var<T>& x, const Conv1dParams<T>& p) {
  const auto& xv = x.value();
  const auto& wv = p.weight.value();
  if (xv.rank() != 2 || wv.rank() != 3 || wv.dim(0) != xv.dim(0)) {
    throw ShapeError("conv_transpose1d: weight " + shape_str(wv.shape()) +
                     " incompatible with input " + shape_str(xv.shape()));
  }
  const std::size_t c_in = xv.dim(0), l_in = xv.dim(1), c_out = wv.dim(1), k = wv.dim(2);
  const std::size_t s = p.stride, pad = p.padding;
  const std::size_t l_out = conv_transpose_out_length(l_in, k, s, pad);
  if (p.bias && p.bias->value().size() != c_out) throw ShapeError("conv_transpose1d: bias length mismatch");

  // y[co][t*s + kk - pad] += w[ci][co][kk] * x[ci][t], i.e. the scatter form
  // of conv1d's gather with l_in/l_out swapped.
  Tensor<T> out(Shape{c_out, l_out});
  for (std::size_t co = 0; co < c_out; ++co) {
    T* orow = &out.data()[co * l_out];
    if (p.bias) std::fill_n(orow, l_out, p.bias->value()[co]);
    for (std::size_t ci = 0; ci < c_in; ++ci) {
      const T* xrow = &xv.data()[ci * l_in];
      for (std::size_t kk = 0; kk < k; ++kk) {
        const T w = wv[(ci * c_out + co) * k + kk];
        std::size_t t0, t1;
        detail::valid_range(kk, s, pad, l_out, l_in, t0, t1);
        for (std::size_t t = t0; t < t1; ++t) orow[t * s + kk - pad] += w * xrow[t];
      }
    }
  }
  MacTally::add(std::uint64_t(c_in) * c_out * k * l_in);

  auto ix = x.id(), iw = p.weight.id();
  std::optional<std::size_t> ib;
  if (p.bias) ib = p.bias->id();
  auto fn = [=](const Tensor<T>& go, Tape<T>& tp) {
    const auto& xv = tp.value(ix);
    const auto& wv = tp.value(iw);
    const bool want_x = tp.requires_grad(ix), want_w = tp.requires_grad(iw);
    Tensor<T>* gx = want_x ? &tp.grad_buffer(ix) : nullptr;
    Tensor<T>* gw = want_w ? &tp.grad_buffer(iw) : nullptr;
    if (ib && tp.requires_grad(*ib)) {
      auto& gb = tp.grad_buffer(*ib);
      for (std::size_t co = 0; co < c_out; ++co) {
        double acc = 0;
        for (std::size_t t = 0; t < l_out; ++t) acc += go[co * l_out + t];
        gb[co] += T(acc);
      }
    }
    for (std::size_t co = 0; co < c_out; ++co) {
      const T* grow = &go.data()[co * l_out];
      for (std::size_t ci = 0; ci < c_in; ++ci) {
        for (std::size_t kk = 0; kk < k; ++kk) {
          const std::size_t widx = (ci * c_out + co) * k + kk;
          std::size_t t0, t1;
          detail::valid_range(kk, s, pad, l_out, l_in, t0, t1);
          if (want_w) {
            const T* xrow = &xv.data()[ci * l_in];
            T acc = 0;
#pragma omp simd reduction(+ : acc)
            for (std::size_t t = t0; t < t1; ++t) acc += grow[t * s + kk - pad] * xrow[t];
            (*gw)[widx] += acc;
          }
          if (want_x) {
            const T w = wv[widx];
            T* dst = &gx->data()[ci * l_in];
            for (std::size_t t = t0; t < t1; ++t) dst[t] += w * grow[t * s + kk - pad];
          }
        }
      }
    }
  };
  if (p.bias) return x.tape().record(std::move(out), "conv_transpose1d", {x, p.weight, *p.bias}, fn);
  return x.tape().record(std::move(out), "conv_transpose1d", {x, p.weight}, fn);
}

/// Non-overlapping temporal window means.
template <typename T>
Var<T> avg_pool1d(const Var<T>& x, std::size_t ratio) {
  const auto& xv = x.value();
  const std::size_t c = xv.channels(), l = xv.length();
  if (ratio == 0 || l % ratio != 0) {
    throw ShapeError("avg_pool1d: length " + std::to_string(l) +
                     " not divisible by ratio " + std::to_string(ratio));
  }
  if (ratio == 1) return x;
  const std::size_t lo = l / ratio;
  Tensor<T> out(Shape{c, lo});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t t = 0; t < lo; ++t) {
      T acc = 0;
      for (std::size_t r = 0; r < ratio; ++r) acc += xv[ch * l + t * ratio + r];
      out[ch * lo + t] = acc / T(ratio);
    }
  auto ix = x.id();
  return x.tape().record(std::move(out), "avg_pool1d", {x},
                         [ix, c, l, lo, ratio](const Tensor<T>& g, Tape<T>& tp) {
                           auto& gx = tp.grad_buffer(ix);
                           const T inv = T(1) / T(ratio);
                           for (std::size_t ch = 0; ch < c; ++ch)
                             for (std::size_t t = 0; t < lo; ++t)
                               for (std::size_t r = 0; r < ratio; ++r)
                                 gx[ch * l + t * ratio + r] += g[ch * lo + t] * inv;
                         });
}

/// Nearest-neighbour temporal resampling: out[c][t] = x[c][floor(t*L/target)].
/// Works in both directions; see interp_upsample for the checked up-only form.
template <typename T>
Var<T> resample_nearest(const Var<T>& x, std::size_t target_len) {
  const auto& xv = x.value();
  const std::size_t c = xv.channels(), l = xv.length();
  if (target_len == 0) throw ShapeError("resample_nearest: zero target length");
  if (target_len == l) return x;
  std::vector<std::size_t> src(target_len);
  for (std::size_t t = 0; t < target_len; ++t) src[t] = t * l / target_len;
  Tensor<T> out(Shape{c, target_len});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t t = 0; t < target_len; ++t) out[ch * target_len + t] = xv[ch * l + src[t]];
  auto ix = x.id();
  return x.tape().record(std::move(out), "resample_nearest", {x},
                         [ix, c, l, target_len, src = std::move(src)](const Tensor<T>& g,
                                                                      Tape<T>& tp) {
                           auto& gx = tp.grad_buffer(ix);
                           for (std::size_t ch = 0; ch < c; ++ch)
                             for (std::size_t t = 0; t < target_len; ++t)
                               gx[ch * l + src[t]] += g[ch * target_len + t];
                         });
}

template <typename T>
Var<T> interp_upsample(const Var<T>& x, std::size_t target_len) {
  if (target_len < x.length()) {
    throw ShapeError("interp_upsample: target length " + std::to_string(target_len) +
                     " shorter than input " + std::to_string(x.length()));
  }
  return resample_nearest(x, target_len);
}

/// Global layer norm: statistics over all channel-time entries jointly,
/// per-channel affine.
template <typename T>
Var<T> gln(const Var<T>& x, const GlnParams<T>& p) {
  const auto& xv = x.value();
  const std::size_t c = xv.channels(), l = xv.length();
  if (p.gain.value().size() != c || p.bias.value().size() != c) {
    throw ShapeError("gln: affine length does not match " + std::to_string(c) + " channels");
  }
  const double n = double(xv.size());
  double mean = 0;
  for (auto v : xv.data()) mean += v;
  mean /= n;
  double var = 0;
  for (auto v : xv.data()) var += (v - mean) * (v - mean);
  var /= n;
  const double inv_std = 1.0 / std::sqrt(var + GlnParams<T>::eps);

  Tensor<T> xhat(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) xhat[i] = T((xv[i] - mean) * inv_std);
  Tensor<T> out(xv.shape());
  const auto& gv = p.gain.value();
  const auto& bv = p.bias.value();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t t = 0; t < l; ++t) out[ch * l + t] = gv[ch] * xhat[ch * l + t] + bv[ch];

  auto ix = x.id(), ig = p.gain.id(), ibias = p.bias.id();
  return x.tape().record(
      std::move(out), "gln", {x, p.gain, p.bias},
      [=, xhat = std::move(xhat)](const Tensor<T>& go, Tape<T>& tp) {
        const auto& gv = tp.value(ig);
        if (tp.requires_grad(ig)) {
          auto& gg = tp.grad_buffer(ig);
          for (std::size_t ch = 0; ch < c; ++ch) {
            double acc = 0;
            for (std::size_t t = 0; t < l; ++t) acc += double(go[ch * l + t]) * xhat[ch * l + t];
            gg[ch] += T(acc);
          }
        }
        if (tp.requires_grad(ibias)) {
          auto& gb = tp.grad_buffer(ibias);
          for (std::size_t ch = 0; ch < c; ++ch) {
            double acc = 0;
            for (std::size_t t = 0; t < l; ++t) acc += go[ch * l + t];
            gb[ch] += T(acc);
          }
        }
        if (tp.requires_grad(ix)) {
          // dx = inv_std * (dxh - mean(dxh) - xhat * mean(dxh * xhat))
          double m1 = 0, m2 = 0;
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t t = 0; t < l; ++t) {
              const double d = double(go[ch * l + t]) * gv[ch];
              m1 += d;
              m2 += d * xhat[ch * l + t];
            }
          m1 /= n;
          m2 /= n;
          auto& gx = tp.grad_buffer(ix);
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t t = 0; t < l; ++t) {
              const std::size_t i = ch * l + t;
              const double d = double(go[i]) * gv[ch];
              gx[i] += T(inv_std * (d - m1 - xhat[i] * m2));
            }
        }
      });
}

template <typename T>
Var<T> q_op(const Var<T>& x, const QParams<T>& p) {
  return gln(conv1d(x, p.conv), p.norm);
}

template <typename T>
Var<T> ffn(const Var<T>& x, const FfnParams<T>& p) {
  return gln(conv1d(conv1d(conv1d(x, p.in), p.mid), p.out), p.norm);
}

/// Inverted dropout. Identity at inference or p == 0.
template <typename T, typename Rng>
Var<T> dropout(const Var<T>& x, double p, bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw Error("dropout probability must lie in [0, 1)");
  if (!training || p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const T scale_up = T(1.0 / (1.0 - p));
  Tensor<T> mask(x.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = keep(rng) ? scale_up : T(0);
  return ew_mul(x, x.tape().constant(std::move(mask)));
}

}  // namespace iianet
