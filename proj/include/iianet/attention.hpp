// Copyright 2026 The IIANet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Intra- and inter-modality attention blocks.
//
// Every block is sigmoid gating plus element-wise products over
// [channels x time] features; none of them forms a similarity matrix.
// Audio features live on an [N_a x T'_a / 2^i] grid, video features on
// [N_v x T_v / 2^i]; cross-modal terms are moved onto the gated modality's
// grid by nearest resampling and a channel-mapping q_op.

#pragma once

#include <random>
#include <vector>

#include "iianet/nn.hpp"

namespace iianet {

enum class Modality { kAudio, kVideo };

enum class IntraVariant { kPhi, kPhiPrime };

/// Features at temporal resolutions L, L/2, ..., L/2^D (levels[0] finest).
template <typename T>
struct ScalePyramid {
  std::vector<Var<T>> levels;
  Modality modality = Modality::kAudio;

  std::size_t depth() const { return levels.empty() ? 0 : levels.size() - 1; }
  const Var<T>& coarsest() const { return levels.back(); }
};

template <typename T>
struct GlobalFeatures {
  Var<T> s_g;
  Var<T> v_g;
};

template <typename T>
struct InterTParams {
  QParams<T> video_to_audio;  // gate for the audio FFN input
  QParams<T> audio_to_video;  // gate for the video FFN input
  FfnParams<T> ffn_audio;
  FfnParams<T> ffn_video;
};

template <typename T>
struct TopDownParams {
  std::vector<QParams<T>> global_audio;  // D+1, empty for phi'
  std::vector<QParams<T>> global_video;  // D+1, empty for phi'
  std::vector<QParams<T>> inter_m;       // D+1, empty when InterA-M is off
  std::vector<QParams<T>> local_audio;   // D, index i produces level i
  std::vector<QParams<T>> local_video;   // D
};

template <typename T>
struct InterBParams {
  QParams<T> audio_inner;  // N_a -> N_v, gate on the audio grid
  QParams<T> audio_outer;  // N_v -> N_a, back onto the audio residual
  QParams<T> video_inner;  // N_v -> N_a
  QParams<T> video_outer;  // N_a -> N_v
};

/// Block toggles and regularisation shared by one forward pass.
struct FusionOptions {
  IntraVariant variant = IntraVariant::kPhi;
  bool inter_t = true;
  bool inter_m = true;
  bool inter_b = true;
  double dropout_p = 0.0;
  bool training = false;
  std::mt19937_64* rng = nullptr;
};

namespace detail {

template <typename T>
Var<T> maybe_dropout(const Var<T>& x, const FusionOptions& opt) {
  if (!opt.training || opt.dropout_p == 0.0) return x;
  if (!opt.rng) throw Error("dropout in training mode needs a seeded rng");
  return dropout(x, opt.dropout_p, true, *opt.rng);
}

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* where) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(where) + ": " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

}  // namespace detail

/// phi(x, y) = sigmoid(Q(mu(y))) * x + Q(mu(y)), with Q(mu(y)) evaluated once.
template <typename T>
Var<T> intra_a_global(const Var<T>& x, const Var<T>& y, const QParams<T>& q) {
  Var<T> qy = q_op(interp_upsample(y, x.length()), q);
  detail::require_same_shape(qy, x, "intra_a_global");
  return ew_add(ew_mul(sigmoid(qy), x), qy);
}

/// phi'(x, y) = sigmoid(mu(y)) * x. Parameter-free.
template <typename T>
Var<T> intra_a_prime(const Var<T>& x, const Var<T>& y) {
  Var<T> up = interp_upsample(y, x.length());
  detail::require_same_shape(up, x, "intra_a_prime");
  return ew_mul(sigmoid(up), x);
}

/// Sum of every level average-pooled down to the coarsest resolution.
template <typename T>
Var<T> cumulative_feature(const ScalePyramid<T>& pyr) {
  const std::size_t d = pyr.depth();
  Var<T> acc = pyr.levels[d];
  for (std::size_t i = 0; i < d; ++i) {
    acc = ew_add(acc, avg_pool1d(pyr.levels[i], std::size_t{1} << (d - i)));
  }
  return acc;
}

/// Top-of-network fusion producing the global features S_G and V_G.
template <typename T>
GlobalFeatures<T> inter_a_t(const ScalePyramid<T>& audio, const ScalePyramid<T>& video,
                            const InterTParams<T>& p, const FusionOptions& opt) {
  if (audio.levels.empty() || audio.depth() != video.depth()) {
    throw ShapeError("inter_a_t: pyramids must have the same number of levels");
  }
  Var<T> f_s = cumulative_feature(audio);
  Var<T> f_v = cumulative_feature(video);
  if (!opt.inter_t) {
    return {detail::maybe_dropout(ffn(f_s, p.ffn_audio), opt),
            detail::maybe_dropout(ffn(f_v, p.ffn_video), opt)};
  }
  Var<T> gate_s = detail::maybe_dropout(q_op(f_v, p.video_to_audio), opt);
  Var<T> gate_v = detail::maybe_dropout(q_op(f_s, p.audio_to_video), opt);
  gate_s = sigmoid(resample_nearest(gate_s, f_s.length()));
  gate_v = sigmoid(resample_nearest(gate_v, f_v.length()));
  Var<T> s_g = detail::maybe_dropout(ffn(ew_mul(f_s, gate_s), p.ffn_audio), opt);
  Var<T> v_g = detail::maybe_dropout(ffn(ew_mul(f_v, gate_v), p.ffn_video), opt);
  return {s_g, v_g};
}

/// sigmoid(Q(mu(v_bar))) * s_bar, Q mapping video channels to audio channels.
template <typename T>
Var<T> inter_a_m(const Var<T>& s_bar, const Var<T>& v_bar, const QParams<T>& q) {
  Var<T> gate = q_op(resample_nearest(v_bar, s_bar.length()), q);
  detail::require_same_shape(gate, s_bar, "inter_a_m");
  return ew_mul(sigmoid(gate), s_bar);
}

/// Global IntraA modulation of one pyramid by its global feature.
template <typename T>
std::vector<Var<T>> global_modulation(const ScalePyramid<T>& pyr, const Var<T>& g,
                                      const std::vector<QParams<T>>& qs,
                                      IntraVariant variant) {
  std::vector<Var<T>> out;
  out.reserve(pyr.levels.size());
  for (std::size_t i = 0; i < pyr.levels.size(); ++i) {
    out.push_back(variant == IntraVariant::kPhi
                      ? intra_a_global(pyr.levels[i], g, qs.at(i))
                      : intra_a_prime(pyr.levels[i], g));
  }
  return out;
}

/// Local IntraA reconstruction from coarse to fine: level D-1 is modulated by
/// level D, then each finer level by the freshly reconstructed coarser one.
template <typename T>
Var<T> local_top_down(const std::vector<Var<T>>& levels, const std::vector<QParams<T>>& qs) {
  const std::size_t d = levels.size() - 1;
  if (d == 0) return levels[0];
  Var<T> acc = intra_a_global(levels[d - 1], levels[d], qs.at(d - 1));
  for (std::size_t i = d - 1; i-- > 0;) acc = intra_a_global(levels[i], acc, qs.at(i));
  return acc;
}

/// Global IntraA, InterA-M and local IntraA: yields the finest-scale
/// audio and video features of the top-down pass.
template <typename T>
std::pair<Var<T>, Var<T>> top_down_pass(const ScalePyramid<T>& audio,
                                        const ScalePyramid<T>& video,
                                        const GlobalFeatures<T>& g,
                                        const TopDownParams<T>& p,
                                        const FusionOptions& opt) {
  if (audio.depth() != video.depth() || audio.levels.empty()) {
    throw ShapeError("top_down_pass: pyramid depth mismatch");
  }
  auto s_bar = global_modulation(audio, g.s_g, p.global_audio, opt.variant);
  auto v_bar = global_modulation(video, g.v_g, p.global_video, opt.variant);
  std::vector<Var<T>> s_tilde = s_bar;
  if (opt.inter_m) {
    for (std::size_t i = 0; i < s_bar.size(); ++i) {
      s_tilde[i] = inter_a_m(s_bar[i], v_bar[i], p.inter_m.at(i));
    }
  }
  return {local_top_down(s_tilde, p.local_audio), local_top_down(v_bar, p.local_video)};
}

/// Finest-scale fusion with residuals:
///   E_S = s0 + Q(mu(v0) * sigmoid(Q(s0))),  E_V = v0 + Q(mu(s0) * sigmoid(Q(v0))).
template <typename T>
std::pair<Var<T>, Var<T>> inter_a_b(const Var<T>& s0, const Var<T>& v0,
                                    const InterBParams<T>& p) {
  Var<T> gate_s = sigmoid(q_op(s0, p.audio_inner));
  Var<T> cross_s = ew_mul(resample_nearest(v0, s0.length()), gate_s);
  Var<T> e_s = ew_add(s0, q_op(cross_s, p.audio_outer));

  Var<T> gate_v = sigmoid(q_op(v0, p.video_inner));
  Var<T> cross_v = ew_mul(resample_nearest(s0, v0.length()), gate_v);
  Var<T> e_v = ew_add(v0, q_op(cross_v, p.video_outer));
  return {e_s, e_v};
}

}  // namespace iianet
