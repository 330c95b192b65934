// Copyright 2026 The IIANet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// End-to-end separation model: audio encoder, optional visual stub, the
// cyclic audio-visual separation network, ReLU mask and transposed-conv
// decoder. One parameter set serves every cycle; within a cycle each block
// owns its parameters.

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "iianet/attention.hpp"
#include "iianet/config.hpp"

namespace iianet {

/// Named parameter tensors, ordered by name.
template <typename T>
struct ModelParams {
  std::map<std::string, Tensor<T>> tensors;

  const Tensor<T>& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw Error("missing parameter '" + name + "'");
    return it->second;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : tensors) n += t.size();
    return n;
  }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    for (const auto& [k, t] : tensors) out.tensors.emplace(k, t.template cast<U>());
    return out;
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

namespace detail {

inline void add_q_shapes(std::map<std::string, Shape>& out, const std::string& prefix,
                         std::size_t c_in, std::size_t c_out, const ConvSpec& spec) {
  out[prefix + ".conv.weight"] = Shape{c_out, spec.depthwise ? 1 : c_in, spec.kernel};
  out[prefix + ".conv.bias"] = Shape{c_out};
  out[prefix + ".norm.gain"] = Shape{c_out};
  out[prefix + ".norm.bias"] = Shape{c_out};
}

inline void add_ffn_shapes(std::map<std::string, Shape>& out, const std::string& prefix,
                           std::size_t c, std::size_t hidden, const ConvSpec& mid) {
  out[prefix + ".in.weight"] = Shape{hidden, c, 1};
  out[prefix + ".mid.weight"] = Shape{hidden, mid.depthwise ? 1 : hidden, mid.kernel};
  out[prefix + ".mid.bias"] = Shape{hidden};
  out[prefix + ".out.weight"] = Shape{c, hidden, 1};
  out[prefix + ".norm.gain"] = Shape{c};
  out[prefix + ".norm.bias"] = Shape{c};
}

inline std::string level_name(const char* prefix, std::size_t i) {
  return std::string(prefix) + "." + std::to_string(i);
}

}  // namespace detail

/// Shape of every parameter the configuration instantiates.
inline std::map<std::string, Shape> param_shapes(const ModelConfig& cfg) {
  cfg.validate();
  std::map<std::string, Shape> s;
  const std::size_t na = cfg.n_audio, nv = cfg.n_video, d = cfg.depth;
  const std::size_t hidden = cfg.ffn_channels[1];
  const auto& plan = cfg.conv;
  s["encoder.weight"] = Shape{na, 1, cfg.enc_kernel};
  s["decoder.weight"] = Shape{na, 1, cfg.enc_kernel};
  const bool phi = cfg.intra_variant == IntraVariant::kPhi;

  for (std::size_t i = 1; i <= d; ++i) {
    detail::add_q_shapes(s, detail::level_name("audio.down", i), na, na, plan.bottom_up);
  }
  detail::add_ffn_shapes(s, "inter_t.ffn_audio", na, hidden, plan.ffn_mid);
  for (std::size_t i = 0; i <= d; ++i) {
    if (phi) detail::add_q_shapes(s, detail::level_name("audio.global", i), na, na, plan.global_audio);
  }
  for (std::size_t i = 0; i < d; ++i) {
    detail::add_q_shapes(s, detail::level_name("audio.local", i), na, na, plan.local_audio);
  }

  if (cfg.audio_only()) {
    s["mask_head.weight"] = Shape{cfg.n_sources * na, na, 1};
    s["mask_head.bias"] = Shape{cfg.n_sources * na};
    return s;
  }

  if (cfg.video_in_channels > 0) {
    s["video_stub.0.weight"] = Shape{nv, cfg.video_in_channels, 3};
    s["video_stub.0.bias"] = Shape{nv};
    s["video_stub.1.weight"] = Shape{nv, nv, 3};
    s["video_stub.1.bias"] = Shape{nv};
  }
  for (std::size_t i = 1; i <= d; ++i) {
    detail::add_q_shapes(s, detail::level_name("video.down", i), nv, nv, plan.bottom_up);
  }
  if (cfg.inter_t_enabled) {
    detail::add_q_shapes(s, "inter_t.video_to_audio", nv, na, plan.inter_t);
    detail::add_q_shapes(s, "inter_t.audio_to_video", na, nv, plan.inter_t);
  }
  detail::add_ffn_shapes(s, "inter_t.ffn_video", nv, hidden, plan.ffn_mid);
  for (std::size_t i = 0; i <= d; ++i) {
    if (phi) detail::add_q_shapes(s, detail::level_name("video.global", i), nv, nv, plan.global_video);
    if (cfg.inter_m_enabled) detail::add_q_shapes(s, detail::level_name("inter_m", i), nv, na, plan.inter_m);
  }
  for (std::size_t i = 0; i < d; ++i) {
    detail::add_q_shapes(s, detail::level_name("video.local", i), nv, nv, plan.local_video);
  }
  if (cfg.inter_b_enabled) {
    detail::add_q_shapes(s, "inter_b.audio_inner", na, nv, plan.inter_b);
    detail::add_q_shapes(s, "inter_b.audio_outer", nv, na, plan.inter_b);
    detail::add_q_shapes(s, "inter_b.video_inner", nv, na, plan.inter_b);
    detail::add_q_shapes(s, "inter_b.video_outer", na, nv, plan.inter_b);
  }
  return s;
}

/// Exact trainable scalar count. Independent of N_F and N_S.
inline std::uint64_t count_params(const ModelConfig& cfg) {
  std::uint64_t n = 0;
  for (const auto& [_, shape] : param_shapes(cfg)) n += shape_numel(shape);
  return n;
}

/// Uniform(+-1/sqrt(fan_in)) weights and biases; GLN gain 1, bias 0.
template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  auto shapes = param_shapes(cfg);
  std::mt19937_64 rng(seed);
  ModelParams<T> p;
  auto ends_with = [](const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  for (const auto& [name, shape] : shapes) {
    Tensor<T> t(shape);
    if (ends_with(name, "norm.gain")) {
      t = Tensor<T>::ones(shape);
    } else if (ends_with(name, "norm.bias")) {
      t = Tensor<T>::zeros(shape);
    } else {
      const std::string wname = name.substr(0, name.rfind('.')) + ".weight";
      const Shape& ws = shapes.at(wname);
      double fan_in = double(ws[1] * ws[2]);
      if (name.rfind("decoder", 0) == 0) fan_in = double(ws[0] * ws[2]) / double(cfg.enc_stride);
      const double bound = 1.0 / std::sqrt(fan_in);
      std::uniform_real_distribution<double> u(-bound, bound);
      for (auto& v : t.storage()) v = T(u(rng));
    }
    p.tensors.emplace(name, std::move(t));
  }
  return p;
}

/// Binds named parameters onto a tape. Each parameter becomes exactly one
/// node, so every cycle that reuses it contributes to the same gradient.
template <typename T>
class ParamBinder {
 public:
  ParamBinder(Tape<T>& tape, const ModelParams<T>& params, bool trainable)
      : tape_(tape), params_(params), trainable_(trainable) {}

  Var<T> get(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const auto& t = params_.at(name);
    Var<T> v = trainable_ ? tape_.leaf(t, name) : tape_.constant(t);
    bound_.emplace(name, v);
    return v;
  }

  /// Uses an existing node for `name` instead of creating one.
  void bind(const std::string& name, Var<T> v) { bound_[name] = v; }

  QParams<T> q(const std::string& prefix) {
    QParams<T> q;
    q.conv.weight = get(prefix + ".conv.weight");
    q.conv.bias = get(prefix + ".conv.bias");
    q.conv.padding = q.conv.weight.value().dim(2) / 2;
    q.norm.gain = get(prefix + ".norm.gain");
    q.norm.bias = get(prefix + ".norm.bias");
    return q;
  }

  FfnParams<T> ffn(const std::string& prefix) {
    FfnParams<T> f;
    f.in.weight = get(prefix + ".in.weight");
    f.mid.weight = get(prefix + ".mid.weight");
    f.mid.bias = get(prefix + ".mid.bias");
    f.mid.padding = f.mid.weight.value().dim(2) / 2;
    f.out.weight = get(prefix + ".out.weight");
    f.norm.gain = get(prefix + ".norm.gain");
    f.norm.bias = get(prefix + ".norm.bias");
    return f;
  }

  Tape<T>& tape() { return tape_; }
  const std::map<std::string, Var<T>>& bound() const { return bound_; }

 private:
  Tape<T>& tape_;
  const ModelParams<T>& params_;
  bool trainable_;
  std::map<std::string, Var<T>> bound_;
};

/// Forward graph builder for one configuration and one parameter binding.
template <typename T>
class Network {
 public:
  Network(const ModelConfig& cfg, ParamBinder<T>& binder, FusionOptions opt)
      : cfg_(cfg), pb_(binder), opt_(opt) {}

  const ModelConfig& config() const { return cfg_; }
  ParamBinder<T>& binder() { return pb_; }
  const FusionOptions& options() const { return opt_; }

  /// Strided conv + GLN per level; levels[0] is the input itself.
  ScalePyramid<T> bottom_up(const Var<T>& x, Modality m) {
    const char* prefix = m == Modality::kAudio ? "audio.down" : "video.down";
    ScalePyramid<T> pyr;
    pyr.modality = m;
    pyr.levels.push_back(x);
    for (std::size_t i = 1; i <= cfg_.depth; ++i) {
      auto q = pb_.q(detail::level_name(prefix, i));
      q.conv.stride = 2;
      pyr.levels.push_back(q_op(pyr.levels.back(), q));
    }
    return pyr;
  }

  InterTParams<T> inter_t_params() {
    InterTParams<T> p;
    if (cfg_.inter_t_enabled) {
      p.video_to_audio = pb_.q("inter_t.video_to_audio");
      p.audio_to_video = pb_.q("inter_t.audio_to_video");
    }
    p.ffn_audio = pb_.ffn("inter_t.ffn_audio");
    p.ffn_video = pb_.ffn("inter_t.ffn_video");
    return p;
  }

  TopDownParams<T> top_down_params(bool with_video) {
    TopDownParams<T> p;
    const bool phi = cfg_.intra_variant == IntraVariant::kPhi;
    for (std::size_t i = 0; i <= cfg_.depth; ++i) {
      if (phi) p.global_audio.push_back(pb_.q(detail::level_name("audio.global", i)));
      if (phi && with_video) p.global_video.push_back(pb_.q(detail::level_name("video.global", i)));
      if (with_video && cfg_.inter_m_enabled) p.inter_m.push_back(pb_.q(detail::level_name("inter_m", i)));
    }
    for (std::size_t i = 0; i < cfg_.depth; ++i) {
      p.local_audio.push_back(pb_.q(detail::level_name("audio.local", i)));
      if (with_video) p.local_video.push_back(pb_.q(detail::level_name("video.local", i)));
    }
    return p;
  }

  InterBParams<T> inter_b_params() {
    return {pb_.q("inter_b.audio_inner"), pb_.q("inter_b.audio_outer"),
            pb_.q("inter_b.video_inner"), pb_.q("inter_b.video_outer")};
  }

  /// One audio-visual cycle: bottom-up, InterA-T, top-down, InterA-B.
  std::pair<Var<T>, Var<T>> av_cycle(const Var<T>& s, const Var<T>& v) {
    auto audio = bottom_up(s, Modality::kAudio);
    auto video = bottom_up(v, Modality::kVideo);
    auto g = inter_a_t(audio, video, inter_t_params(), opt_);
    auto [s0, v0] = top_down_pass(audio, video, g, top_down_params(true), opt_);
    if (!cfg_.inter_b_enabled) return {s0, v0};
    return inter_a_b(s0, v0, inter_b_params());
  }

  /// Audio-only refinement: bottom-up, ungated audio FFN for the global
  /// feature, global IntraA per scale, local IntraA top-down. Reuses the
  /// audio-side parameters of the audio-visual cycle.
  Var<T> audio_cycle(const Var<T>& s) {
    auto audio = bottom_up(s, Modality::kAudio);
    auto ffn_audio = pb_.ffn("inter_t.ffn_audio");
    Var<T> s_g = detail::maybe_dropout(ffn(cumulative_feature(audio), ffn_audio), opt_);
    auto p = top_down_params(false);
    auto s_bar = global_modulation(audio, s_g, p.global_audio, opt_.variant);
    return local_top_down(s_bar, p.local_audio);
  }

  void check_divisible(const Var<T>& x, const char* what) const {
    if (x.length() % cfg_.frame_multiple() != 0) {
      throw ShapeError(std::string(what) + " length " + std::to_string(x.length()) +
                       " is not divisible by 2^D = " + std::to_string(cfg_.frame_multiple()));
    }
  }

  /// N_F audio-visual cycles, N_S audio-only cycles, ReLU: the mask M.
  Var<T> separation_forward(const Var<T>& e_s, const Var<T>& e_v) {
    check_divisible(e_s, "audio embedding");
    check_divisible(e_v, "video embedding");
    Var<T> s = e_s, v = e_v;
    for (std::size_t t = 0; t < cfg_.n_fusion_cycles; ++t) std::tie(s, v) = av_cycle(s, v);
    for (std::size_t t = 0; t < cfg_.n_audio_cycles; ++t) s = audio_cycle(s);
    pre_mask_ = s;
    return relu(s);
  }

  /// Input of the most recent mask ReLU.
  const Var<T>& pre_mask() const { return pre_mask_; }

  /// Audio-only variant: N_F + N_S audio cycles, then a 1x1 head emitting one
  /// ReLU mask per source.
  std::vector<Var<T>> separation_forward_audio_only(const Var<T>& e_s) {
    check_divisible(e_s, "audio embedding");
    Var<T> s = e_s;
    for (std::size_t t = 0; t < cfg_.n_fusion_cycles + cfg_.n_audio_cycles; ++t) s = audio_cycle(s);
    Conv1dParams<T> head;
    head.weight = pb_.get("mask_head.weight");
    head.bias = pb_.get("mask_head.bias");
    pre_mask_ = conv1d(s, head);
    Var<T> all = relu(pre_mask_);
    std::vector<Var<T>> masks;
    for (std::size_t k = 0; k < cfg_.n_sources; ++k) {
      masks.push_back(slice_channels(all, k * cfg_.n_audio, cfg_.n_audio));
    }
    return masks;
  }

  Var<T> encode_audio(const Var<T>& wave) {
    Conv1dParams<T> enc;
    enc.weight = pb_.get("encoder.weight");
    enc.stride = cfg_.enc_stride;
    return conv1d(wave, enc);
  }

  Var<T> decode_audio(const Var<T>& emb) {
    Conv1dParams<T> dec;
    dec.weight = pb_.get("decoder.weight");
    dec.stride = cfg_.enc_stride;
    return conv_transpose1d(emb, dec);
  }

  Var<T> embed_video(const Var<T>& raw) {
    if (cfg_.video_in_channels == 0) {
      if (raw.channels() != cfg_.n_video) {
        throw ShapeError("video embedding has " + std::to_string(raw.channels()) +
                         " channels, model expects " + std::to_string(cfg_.n_video));
      }
      return raw;
    }
    if (raw.channels() != cfg_.video_in_channels) {
      throw ShapeError("visual features have " + std::to_string(raw.channels()) +
                       " channels, model expects " + std::to_string(cfg_.video_in_channels));
    }
    Conv1dParams<T> c0{pb_.get("video_stub.0.weight"), pb_.get("video_stub.0.bias"), 1, 1};
    Conv1dParams<T> c1{pb_.get("video_stub.1.weight"), pb_.get("video_stub.1.bias"), 1, 1};
    return conv1d(relu(conv1d(raw, c0)), c1);
  }

 private:
  const ModelConfig& cfg_;
  ParamBinder<T>& pb_;
  FusionOptions opt_;
  Var<T> pre_mask_;
};

/// Frame bookkeeping for the pad -> encode -> pad -> ... -> trim pipeline.
struct FrameLayout {
  std::size_t samples = 0;         // original T_a
  std::size_t padded_samples = 0;  // T_a right-padded so frames tile exactly
  std::size_t frames = 0;          // T'_a
  std::size_t padded_frames = 0;   // T'_a rounded up to a multiple of 2^D

  static FrameLayout compute(const ModelConfig& cfg, std::size_t samples) {
    if (samples < cfg.enc_kernel) {
      throw ShapeError("audio of " + std::to_string(samples) + " samples is shorter than the encoder kernel");
    }
    FrameLayout f;
    f.samples = samples;
    const std::size_t rem = (samples - cfg.enc_kernel) % cfg.enc_stride;
    f.padded_samples = rem == 0 ? samples : samples + cfg.enc_stride - rem;
    f.frames = (f.padded_samples - cfg.enc_kernel) / cfg.enc_stride + 1;
    f.padded_frames = round_up(f.frames, cfg.frame_multiple());
    return f;
  }

  static std::size_t round_up(std::size_t n, std::size_t m) { return (n + m - 1) / m * m; }
};

template <typename T>
struct SeparationGraph {
  Var<T> mask;      // [N_a x padded frames]
  Var<T> masked;    // E_S * M
  Var<T> waveform;  // [1 x T_a]
  FrameLayout layout;
};

namespace detail {

template <typename T>
Var<T> encode_padded(Network<T>& net, const Tensor<T>& wave, const FrameLayout& layout) {
  auto& tape = net.binder().tape();
  if (wave.rank() != 2 || wave.dim(0) != 1) throw ShapeError("mixture must be [1 x T_a]");
  Var<T> w = pad_time(tape.constant(wave), layout.padded_samples);
  return pad_time(net.encode_audio(w), layout.padded_frames);
}

template <typename T>
Var<T> embed_padded(Network<T>& net, const Tensor<T>& video) {
  const auto& cfg = net.config();
  Var<T> ev = net.embed_video(net.binder().tape().constant(video));
  return pad_time(ev, FrameLayout::round_up(ev.length(), cfg.frame_multiple()));
}

}  // namespace detail

/// Audio-visual separation graph for one target speaker.
template <typename T>
SeparationGraph<T> separate_graph(Network<T>& net, const Tensor<T>& wave, const Tensor<T>& video) {
  const auto& cfg = net.config();
  if (cfg.audio_only()) throw ConfigError("separate_graph needs an audio-visual model");
  auto layout = FrameLayout::compute(cfg, wave.length());
  Var<T> e_s = detail::encode_padded(net, wave, layout);
  Var<T> e_v = detail::embed_padded(net, video);
  Var<T> m = net.separation_forward(e_s, e_v);
  Var<T> masked = ew_mul(e_s, m);
  Var<T> out = trim_time(net.decode_audio(masked), layout.samples);
  return {m, masked, out, layout};
}

/// Audio-only graph: one separation per estimated source.
template <typename T>
std::vector<SeparationGraph<T>> separate_sources_graph(Network<T>& net, const Tensor<T>& wave) {
  const auto& cfg = net.config();
  if (!cfg.audio_only()) throw ConfigError("separate_sources_graph needs an audio-only model");
  auto layout = FrameLayout::compute(cfg, wave.length());
  Var<T> e_s = detail::encode_padded(net, wave, layout);
  std::vector<SeparationGraph<T>> out;
  for (const auto& m : net.separation_forward_audio_only(e_s)) {
    Var<T> masked = ew_mul(e_s, m);
    out.push_back({m, masked, trim_time(net.decode_audio(masked), layout.samples), layout});
  }
  return out;
}

template <typename T>
struct SeparationOutput {
  Tensor<T> mask;              // [N_a x T'_a]
  Tensor<T> masked_embedding;  // [N_a x T'_a]
  Tensor<T> waveform;          // [1 x T_a]
};

namespace detail {

template <typename T>
Tensor<T> first_frames(const Tensor<T>& x, std::size_t frames) {
  Tensor<T> out(Shape{x.channels(), frames});
  for (std::size_t c = 0; c < x.channels(); ++c)
    for (std::size_t t = 0; t < frames; ++t) out.at(c, t) = x.at(c, t);
  return out;
}

template <typename T>
SeparationOutput<T> to_output(const SeparationGraph<T>& g) {
  return {first_frames(g.mask.value(), g.layout.frames),
          first_frames(g.masked.value(), g.layout.frames), g.waveform.value()};
}

inline void check_inputs(const ModelConfig& cfg, std::size_t samples, int sample_rate) {
  if (samples == 0) throw ShapeError("empty audio");
  if (sample_rate != cfg.sample_rate) {
    throw ConfigError("mixture sample rate " + std::to_string(sample_rate) + " Hz does not match model rate " +
                      std::to_string(cfg.sample_rate) + " Hz");
  }
}

}  // namespace detail

/// Inference: pad, encode, separate, mask, decode, trim.
template <typename T>
SeparationOutput<T> separate(const Tensor<T>& mixture, int sample_rate, const Tensor<T>& video,
                             const ModelConfig& cfg, const ModelParams<T>& params) {
  detail::check_inputs(cfg, mixture.size(), sample_rate);
  Tape<T> tape;
  ParamBinder<T> pb(tape, params, false);
  Network<T> net(cfg, pb, cfg.fusion_options(false));
  return detail::to_output(separate_graph(net, mixture.reshaped(Shape{1, mixture.size()}), video));
}

template <typename T>
std::vector<SeparationOutput<T>> separate_sources(const Tensor<T>& mixture, int sample_rate,
                                                  const ModelConfig& cfg, const ModelParams<T>& params) {
  detail::check_inputs(cfg, mixture.size(), sample_rate);
  Tape<T> tape;
  ParamBinder<T> pb(tape, params, false);
  Network<T> net(cfg, pb, cfg.fusion_options(false));
  std::vector<SeparationOutput<T>> out;
  for (const auto& g : separate_sources_graph(net, mixture.reshaped(Shape{1, mixture.size()}))) {
    out.push_back(detail::to_output(g));
  }
  return out;
}

// --------------------------------------------------------------------------
// Cost accounting

/// Multiply-accumulates of one conv application: C_out * C_in/groups * K * L_out.
inline std::uint64_t conv_macs(std::size_t c_in, std::size_t c_out, const ConvSpec& spec,
                               std::size_t l_out) {
  return std::uint64_t(c_out) * (spec.depthwise ? 1 : c_in) * spec.kernel * l_out;
}

struct CostReport {
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
  std::uint64_t av_cycle_macs = 0;     // one audio-visual cycle
  std::uint64_t audio_cycle_macs = 0;  // one audio-only cycle
  std::map<std::string, std::uint64_t> blocks;  // per block, summed over all cycles
};

/// Analytic MAC count for `audio_seconds` of input; element-wise ops excluded.
inline CostReport count_costs(const ModelConfig& cfg, double audio_seconds) {
  if (!(audio_seconds > 0)) throw Error("audio_seconds must be positive");
  cfg.validate();
  CostReport r;
  r.params = count_params(cfg);
  const std::size_t samples = std::size_t(std::llround(audio_seconds * cfg.sample_rate));
  const auto layout = FrameLayout::compute(cfg, samples);
  const std::size_t na = cfg.n_audio, nv = cfg.n_video, d = cfg.depth, h = cfg.ffn_channels[1];
  const std::size_t la = layout.padded_frames;
  const std::size_t tv_raw = std::max<std::size_t>(1, video_frames_for(samples, cfg.sample_rate));
  const std::size_t lv = FrameLayout::round_up(tv_raw, cfg.frame_multiple());
  const auto& plan = cfg.conv;
  const ConvSpec k1{1, false};
  const bool phi = cfg.intra_variant == IntraVariant::kPhi;

  auto ffn_cost = [&](std::size_t c, std::size_t l) {
    return conv_macs(c, h, k1, l) + conv_macs(h, h, plan.ffn_mid, l) + conv_macs(h, c, k1, l);
  };
  auto bottom_up = [&](std::size_t c, std::size_t l) {
    std::uint64_t m = 0;
    for (std::size_t i = 1; i <= d; ++i) m += conv_macs(c, c, plan.bottom_up, l >> i);
    return m;
  };
  auto global = [&](std::size_t c, std::size_t l, const ConvSpec& s) {
    std::uint64_t m = 0;
    if (phi)
      for (std::size_t i = 0; i <= d; ++i) m += conv_macs(c, c, s, l >> i);
    return m;
  };
  auto local = [&](std::size_t c, std::size_t l, const ConvSpec& s) {
    std::uint64_t m = 0;
    for (std::size_t i = 0; i < d; ++i) m += conv_macs(c, c, s, l >> i);
    return m;
  };

  // Audio-only cycle (shares the audio side of the audio-visual cycle).
  std::map<std::string, std::uint64_t> audio_blocks{
      {"bottom_up", bottom_up(na, la)},
      {"inter_t", ffn_cost(na, la >> d)},
      {"global_intra", global(na, la, plan.global_audio)},
      {"local_intra", local(na, la, plan.local_audio)},
  };
  for (const auto& [_, m] : audio_blocks) r.audio_cycle_macs += m;

  std::map<std::string, std::uint64_t> av_blocks;
  if (!cfg.audio_only()) {
    av_blocks["bottom_up"] = bottom_up(na, la) + bottom_up(nv, lv);
    std::uint64_t it = ffn_cost(na, la >> d) + ffn_cost(nv, lv >> d);
    if (cfg.inter_t_enabled) {
      it += conv_macs(nv, na, plan.inter_t, lv >> d) + conv_macs(na, nv, plan.inter_t, la >> d);
    }
    av_blocks["inter_t"] = it;
    av_blocks["global_intra"] = global(na, la, plan.global_audio) + global(nv, lv, plan.global_video);
    std::uint64_t im = 0;
    if (cfg.inter_m_enabled)
      for (std::size_t i = 0; i <= d; ++i) im += conv_macs(nv, na, plan.inter_m, la >> i);
    av_blocks["inter_m"] = im;
    av_blocks["local_intra"] = local(na, la, plan.local_audio) + local(nv, lv, plan.local_video);
    std::uint64_t ib = 0;
    if (cfg.inter_b_enabled) {
      ib = conv_macs(na, nv, plan.inter_b, la) + conv_macs(nv, na, plan.inter_b, la) +
           conv_macs(nv, na, plan.inter_b, lv) + conv_macs(na, nv, plan.inter_b, lv);
    }
    av_blocks["inter_b"] = ib;
    for (const auto& [_, m] : av_blocks) r.av_cycle_macs += m;
  }

  const std::size_t av_cycles = cfg.audio_only() ? 0 : cfg.n_fusion_cycles;
  const std::size_t audio_cycles =
      cfg.audio_only() ? cfg.n_fusion_cycles + cfg.n_audio_cycles : cfg.n_audio_cycles;
  for (const auto& [k, m] : av_blocks) r.blocks[k] += m * av_cycles;
  for (const auto& [k, m] : audio_blocks) r.blocks[k] += m * audio_cycles;

  r.blocks["encoder"] = conv_macs(1, na, ConvSpec{cfg.enc_kernel, false}, layout.frames);
  r.blocks["decoder"] = std::uint64_t(na) * cfg.enc_kernel * la;
  if (cfg.audio_only()) {
    r.blocks["mask_head"] = conv_macs(na, cfg.n_sources * na, k1, la);
  } else if (cfg.video_in_channels > 0) {
    const ConvSpec k3{3, false};
    r.blocks["video_stub"] = conv_macs(cfg.video_in_channels, nv, k3, tv_raw) + conv_macs(nv, nv, k3, tv_raw);
  }
  if (cfg.audio_only()) r.blocks["decoder"] *= cfg.n_sources;
  for (const auto& [_, m] : r.blocks) r.macs += m;
  return r;
}

inline std::uint64_t count_macs(const ModelConfig& cfg, double audio_seconds) {
  return count_costs(cfg, audio_seconds).macs;
}

}  // namespace iianet
