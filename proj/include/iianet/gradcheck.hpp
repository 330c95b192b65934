// Copyright 2026 The IIANet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Finite-difference verification of reverse-mode gradients at 64-bit.
//
// Each case builds a graph from named leaf tensors. Non-scalar outputs are
// reduced by a fixed random weighting, then every input entry is compared
// against the fourth-order central difference
//   (8 (f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))) / 12h,  h = 1e-3.
// Its truncation error is O(h^4), so the step can be large enough that
// rounding in the forward pass stays far below the tolerance. The relative
// error is |analytic - numeric| / max(|analytic|, |numeric|, kGradcheckFloor).

#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "iianet/metrics.hpp"
#include "iianet/model.hpp"

namespace iianet {

/// Gradients below this magnitude are compared on an absolute scale.
inline constexpr double kGradcheckFloor = 1e-3;
inline constexpr double kGradcheckTolerance = 1e-6;
inline constexpr double kGradcheckStep = 1e-3;

using LeafMap = std::map<std::string, Var<double>>;
using GraphFn = std::function<Var<double>(Tape<double>&, const LeafMap&)>;

struct GradcheckCase {
  std::string name;
  std::map<std::string, Tensor<double>> inputs;
  GraphFn graph;
};

struct GradcheckReport {
  std::string name;
  double max_rel_error = 0;
  std::string worst_input;
  std::size_t entries = 0;
  bool passed = false;
};

namespace detail {

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.storage()) v = u(rng);
  return t;
}

// Graph output reduced to a scalar with weights fixed by the output shape.
inline double probe_value(const GradcheckCase& c, const std::map<std::string, Tensor<double>>& inputs,
                          Tape<double>& tape, Var<double>* root) {
  LeafMap leaves;
  for (const auto& [name, t] : inputs) leaves.emplace(name, tape.leaf(t, name));
  Var<double> out = c.graph(tape, leaves);
  Var<double> scalar = out;
  if (out.value().size() != 1) {
    std::mt19937_64 rng(0x5eed);
    scalar = weighted_sum(out, random_tensor(out.shape(), rng));
  }
  if (root) *root = scalar;
  return scalar.value()[0];
}

}  // namespace detail

inline GradcheckReport run_gradcheck(const GradcheckCase& c, double tol = kGradcheckTolerance,
                                     double eps = kGradcheckStep) {
  GradcheckReport rep;
  rep.name = c.name;
  Tape<double> tape;
  Var<double> root;
  detail::probe_value(c, c.inputs, tape, &root);
  auto analytic = tape.backward(root);

  auto inputs = c.inputs;
  for (auto& [name, t] : inputs) {
    const auto& a = analytic.at(name);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double x0 = t[i];
      auto f_at = [&](double x) {
        t[i] = x;
        Tape<double> tp;
        return detail::probe_value(c, inputs, tp, nullptr);
      };
      const double f1 = f_at(x0 + eps), fm1 = f_at(x0 - eps);
      const double f2 = f_at(x0 + 2 * eps), fm2 = f_at(x0 - 2 * eps);
      t[i] = x0;
      const double num = (8 * (f1 - fm1) - (f2 - fm2)) / (12 * eps);
      const double err = std::abs(a[i] - num) / std::max({std::abs(a[i]), std::abs(num), kGradcheckFloor});
      if (err >= rep.max_rel_error) {
        rep.max_rel_error = err;
        rep.worst_input = name + "[" + std::to_string(i) + "]";
      }
      ++rep.entries;
    }
  }
  rep.passed = rep.max_rel_error < tol;
  return rep;
}

namespace gradcheck_cases {

using Inputs = std::map<std::string, Tensor<double>>;

inline void add_q(Inputs& in, std::mt19937_64& rng, const std::string& prefix, std::size_t c_in,
                  std::size_t c_out, std::size_t k, bool depthwise = false) {
  in[prefix + ".conv.weight"] = detail::random_tensor({c_out, depthwise ? 1 : c_in, k}, rng, -0.6, 0.6);
  in[prefix + ".conv.bias"] = detail::random_tensor({c_out}, rng, -0.3, 0.3);
  in[prefix + ".norm.gain"] = detail::random_tensor({c_out}, rng, 0.5, 1.5);
  in[prefix + ".norm.bias"] = detail::random_tensor({c_out}, rng, -0.3, 0.3);
}

inline QParams<double> q(const LeafMap& l, const std::string& prefix) {
  QParams<double> p;
  p.conv.weight = l.at(prefix + ".conv.weight");
  p.conv.bias = l.at(prefix + ".conv.bias");
  p.conv.padding = p.conv.weight.value().dim(2) / 2;
  p.norm.gain = l.at(prefix + ".norm.gain");
  p.norm.bias = l.at(prefix + ".norm.bias");
  return p;
}

inline void add_ffn(Inputs& in, std::mt19937_64& rng, const std::string& prefix, std::size_t c, std::size_t h) {
  in[prefix + ".in.weight"] = detail::random_tensor({h, c, 1}, rng, -0.6, 0.6);
  in[prefix + ".mid.weight"] = detail::random_tensor({h, h, 5}, rng, -0.4, 0.4);
  in[prefix + ".mid.bias"] = detail::random_tensor({h}, rng, -0.3, 0.3);
  in[prefix + ".out.weight"] = detail::random_tensor({c, h, 1}, rng, -0.6, 0.6);
  in[prefix + ".norm.gain"] = detail::random_tensor({c}, rng, 0.5, 1.5);
  in[prefix + ".norm.bias"] = detail::random_tensor({c}, rng, -0.3, 0.3);
}

inline FfnParams<double> ffn_params(const LeafMap& l, const std::string& prefix) {
  FfnParams<double> f;
  f.in.weight = l.at(prefix + ".in.weight");
  f.mid.weight = l.at(prefix + ".mid.weight");
  f.mid.bias = l.at(prefix + ".mid.bias");
  f.mid.padding = 2;
  f.out.weight = l.at(prefix + ".out.weight");
  f.norm.gain = l.at(prefix + ".norm.gain");
  f.norm.bias = l.at(prefix + ".norm.bias");
  return f;
}

/// Entries of uniform magnitude in [0.2, 1] with random sign, so ReLU inputs
/// stay clear of the kink.
inline Tensor<double> away_from_zero(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.2, 1.0);
  std::bernoulli_distribution sign(0.5);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.storage()) v = sign(rng) ? mag(rng) : -mag(rng);
  return t;
}

inline ScalePyramid<double> pyramid(const LeafMap& l, const char* prefix, std::size_t d, Modality m) {
  ScalePyramid<double> p;
  p.modality = m;
  for (std::size_t i = 0; i <= d; ++i) p.levels.push_back(l.at(std::string(prefix) + std::to_string(i)));
  return p;
}

inline void add_pyramid(Inputs& in, std::mt19937_64& rng, const char* prefix, std::size_t c, std::size_t len,
                        std::size_t d) {
  for (std::size_t i = 0; i <= d; ++i) in[std::string(prefix) + std::to_string(i)] = detail::random_tensor({c, len >> i}, rng);
}

/// Tiny model used by the end-to-end check: D=1, N_a=N_v=2, 40 samples.
inline ModelConfig tiny_model_config(IntraVariant variant) {
  ModelConfig cfg;
  cfg.n_audio = cfg.n_video = 2;
  cfg.depth = 1;
  cfg.n_fusion_cycles = 1;
  cfg.n_audio_cycles = 1;
  cfg.ffn_channels = {2, 3, 2};
  cfg.intra_variant = variant;
  cfg.sample_rate = 1000;
  return cfg;
}

inline GradcheckCase full_model_case(IntraVariant variant) {
  const ModelConfig cfg = tiny_model_config(variant);
  std::mt19937_64 rng(variant == IntraVariant::kPhi ? 41 : 43);
  GradcheckCase c;
  c.name = variant == IntraVariant::kPhi ? "full_model_si_snr_phi" : "full_model_si_snr_phi_prime";
  const std::size_t samples = 40;
  Tensor<double> wave = detail::random_tensor({1, samples}, rng, -0.5, 0.5);
  Tensor<double> ref = detail::random_tensor({1, samples}, rng, -0.5, 0.5);
  Tensor<double> video = detail::random_tensor({1, std::max<std::size_t>(2, video_frames_for(samples, cfg.sample_rate))}, rng, 0, 1);

  // First parameter seed whose mask ReLU inputs all keep kReluMargin from 0,
  // so finite differences never straddle the kink.
  constexpr double kReluMargin = 0.02;
  for (std::uint64_t seed = 17;; ++seed) {
    auto params = init_params<double>(cfg, seed);
    std::mt19937_64 jitter(seed);
    for (auto& [name, t] : params.tensors) {
      // Move GLN affine terms off their symmetric init values.
      if (name.find("norm.") != std::string::npos)
        for (auto& v : t.storage()) v += std::uniform_real_distribution<double>(-0.2, 0.2)(jitter);
    }
    Tape<double> tape;
    ParamBinder<double> pb(tape, params, false);
    Network<double> net(cfg, pb, cfg.fusion_options(false));
    separate_graph(net, wave, video);
    const auto& pre = net.pre_mask().value();
    if (std::all_of(pre.storage().begin(), pre.storage().end(), [](double v) { return std::abs(v) > kReluMargin; })) {
      c.inputs = std::move(params.tensors);
      break;
    }
  }
  c.graph = [cfg, wave, ref, video](Tape<double>& tape, const LeafMap& l) {
    ModelParams<double> none;
    ParamBinder<double> pb(tape, none, true);
    for (const auto& [name, v] : l) pb.bind(name, v);
    Network<double> net(cfg, pb, cfg.fusion_options(false));
    auto g = separate_graph(net, wave, video);
    return si_snr_loss(g.waveform, ref);
  };
  return c;
}

}  // namespace gradcheck_cases

/// Every primitive, attention block and the end-to-end model.
inline std::vector<GradcheckCase> gradcheck_suite() {
  namespace gc = gradcheck_cases;
  using detail::random_tensor;
  std::vector<GradcheckCase> cases;
  std::mt19937_64 rng(2026);
  auto add = [&](std::string name, gc::Inputs in, GraphFn fn) {
    cases.push_back({std::move(name), std::move(in), std::move(fn)});
  };

  add("ew_add_broadcast", {{"a", random_tensor({3, 4}, rng)}, {"b", random_tensor({3, 1}, rng)}},
      [](Tape<double>&, const LeafMap& l) { return ew_add(l.at("a"), l.at("b")); });
  add("ew_mul_broadcast", {{"a", random_tensor({3, 4}, rng)}, {"b", random_tensor({1, 4}, rng)}},
      [](Tape<double>&, const LeafMap& l) { return ew_mul(l.at("a"), l.at("b")); });
  add("ew_sub", {{"a", random_tensor({2, 5}, rng)}, {"b", random_tensor({2, 5}, rng)}},
      [](Tape<double>&, const LeafMap& l) { return ew_sub(l.at("a"), l.at("b")); });
  add("scale", {{"a", random_tensor({2, 3}, rng)}},
      [](Tape<double>&, const LeafMap& l) { return scale(l.at("a"), -1.7); });
  add("sigmoid", {{"x", random_tensor({3, 5}, rng, -4, 4)}},
      [](Tape<double>&, const LeafMap& l) { return sigmoid(l.at("x")); });
  add("relu", {{"x", gc::away_from_zero({3, 5}, rng)}},
      [](Tape<double>&, const LeafMap& l) { return relu(l.at("x")); });
  add("sum", {{"x", random_tensor({2, 3}, rng)}},
      [](Tape<double>&, const LeafMap& l) { return sum(l.at("x")); });
  add("pad_trim_slice", {{"x", random_tensor({4, 6}, rng)}}, [](Tape<double>&, const LeafMap& l) {
    return slice_channels(trim_time(pad_time(l.at("x"), 9), 7), 1, 2);
  });
  add("conv1d_padded", {{"x", random_tensor({3, 9}, rng)}, {"w", random_tensor({4, 3, 5}, rng)}, {"b", random_tensor({4}, rng)}},
      [](Tape<double>&, const LeafMap& l) { return conv1d(l.at("x"), Conv1dParams<double>{l.at("w"), l.at("b"), 1, 2}); });
  add("conv1d_strided", {{"x", random_tensor({2, 12}, rng)}, {"w", random_tensor({3, 2, 5}, rng)}, {"b", random_tensor({3}, rng)}},
      [](Tape<double>&, const LeafMap& l) { return conv1d(l.at("x"), Conv1dParams<double>{l.at("w"), l.at("b"), 2, 2}); });
  add("conv1d_depthwise", {{"x", random_tensor({3, 8}, rng)}, {"w", random_tensor({3, 1, 5}, rng)}},
      [](Tape<double>&, const LeafMap& l) { return conv1d(l.at("x"), Conv1dParams<double>{l.at("w"), std::nullopt, 1, 2}); });
  add("conv_transpose1d", {{"x", random_tensor({3, 6}, rng)}, {"w", random_tensor({3, 2, 4}, rng)}, {"b", random_tensor({2}, rng)}},
      [](Tape<double>&, const LeafMap& l) { return conv_transpose1d(l.at("x"), Conv1dParams<double>{l.at("w"), l.at("b"), 2, 0}); });
  add("avg_pool1d", {{"x", random_tensor({2, 8}, rng)}},
      [](Tape<double>&, const LeafMap& l) { return avg_pool1d(l.at("x"), 4); });
  add("resample_nearest_down", {{"x", random_tensor({2, 7}, rng)}},
      [](Tape<double>&, const LeafMap& l) { return resample_nearest(l.at("x"), 3); });
  add("interp_upsample", {{"x", random_tensor({2, 3}, rng)}},
      [](Tape<double>&, const LeafMap& l) { return interp_upsample(l.at("x"), 8); });
  add("gln", {{"x", random_tensor({3, 6}, rng)}, {"g", random_tensor({3}, rng, 0.5, 1.5)}, {"b", random_tensor({3}, rng)}},
      [](Tape<double>&, const LeafMap& l) { return gln(l.at("x"), GlnParams<double>{l.at("g"), l.at("b")}); });
  {
    gc::Inputs in{{"x", random_tensor({3, 8}, rng)}};
    gc::add_q(in, rng, "q", 3, 2, 5);
    add("q_op", in, [](Tape<double>&, const LeafMap& l) { return q_op(l.at("x"), gc::q(l, "q")); });
  }
  {
    gc::Inputs in{{"x", random_tensor({2, 8}, rng)}};
    gc::add_ffn(in, rng, "f", 2, 3);
    add("ffn", in, [](Tape<double>&, const LeafMap& l) { return ffn(l.at("x"), gc::ffn_params(l, "f")); });
  }
  add("dropout", {{"x", random_tensor({3, 6}, rng)}}, [](Tape<double>&, const LeafMap& l) {
    std::mt19937_64 r(5);
    return dropout(l.at("x"), 0.3, true, r);
  });
  add("si_snr_loss", {{"est", random_tensor({1, 16}, rng)}}, [ref = random_tensor({1, 16}, rng)](Tape<double>&, const LeafMap& l) {
    return si_snr_loss(l.at("est"), ref);
  });

  // Attention blocks.
  {
    gc::Inputs in{{"x", random_tensor({2, 8}, rng)}, {"y", random_tensor({2, 4}, rng)}};
    gc::add_q(in, rng, "q", 2, 2, 1);
    add("intra_a_phi", in, [](Tape<double>&, const LeafMap& l) { return intra_a_global(l.at("x"), l.at("y"), gc::q(l, "q")); });
  }
  add("intra_a_phi_prime", {{"x", random_tensor({2, 8}, rng)}, {"y", random_tensor({2, 4}, rng)}},
      [](Tape<double>&, const LeafMap& l) { return intra_a_prime(l.at("x"), l.at("y")); });
  for (bool enabled : {true, false}) {
    gc::Inputs in;
    gc::add_pyramid(in, rng, "s", 2, 8, 2);
    gc::add_pyramid(in, rng, "v", 3, 4, 2);
    gc::add_q(in, rng, "v2a", 3, 2, 1);
    gc::add_q(in, rng, "a2v", 2, 3, 1);
    gc::add_ffn(in, rng, "fa", 2, 3);
    gc::add_ffn(in, rng, "fv", 3, 3);
    add(enabled ? "inter_a_t" : "inter_a_t_disabled", in, [enabled](Tape<double>&, const LeafMap& l) {
      InterTParams<double> p{gc::q(l, "v2a"), gc::q(l, "a2v"), gc::ffn_params(l, "fa"), gc::ffn_params(l, "fv")};
      FusionOptions opt;
      opt.inter_t = enabled;
      auto g = inter_a_t(gc::pyramid(l, "s", 2, Modality::kAudio), gc::pyramid(l, "v", 2, Modality::kVideo), p, opt);
      return ew_add(sum(g.s_g), sum(ew_mul(g.v_g, g.v_g)));
    });
  }
  {
    gc::Inputs in{{"s", random_tensor({2, 8}, rng)}, {"v", random_tensor({3, 4}, rng)}};
    gc::add_q(in, rng, "q", 3, 2, 1);
    add("inter_a_m", in, [](Tape<double>&, const LeafMap& l) { return inter_a_m(l.at("s"), l.at("v"), gc::q(l, "q")); });
  }
  for (IntraVariant variant : {IntraVariant::kPhi, IntraVariant::kPhiPrime}) {
    const std::size_t d = 2;
    gc::Inputs in{{"sg", random_tensor({2, 2}, rng)}, {"vg", random_tensor({3, 1}, rng)}};
    gc::add_pyramid(in, rng, "s", 2, 8, d);
    gc::add_pyramid(in, rng, "v", 3, 4, d);
    for (std::size_t i = 0; i <= d; ++i) {
      if (variant == IntraVariant::kPhi) {
        gc::add_q(in, rng, "ga" + std::to_string(i), 2, 2, 1);
        gc::add_q(in, rng, "gv" + std::to_string(i), 3, 3, 1);
      }
      gc::add_q(in, rng, "m" + std::to_string(i), 3, 2, 1);
      if (i < d) {
        gc::add_q(in, rng, "la" + std::to_string(i), 2, 2, 1);
        gc::add_q(in, rng, "lv" + std::to_string(i), 3, 3, 1);
      }
    }
    add(variant == IntraVariant::kPhi ? "top_down_pass_phi" : "top_down_pass_phi_prime", in,
        [variant, d](Tape<double>&, const LeafMap& l) {
          TopDownParams<double> p;
          for (std::size_t i = 0; i <= d; ++i) {
            if (variant == IntraVariant::kPhi) {
              p.global_audio.push_back(gc::q(l, "ga" + std::to_string(i)));
              p.global_video.push_back(gc::q(l, "gv" + std::to_string(i)));
            }
            p.inter_m.push_back(gc::q(l, "m" + std::to_string(i)));
            if (i < d) {
              p.local_audio.push_back(gc::q(l, "la" + std::to_string(i)));
              p.local_video.push_back(gc::q(l, "lv" + std::to_string(i)));
            }
          }
          FusionOptions opt;
          opt.variant = variant;
          auto [s0, v0] = top_down_pass(gc::pyramid(l, "s", d, Modality::kAudio), gc::pyramid(l, "v", d, Modality::kVideo),
                                        GlobalFeatures<double>{l.at("sg"), l.at("vg")}, p, opt);
          return ew_add(sum(ew_mul(s0, s0)), sum(v0));
        });
  }
  {
    gc::Inputs in{{"s", random_tensor({2, 8}, rng)}, {"v", random_tensor({3, 4}, rng)}};
    gc::add_q(in, rng, "ai", 2, 3, 1);
    gc::add_q(in, rng, "ao", 3, 2, 1);
    gc::add_q(in, rng, "vi", 3, 2, 1);
    gc::add_q(in, rng, "vo", 2, 3, 1);
    add("inter_a_b", in, [](Tape<double>&, const LeafMap& l) {
      auto [es, ev] = inter_a_b(l.at("s"), l.at("v"), InterBParams<double>{gc::q(l, "ai"), gc::q(l, "ao"), gc::q(l, "vi"), gc::q(l, "vo")});
      return ew_add(sum(ew_mul(es, es)), sum(ev));
    });
  }
  cases.push_back(gc::full_model_case(IntraVariant::kPhi));
  cases.push_back(gc::full_model_case(IntraVariant::kPhiPrime));
  return cases;
}

}  // namespace iianet
