// Copyright 2026 The IIANet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Adam, global-norm clipping, plateau halving, early stopping and the
// batch-size-1 training loop on negative SI-SNR (PIT in audio-only mode).

#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "iianet/data.hpp"
#include "iianet/metrics.hpp"
#include "iianet/model.hpp"

namespace iianet {

using Gradients = std::map<std::string, Tensor<float>>;

struct AdamState {
  std::map<std::string, Tensor<float>> m, v;
  std::size_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

inline AdamState make_adam(const ModelParams<float>& params, double lr) {
  AdamState s;
  s.lr = lr;
  for (const auto& [name, t] : params.tensors) {
    s.m.emplace(name, Tensor<float>::zeros(t.shape()));
    s.v.emplace(name, Tensor<float>::zeros(t.shape()));
  }
  return s;
}

/// Bias-corrected Adam update of every parameter.
inline void adam_step(ModelParams<float>& params, const Gradients& grads, AdamState& st) {
  for (const auto& [name, t] : params.tensors) {
    auto it = grads.find(name);
    if (it == grads.end()) throw Error("adam_step: no gradient for parameter '" + name + "'");
    if (it->second.shape() != t.shape()) throw ShapeError("adam_step: gradient shape mismatch for '" + name + "'");
    if (!it->second.all_finite()) throw NonFiniteError("non-finite gradient in parameter '" + name + "'");
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, double(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, double(st.step));
  for (auto& [name, p] : params.tensors) {
    const auto& g = grads.at(name);
    auto& m = st.m.at(name);
    auto& v = st.v.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = st.beta1 * m[i] + (1 - st.beta1) * gi;
      const double vi = st.beta2 * v[i] + (1 - st.beta2) * gi * gi;
      m[i] = float(mi);
      v[i] = float(vi);
      p[i] = float(p[i] - st.lr * (mi / c1) / (std::sqrt(vi / c2) + st.eps));
    }
  }
}

inline double global_norm(const Gradients& grads) {
  double s = 0;
  for (const auto& [_, g] : grads) s += dot(g.data(), g.data());
  return std::sqrt(s);
}

/// Scales all gradients by max_norm / norm when norm exceeds max_norm.
/// Returns the norm before clipping.
inline double clip_global_norm(Gradients& grads, double max_norm) {
  if (!(max_norm > 0)) throw Error("clip_global_norm: max_norm must be positive");
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& [_, g] : grads)
      for (auto& v : g.storage()) v = float(double(v) * f);
  }
  return norm;
}

/// Minimum decrease of the validation loss that counts as improvement.
inline constexpr double kImprovementThreshold = 1e-6;

struct ScheduleState {
  double best = std::numeric_limits<double>::infinity();
  std::size_t epochs_since_improvement = 0;  // drives early stopping
  std::size_t epochs_since_adjust = 0;       // drives lr halving
  std::size_t halvings = 0;
};

/// Records one epoch's validation loss; halves `lr` after `patience`
/// consecutive epochs without improvement. Returns true when it halved.
inline bool plateau_schedule(ScheduleState& s, double val_loss, std::size_t patience, double& lr) {
  if (val_loss <= s.best - kImprovementThreshold) {
    s.best = val_loss;
    s.epochs_since_improvement = 0;
    s.epochs_since_adjust = 0;
    return false;
  }
  ++s.epochs_since_improvement;
  if (++s.epochs_since_adjust >= patience) {
    lr *= 0.5;
    s.epochs_since_adjust = 0;
    ++s.halvings;
    return true;
  }
  return false;
}

inline bool early_stop(const ScheduleState& s, std::size_t patience) {
  return s.epochs_since_improvement >= patience;
}

/// One training or validation item. In audio-visual mode references[0] is the
/// target selected by `video`; in audio-only mode every reference is a source.
struct TrainExample {
  Tensor<float> mixture;
  std::vector<Tensor<float>> references;
  Tensor<float> video;
};

struct ExampleScore {
  double loss = 0;     // mean -SI-SNR
  double si_snri = 0;  // mean over matched sources
};

/// Differentiable loss of one example on an existing tape.
inline Var<float> example_loss(Network<float>& net, const TrainExample& ex,
                               std::vector<Tensor<float>>* estimates = nullptr,
                               std::vector<std::size_t>* perm = nullptr) {
  const auto& cfg = net.config();
  if (cfg.audio_only()) {
    auto graphs = separate_sources_graph(net, ex.mixture);
    std::vector<Var<float>> ests;
    for (const auto& g : graphs) ests.push_back(g.waveform);
    if (estimates)
      for (const auto& e : ests) estimates->push_back(e.value());
    return pit_si_snr_loss(ests, ex.references, perm);
  }
  auto g = separate_graph(net, ex.mixture, ex.video);
  if (estimates) estimates->push_back(g.waveform.value());
  if (perm) *perm = {0};
  return si_snr_loss(g.waveform, ex.references.at(0));
}

inline ExampleScore score_example(const ModelConfig& cfg, const ModelParams<float>& params, const TrainExample& ex) {
  Tape<float> tape;
  ParamBinder<float> pb(tape, params, false);
  Network<float> net(cfg, pb, cfg.fusion_options(false));
  std::vector<Tensor<float>> ests;
  std::vector<std::size_t> perm;
  ExampleScore s;
  s.loss = double(example_loss(net, ex, &ests, &perm).value().item());
  for (std::size_t i = 0; i < perm.size(); ++i) s.si_snri += si_snri(ex.mixture, ex.references[i], ests[perm[i]]);
  s.si_snri /= double(perm.size());
  return s;
}

struct HistoryRow {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_si_snri = 0;
  double lr = 0;
};

struct TrainResult {
  ModelParams<float> params;
  std::vector<HistoryRow> history;
  std::vector<double> step_losses;
  std::size_t steps_run = 0;
  bool early_stopped = false;
};

using ExampleSource = std::function<TrainExample(std::size_t step)>;

/// forward -> loss -> backward -> clip -> Adam per step; validation,
/// plateau halving and early stopping once per epoch.
inline TrainResult train_loop(const ModelConfig& cfg, const TrainConfig& tc, ModelParams<float> params,
                              const ExampleSource& train, const std::vector<TrainExample>& val,
                              const std::function<void(const HistoryRow&)>& on_epoch = {}) {
  cfg.validate();
  if (tc.steps_per_epoch == 0) throw ConfigError("steps_per_epoch must be positive");
  if (val.empty()) throw Error("train_loop needs at least one validation example");
  TrainResult r;
  AdamState adam = make_adam(params, tc.lr);
  ScheduleState sched;
  std::mt19937_64 dropout_rng(tc.seed);
  double epoch_loss = 0;
  std::size_t epoch_steps = 0;

  for (std::size_t step = 0; step < tc.steps; ++step) {
    Gradients grads;
    double loss_value = 0;
    try {
      Tape<float> tape;
      ParamBinder<float> pb(tape, params, true);
      Network<float> net(cfg, pb, cfg.fusion_options(true, &dropout_rng));
      Var<float> loss = example_loss(net, train(step));
      loss_value = double(loss.value().item());
      grads = tape.backward(loss);
    } catch (const NonFiniteError& e) {
      throw NonFiniteError("training aborted at step " + std::to_string(step) + ": " + e.what());
    }
    clip_global_norm(grads, tc.clip_norm);
    adam_step(params, grads, adam);
    r.step_losses.push_back(loss_value);
    epoch_loss += loss_value;
    ++epoch_steps;
    r.steps_run = step + 1;

    if (epoch_steps == tc.steps_per_epoch || step + 1 == tc.steps) {
      double val_loss = 0, val_snri = 0;
      for (const auto& ex : val) {
        auto s = score_example(cfg, params, ex);
        val_loss += s.loss;
        val_snri += s.si_snri;
      }
      val_loss /= double(val.size());
      val_snri /= double(val.size());
      HistoryRow row{r.history.size() + 1, epoch_loss / double(epoch_steps), val_snri, adam.lr};
      r.history.push_back(row);
      if (on_epoch) on_epoch(row);
      epoch_loss = 0;
      epoch_steps = 0;
      plateau_schedule(sched, val_loss, tc.plateau_patience, adam.lr);
      if (early_stop(sched, tc.early_stop_patience)) {
        r.early_stopped = true;
        break;
      }
    }
  }
  r.params = std::move(params);
  return r;
}

/// Visual features for `target`: its envelope, repeated across the channels
/// the model expects.
inline Tensor<float> toy_video(const ModelConfig& cfg, const Tensor<float>& target) {
  Tensor<float> env = envelope_embedding(target, cfg.sample_rate);
  const std::size_t ch = cfg.video_in_channels > 0 ? cfg.video_in_channels : cfg.n_video;
  Tensor<float> out(Shape{ch, env.length()});
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t t = 0; t < env.length(); ++t) out.at(c, t) = env[t];
  return out;
}

inline TrainExample make_example(const ModelConfig& cfg, const Tensor<float>& mixture,
                                 const std::vector<Tensor<float>>& sources) {
  TrainExample ex;
  ex.mixture = mixture;
  if (cfg.audio_only()) {
    ex.references = sources;
  } else {
    ex.references = {sources.at(0)};
    ex.video = toy_video(cfg, sources.at(0));
  }
  return ex;
}

/// The fixed synthetic mixture: source 0 against source 1 at dc.snr_db.
inline TrainExample toy_mixture(const ModelConfig& cfg, const DataConfig& dc) {
  const auto samples = std::size_t(std::llround(dc.duration_s * cfg.sample_rate));
  auto src = synth_sources(2, samples, dc.seed);
  auto m = mix_at_snr(src[0], {src[1]}, dc.snr_db);
  return make_example(cfg, m.mixture, {src[0], m.scaled_interference});
}

/// Training stream: the fixed mixture every step, or fresh dynamic mixes
/// drawn from a pool of synthetic sources.
inline ExampleSource toy_source(const ModelConfig& cfg, const DataConfig& dc) {
  if (!dc.dynamic_mix) {
    auto ex = std::make_shared<TrainExample>(toy_mixture(cfg, dc));
    return [ex](std::size_t) { return *ex; };
  }
  const auto samples = std::size_t(std::llround(dc.duration_s * cfg.sample_rate));
  auto pool = std::make_shared<std::vector<Tensor<float>>>(synth_sources(dc.pool_size, samples, dc.seed));
  auto rng = std::make_shared<std::mt19937_64>(dc.seed ^ 0x9e3779b97f4a7c15ULL);
  return [cfg, pool, rng](std::size_t) {
    auto spec = dynamic_mix_batch(*pool, 1, *rng).front();
    return make_example(cfg, spec.mixture, spec.sources);
  };
}

inline void write_history_csv(const std::string& path, const std::vector<HistoryRow>& rows) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out << "epoch,train_loss,val_si_snri,lr\n" << std::setprecision(9);
  for (const auto& r : rows) out << r.epoch << ',' << r.train_loss << ',' << r.val_si_snri << ',' << r.lr << '\n';
}

}  // namespace iianet
