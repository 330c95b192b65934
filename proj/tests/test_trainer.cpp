// Copyright 2026 The IIANet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "iianet/trainer.hpp"

namespace iianet {
namespace {

ModelParams<float> two_params() {
  ModelParams<float> p;
  p.tensors.emplace("a", Tensor<float>(Shape{2}, {1, -1}));
  p.tensors.emplace("b", Tensor<float>(Shape{1}, {0.5f}));
  return p;
}

TEST(Adam, FirstStepMovesByLearningRate) {
  auto p = two_params();
  auto st = make_adam(p, 1e-3);
  Gradients g{{"a", Tensor<float>(Shape{2}, {0.3f, -7})}, {"b", Tensor<float>(Shape{1}, {2})}};
  adam_step(p, g, st);
  EXPECT_NEAR(p.at("a")[0], 1 - 1e-3, 1e-7);
  EXPECT_NEAR(p.at("a")[1], -1 + 1e-3, 1e-7);
  EXPECT_NEAR(p.at("b")[0], 0.5 - 1e-3, 1e-7);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  auto p = two_params();
  auto before = p;
  auto st = make_adam(p, 1e-2);
  Gradients g{{"a", Tensor<float>::zeros({2})}, {"b", Tensor<float>::zeros({1})}};
  for (int i = 0; i < 3; ++i) adam_step(p, g, st);
  EXPECT_TRUE(p == before);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  auto p = two_params();
  auto st = make_adam(p, 1e-3);
  Gradients g{{"a", Tensor<float>::zeros({2})}, {"b", Tensor<float>::zeros({1})}};
  g.at("b").storage()[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    adam_step(p, g, st);
    FAIL();
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
  }
  EXPECT_EQ(st.step, 0u);
}

TEST(Clip, ScalesOnlyAboveThreshold) {
  Gradients g{{"a", Tensor<float>(Shape{2}, {6, 8})}};
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 5.0), 10.0);
  EXPECT_FLOAT_EQ(g.at("a")[0], 3.0f);
  EXPECT_FLOAT_EQ(g.at("a")[1], 4.0f);
  EXPECT_NEAR(global_norm(g), 5.0, 1e-6);
  Gradients h{{"a", Tensor<float>(Shape{1}, {3})}};
  EXPECT_DOUBLE_EQ(clip_global_norm(h, 5.0), 3.0);
  EXPECT_EQ(h.at("a")[0], 3.0f);
}

TEST(Clip, NormSpansAllTensors) {
  Gradients g{{"a", Tensor<float>(Shape{1}, {3})}, {"b", Tensor<float>(Shape{1}, {4})}};
  EXPECT_DOUBLE_EQ(global_norm(g), 5.0);
}

TEST(Schedule, HalvesAfterPatienceWithoutImprovement) {
  ScheduleState s;
  double lr = 1e-3;
  plateau_schedule(s, 1.0, 15, lr);
  for (int i = 0; i < 14; ++i) EXPECT_FALSE(plateau_schedule(s, 1.0, 15, lr));
  EXPECT_EQ(lr, 1e-3);
  EXPECT_TRUE(plateau_schedule(s, 1.0, 15, lr));
  EXPECT_EQ(lr, 5e-4);
  EXPECT_EQ(s.halvings, 1u);
}

TEST(Schedule, ImprovementResetsCounters) {
  ScheduleState s;
  double lr = 1e-3;
  plateau_schedule(s, 1.0, 15, lr);
  for (int i = 0; i < 14; ++i) plateau_schedule(s, 1.0, 15, lr);
  plateau_schedule(s, 0.5, 15, lr);
  EXPECT_EQ(s.epochs_since_improvement, 0u);
  for (int i = 0; i < 14; ++i) EXPECT_FALSE(plateau_schedule(s, 0.5, 15, lr));
  EXPECT_EQ(lr, 1e-3);
}

TEST(Schedule, EarlyStopAfterPatienceEpochs) {
  ScheduleState s;
  double lr = 1e-3;
  plateau_schedule(s, 1.0, 15, lr);
  for (int i = 0; i < 29; ++i) {
    plateau_schedule(s, 2.0, 15, lr);
    EXPECT_FALSE(early_stop(s, 30));
  }
  plateau_schedule(s, 2.0, 15, lr);
  EXPECT_TRUE(early_stop(s, 30));
  EXPECT_EQ(s.halvings, 2u);
}

ModelConfig tiny() {
  ModelConfig c;
  c.n_audio = c.n_video = 4;
  c.depth = 2;
  c.n_fusion_cycles = 1;
  c.n_audio_cycles = 1;
  c.ffn_channels = {4, 6, 4};
  return c;
}

TEST(TrainLoop, DeterministicAndFinite) {
  ModelConfig cfg = tiny();
  TrainConfig tc;
  tc.steps = 12;
  tc.steps_per_epoch = 5;
  DataConfig dc;
  dc.duration_s = 0.1;
  auto ex = toy_mixture(cfg, dc);
  auto run = [&] { return train_loop(cfg, tc, init_params<float>(cfg, 1), toy_source(cfg, dc), {ex}); };
  auto a = run(), b = run();
  EXPECT_EQ(a.step_losses, b.step_losses);
  EXPECT_TRUE(a.params == b.params);
  ASSERT_EQ(a.history.size(), 3u);
  for (const auto& r : a.history) {
    EXPECT_TRUE(std::isfinite(r.train_loss));
    EXPECT_TRUE(std::isfinite(r.val_si_snri));
  }
  EXPECT_EQ(a.steps_run, 12u);
  EXPECT_LT(a.step_losses.back(), a.step_losses.front());
}

TEST(TrainLoop, DynamicMixingAndDropoutRun) {
  ModelConfig cfg = tiny();
  cfg.dropout_p = 0.1;
  TrainConfig tc;
  tc.steps = 4;
  tc.steps_per_epoch = 2;
  DataConfig dc;
  dc.duration_s = 0.1;
  dc.dynamic_mix = true;
  dc.pool_size = 4;
  auto src = toy_source(cfg, dc);
  EXPECT_FALSE(src(0).mixture == src(1).mixture);
  auto r = train_loop(cfg, tc, init_params<float>(cfg, 2), src, {toy_mixture(cfg, dc)});
  EXPECT_EQ(r.history.size(), 2u);
}

TEST(TrainLoop, AudioOnlyUsesPermutationInvariantLoss) {
  ModelConfig cfg = tiny();
  cfg.mode = SeparationMode::kAudioOnly;
  DataConfig dc;
  dc.duration_s = 0.1;
  auto ex = toy_mixture(cfg, dc);
  ASSERT_EQ(ex.references.size(), 2u);
  auto params = init_params<float>(cfg, 3);
  auto outs = separate_sources(ex.mixture, cfg.sample_rate, cfg, params);
  double best = 1e300;
  for (auto perm : {std::vector<std::size_t>{0, 1}, std::vector<std::size_t>{1, 0}}) {
    double l = 0;
    for (std::size_t i = 0; i < 2; ++i) l -= si_snr(ex.references[i], outs[perm[i]].waveform);
    best = std::min(best, l / 2);
  }
  EXPECT_NEAR(score_example(cfg, params, ex).loss, best, 1e-4);
  TrainConfig tc;
  tc.steps = 3;
  tc.steps_per_epoch = 3;
  auto r = train_loop(cfg, tc, params, toy_source(cfg, dc), {ex});
  EXPECT_EQ(r.history.size(), 1u);
}

TEST(TrainLoop, EarlyStopEndsRunBeforeStepBudget) {
  ModelConfig cfg = tiny();
  TrainConfig tc;
  tc.lr = 0.0;  // validation loss never improves after the first epoch
  tc.steps = 50;
  tc.steps_per_epoch = 1;
  tc.plateau_patience = 1;
  tc.early_stop_patience = 2;
  DataConfig dc;
  dc.duration_s = 0.1;
  auto r = train_loop(cfg, tc, init_params<float>(cfg, 4), toy_source(cfg, dc), {toy_mixture(cfg, dc)});
  EXPECT_TRUE(r.early_stopped);
  EXPECT_EQ(r.steps_run, 3u);
}

}  // namespace
}  // namespace iianet
