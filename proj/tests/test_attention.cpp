// Copyright 2026 The IIANet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <random>

#include <gtest/gtest.h>

#include "iianet/attention.hpp"

namespace iianet {
namespace {

struct Maker {
  Tape<float>& tape;
  std::mt19937_64 rng;
  bool zero = false;

  Tensor<float> rnd(Shape s, double lo = -1, double hi = 1) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor<float> t(std::move(s));
    if (!zero)
      for (auto& v : t.storage()) v = float(u(rng));
    return t;
  }
  Var<float> var(Shape s) { return tape.constant(rnd(std::move(s))); }
  Var<float> input(Shape s) {
    std::uniform_real_distribution<double> u(-1, 1);
    Tensor<float> t(std::move(s));
    for (auto& v : t.storage()) v = float(u(rng));
    return tape.constant(t);
  }
  QParams<float> q(std::size_t ci, std::size_t co, std::size_t k = 1) {
    QParams<float> p;
    p.conv = {var({co, ci, k}), var({co}), 1, k / 2};
    p.norm = {zero ? var({co}) : tape.constant(rnd({co}, 0.5, 1.5)), var({co})};
    return p;
  }
  FfnParams<float> ffn(std::size_t c, std::size_t h) {
    FfnParams<float> f;
    f.in = {var({h, c, 1}), std::nullopt, 1, 0};
    f.mid = {var({h, h, 5}), var({h}), 1, 2};
    f.out = {var({c, h, 1}), std::nullopt, 1, 0};
    f.norm = {zero ? var({c}) : tape.constant(rnd({c}, 0.5, 1.5)), var({c})};
    return f;
  }
  ScalePyramid<float> pyramid(std::size_t c, std::size_t len, std::size_t d, Modality m) {
    ScalePyramid<float> p;
    p.modality = m;
    for (std::size_t i = 0; i <= d; ++i) p.levels.push_back(input({c, len >> i}));
    return p;
  }
};

Tensor<float> half(const Tensor<float>& x) {
  Tensor<float> y = x;
  for (auto& v : y.storage()) v *= 0.5f;
  return y;
}

double diff(const Var<float>& a, const Var<float>& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double m = 0;
  for (std::size_t i = 0; i < a.value().size(); ++i)
    m = std::max(m, std::abs(double(a.value()[i]) - double(b.value()[i])));
  return m;
}

TEST(ZeroParameters, IntraAttentionHalvesInput) {
  Tape<float> tape;
  Maker mk{tape, std::mt19937_64(1), true};
  auto x = mk.input({4, 8}), y = mk.input({4, 2});
  EXPECT_EQ(intra_a_global(x, y, mk.q(4, 4)).value(), half(x.value()));
  EXPECT_EQ(intra_a_prime(x, tape.constant(Tensor<float>::zeros({4, 2}))).value(), half(x.value()));
}

TEST(ZeroParameters, InterAMHalvesAudio) {
  Tape<float> tape;
  Maker mk{tape, std::mt19937_64(2), true};
  auto s = mk.input({4, 8}), v = mk.input({3, 4});
  EXPECT_EQ(inter_a_m(s, v, mk.q(3, 4)).value(), half(s.value()));
}

TEST(ZeroParameters, InterABIsIdentity) {
  Tape<float> tape;
  Maker mk{tape, std::mt19937_64(3), true};
  auto s = mk.input({4, 8}), v = mk.input({3, 4});
  InterBParams<float> p{mk.q(4, 3), mk.q(3, 4), mk.q(3, 4), mk.q(4, 3)};
  auto [es, ev] = inter_a_b(s, v, p);
  EXPECT_EQ(es.value(), s.value());
  EXPECT_EQ(ev.value(), v.value());
}

TEST(ZeroParameters, InterATGivesZeroGlobalFeatures) {
  Tape<float> tape;
  Maker mk{tape, std::mt19937_64(4), true};
  auto a = mk.pyramid(4, 8, 2, Modality::kAudio), v = mk.pyramid(4, 4, 2, Modality::kVideo);
  InterTParams<float> p{mk.q(4, 4), mk.q(4, 4), mk.ffn(4, 6), mk.ffn(4, 6)};
  auto g = inter_a_t(a, v, p, FusionOptions{});
  EXPECT_EQ(g.s_g.value(), Tensor<float>::zeros({4, 2}));
  EXPECT_EQ(g.v_g.value(), Tensor<float>::zeros({4, 1}));
}

TEST(Composition, IntraAttentionMatchesPrimitivePipeline) {
  Tape<float> tape;
  Maker mk{tape, std::mt19937_64(5)};
  auto x = mk.input({4, 8}), y = mk.input({4, 2});
  auto q = mk.q(4, 4, 3);
  auto g = gln(conv1d(resample_nearest(y, 8), q.conv), q.norm);
  EXPECT_LT(diff(intra_a_global(x, y, q), ew_add(ew_mul(sigmoid(g), x), g)), 1e-6);
  EXPECT_LT(diff(intra_a_prime(x, y), ew_mul(sigmoid(resample_nearest(y, 8)), x)), 1e-6);
}

TEST(Composition, InterAMMatchesPrimitivePipeline) {
  Tape<float> tape;
  Maker mk{tape, std::mt19937_64(6)};
  auto s = mk.input({4, 8}), v = mk.input({3, 4});
  auto q = mk.q(3, 4);
  EXPECT_LT(diff(inter_a_m(s, v, q), ew_mul(sigmoid(q_op(resample_nearest(v, 8), q)), s)), 1e-6);
}

TEST(Composition, InterATMatchesPrimitivePipeline) {
  Tape<float> tape;
  Maker mk{tape, std::mt19937_64(7)};
  auto a = mk.pyramid(4, 16, 2, Modality::kAudio), v = mk.pyramid(3, 8, 2, Modality::kVideo);
  InterTParams<float> p{mk.q(3, 4), mk.q(4, 3), mk.ffn(4, 5), mk.ffn(3, 5)};
  auto fs = ew_add(ew_add(a.levels[2], avg_pool1d(a.levels[0], 4)), avg_pool1d(a.levels[1], 2));
  auto fv = ew_add(ew_add(v.levels[2], avg_pool1d(v.levels[0], 4)), avg_pool1d(v.levels[1], 2));
  auto sg = ffn(ew_mul(fs, sigmoid(resample_nearest(q_op(fv, p.video_to_audio), 4))), p.ffn_audio);
  auto vg = ffn(ew_mul(fv, sigmoid(resample_nearest(q_op(fs, p.audio_to_video), 2))), p.ffn_video);
  auto g = inter_a_t(a, v, p, FusionOptions{});
  EXPECT_LT(diff(g.s_g, sg), 1e-6);
  EXPECT_LT(diff(g.v_g, vg), 1e-6);

  FusionOptions off;
  off.inter_t = false;
  auto g0 = inter_a_t(a, v, p, off);
  EXPECT_LT(diff(g0.s_g, ffn(fs, p.ffn_audio)), 1e-6);
  EXPECT_LT(diff(g0.v_g, ffn(fv, p.ffn_video)), 1e-6);
}

TEST(Composition, InterABMatchesPrimitivePipeline) {
  Tape<float> tape;
  Maker mk{tape, std::mt19937_64(8)};
  auto s = mk.input({4, 8}), v = mk.input({3, 2});
  InterBParams<float> p{mk.q(4, 3), mk.q(3, 4), mk.q(3, 4), mk.q(4, 3)};
  auto [es, ev] = inter_a_b(s, v, p);
  auto es_ref = ew_add(s, q_op(ew_mul(resample_nearest(v, 8), sigmoid(q_op(s, p.audio_inner))), p.audio_outer));
  auto ev_ref = ew_add(v, q_op(ew_mul(resample_nearest(s, 2), sigmoid(q_op(v, p.video_inner))), p.video_outer));
  EXPECT_LT(diff(es, es_ref), 1e-6);
  EXPECT_LT(diff(ev, ev_ref), 1e-6);
}

// Depth-2 top-down pass written out level by level.
TEST(Composition, TopDownPassAtDepthTwoMatchesUnrolledSteps) {
  for (auto variant : {IntraVariant::kPhi, IntraVariant::kPhiPrime}) {
    Tape<float> tape;
    Maker mk{tape, std::mt19937_64(9)};
    auto a = mk.pyramid(4, 16, 2, Modality::kAudio), v = mk.pyramid(3, 8, 2, Modality::kVideo);
    GlobalFeatures<float> g{mk.input({4, 4}), mk.input({3, 2})};
    TopDownParams<float> p;
    for (int i = 0; i < 3; ++i) {
      if (variant == IntraVariant::kPhi) {
        p.global_audio.push_back(mk.q(4, 4, 3));
        p.global_video.push_back(mk.q(3, 3, 3));
      }
      p.inter_m.push_back(mk.q(3, 4));
    }
    for (int i = 0; i < 2; ++i) {
      p.local_audio.push_back(mk.q(4, 4));
      p.local_video.push_back(mk.q(3, 3));
    }
    FusionOptions opt;
    opt.variant = variant;
    auto [s0, v0] = top_down_pass(a, v, g, p, opt);

    auto mod = [&](const Var<float>& x, const Var<float>& y, const std::vector<QParams<float>>& qs, int i) {
      return variant == IntraVariant::kPhi ? intra_a_global(x, y, qs[i]) : intra_a_prime(x, y);
    };
    auto sb0 = mod(a.levels[0], g.s_g, p.global_audio, 0), sb1 = mod(a.levels[1], g.s_g, p.global_audio, 1),
         sb2 = mod(a.levels[2], g.s_g, p.global_audio, 2);
    auto vb0 = mod(v.levels[0], g.v_g, p.global_video, 0), vb1 = mod(v.levels[1], g.v_g, p.global_video, 1),
         vb2 = mod(v.levels[2], g.v_g, p.global_video, 2);
    auto st0 = inter_a_m(sb0, vb0, p.inter_m[0]), st1 = inter_a_m(sb1, vb1, p.inter_m[1]),
         st2 = inter_a_m(sb2, vb2, p.inter_m[2]);
    auto s1 = intra_a_global(st1, st2, p.local_audio[1]);
    auto s0_ref = intra_a_global(st0, s1, p.local_audio[0]);
    auto v1 = intra_a_global(vb1, vb2, p.local_video[1]);
    auto v0_ref = intra_a_global(vb0, v1, p.local_video[0]);
    EXPECT_LT(diff(s0, s0_ref), 1e-6);
    EXPECT_LT(diff(v0, v0_ref), 1e-6);
  }
}

TEST(Shapes, BlocksPreserveScaleShapesAcrossDepthsAndWidths) {
  for (std::size_t d : {1u, 2u, 3u})
    for (std::size_t c : {2u, 4u, 8u}) {
      Tape<float> tape;
      Maker mk{tape, std::mt19937_64(10 + d * 10 + c)};
      const std::size_t la = 8u << d, lv = 2u << d;
      auto a = mk.pyramid(c, la, d, Modality::kAudio), v = mk.pyramid(c, lv, d, Modality::kVideo);
      InterTParams<float> pt{mk.q(c, c), mk.q(c, c), mk.ffn(c, 2 * c), mk.ffn(c, 2 * c)};
      auto g = inter_a_t(a, v, pt, FusionOptions{});
      EXPECT_EQ(g.s_g.shape(), (Shape{c, la >> d}));
      EXPECT_EQ(g.v_g.shape(), (Shape{c, lv >> d}));
      TopDownParams<float> p;
      for (std::size_t i = 0; i <= d; ++i) {
        p.global_audio.push_back(mk.q(c, c));
        p.global_video.push_back(mk.q(c, c));
        p.inter_m.push_back(mk.q(c, c));
      }
      for (std::size_t i = 0; i < d; ++i) {
        p.local_audio.push_back(mk.q(c, c));
        p.local_video.push_back(mk.q(c, c));
      }
      auto [s0, v0] = top_down_pass(a, v, g, p, FusionOptions{});
      EXPECT_EQ(s0.shape(), (Shape{c, la}));
      EXPECT_EQ(v0.shape(), (Shape{c, lv}));
      for (std::size_t i = 0; i <= d; ++i) {
        EXPECT_EQ(intra_a_global(a.levels[i], g.s_g, p.global_audio[i]).shape(), a.levels[i].shape());
        EXPECT_EQ(inter_a_m(a.levels[i], v.levels[i], p.inter_m[i]).shape(), a.levels[i].shape());
      }
      InterBParams<float> pb{mk.q(c, c), mk.q(c, c), mk.q(c, c), mk.q(c, c)};
      auto [es, ev] = inter_a_b(s0, v0, pb);
      EXPECT_EQ(es.shape(), s0.shape());
      EXPECT_EQ(ev.shape(), v0.shape());
    }
}

TEST(Shapes, IntraAttentionRejectsCoarserTarget) {
  Tape<float> tape;
  Maker mk{tape, std::mt19937_64(11)};
  EXPECT_THROW(intra_a_prime(mk.input({4, 2}), mk.input({4, 8})), ShapeError);
  EXPECT_THROW(intra_a_prime(mk.input({4, 8}), mk.input({3, 2})), ShapeError);
}

TEST(Dropout, FusionDropoutNeedsRngOnlyWhileTraining) {
  Tape<float> tape;
  Maker mk{tape, std::mt19937_64(12)};
  auto a = mk.pyramid(4, 8, 1, Modality::kAudio), v = mk.pyramid(4, 4, 1, Modality::kVideo);
  InterTParams<float> p{mk.q(4, 4), mk.q(4, 4), mk.ffn(4, 6), mk.ffn(4, 6)};
  FusionOptions opt;
  opt.dropout_p = 0.5;
  auto eval = inter_a_t(a, v, p, opt);
  opt.training = true;
  EXPECT_THROW(inter_a_t(a, v, p, opt), Error);
  std::mt19937_64 rng(1);
  opt.rng = &rng;
  auto train = inter_a_t(a, v, p, opt);
  EXPECT_GT(diff(eval.s_g, train.s_g), 1e-6);
}

}  // namespace
}  // namespace iianet
