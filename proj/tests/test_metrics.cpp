// Copyright 2026 The IIANet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "iianet/metrics.hpp"

namespace iianet {
namespace {

using Vec = std::vector<double>;

double sisnr(const Vec& r, const Vec& e) { return si_snr(std::span<const double>(r), std::span<const double>(e)); }
double sdr_of(const Vec& r, const Vec& e) { return sdr(std::span<const double>(r), std::span<const double>(e)); }

Vec random_vec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0, 1);
  Vec v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

TEST(SiSnr, UnitExampleIsZeroDb) {
  EXPECT_NEAR(sisnr({1, 0}, {1, 1}), 0.0, 1e-9);
  EXPECT_NEAR(sdr_of({1, 0}, {1, 1}), 0.0, 1e-9);
}

TEST(SiSnr, InvariantToEstimateScale) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    Vec r = random_vec(50, rng), e = random_vec(50, rng);
    for (std::size_t i = 0; i < r.size(); ++i) e[i] += 2 * r[i];
    const double base = sisnr(r, e);
    for (double c : {0.5, 3.0, 100.0}) {
      Vec scaled = e;
      for (auto& v : scaled) v *= c;
      EXPECT_NEAR(sisnr(r, scaled), base, 1e-9);
    }
  }
}

TEST(Sdr, NotScaleInvariant) {
  Vec r{1, 2, 3, 4}, e{1.1, 2, 2.9, 4};
  Vec e3 = e;
  for (auto& v : e3) v *= 3;
  EXPECT_NEAR(sisnr(r, e), sisnr(r, e3), 1e-9);
  EXPECT_GT(std::abs(sdr_of(r, e) - sdr_of(r, e3)), 1.0);
}

TEST(SiSnr, PerfectEstimateReturnsSentinel) {
  Vec r{0.5, -1, 2};
  EXPECT_EQ(sisnr(r, r), kInfiniteDb);
  EXPECT_EQ(sdr_of(r, r), kInfiniteDb);
  EXPECT_TRUE(is_infinite_db(sisnr(r, {1, -2, 4})));
  EXPECT_EQ(clamp_for_display(kInfiniteDb), kDisplayClampDb);
  EXPECT_EQ(clamp_for_display(12.5), 12.5);
}

TEST(SiSnr, RejectsZeroReferenceAndLengthMismatch) {
  EXPECT_THROW(sisnr({0, 0}, {1, 1}), Error);
  EXPECT_THROW(sdr_of({0, 0}, {1, 1}), Error);
  EXPECT_THROW(sisnr({1, 0}, {1, 1, 1}), ShapeError);
}

TEST(SiSnr, InvariantToJointTimePermutation) {
  std::mt19937_64 rng(2);
  Vec r = random_vec(40, rng), e = random_vec(40, rng);
  std::vector<std::size_t> idx(40);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  Vec rp(40), ep(40);
  for (std::size_t i = 0; i < 40; ++i) {
    rp[i] = r[idx[i]];
    ep[i] = e[idx[i]];
  }
  EXPECT_NEAR(sisnr(r, e), sisnr(rp, ep), 1e-9);
  EXPECT_NEAR(sdr_of(r, e), sdr_of(rp, ep), 1e-9);
}

TEST(SiSnr, MatchesProjectionDefinition) {
  Vec r{1, 2, -1}, e{0.5, 2.5, 0};
  const double a = (0.5 + 5.0 + 0.0) / 6.0;
  double st = 0, nn = 0;
  for (int i = 0; i < 3; ++i) {
    st += a * r[i] * a * r[i];
    nn += (e[i] - a * r[i]) * (e[i] - a * r[i]);
  }
  EXPECT_NEAR(sisnr(r, e), 10 * std::log10(st / nn), 1e-12);
}

TEST(Improvement, VanishesWhenEstimateIsTheMixture) {
  std::mt19937_64 rng(3);
  Tensor<double> mix(Shape{1, 30}, random_vec(30, rng)), ref(Shape{1, 30}, random_vec(30, rng));
  EXPECT_EQ(si_snri(mix, ref, mix), 0.0);
  EXPECT_EQ(sdri(mix, ref, mix), 0.0);
  auto m = evaluate(mix, ref, ref);
  EXPECT_EQ(m.si_snr_db, kInfiniteDb);
}

TEST(SiSnrLoss, ValueIsNegatedMetricAndGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  Tensor<double> ref(Shape{1, 20}, random_vec(20, rng)), est0(Shape{1, 20}, random_vec(20, rng));
  Tape<double> tape;
  auto loss = si_snr_loss(tape.leaf(est0, "e"), ref);
  EXPECT_NEAR(loss.value().item(), -si_snr(ref, est0), 1e-9);
  auto g = tape.backward(loss).at("e");
  auto num = finite_difference_grad([&](const Tensor<double>& e) { return -si_snr(ref, e); }, est0, 1e-6);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], num[i], 1e-6 * std::max(1.0, std::abs(num[i])));
}

// Independent oracle: recursive enumeration of all assignments.
void enumerate(const std::vector<std::vector<double>>& score, std::vector<std::size_t>& cur, std::vector<bool>& used,
               double& best, std::vector<std::vector<std::size_t>>& argmax) {
  const std::size_t c = score.size();
  if (cur.size() == c) {
    double s = 0;
    for (std::size_t i = 0; i < c; ++i) s += score[i][cur[i]];
    s /= double(c);
    if (s > best + 1e-12) {
      best = s;
      argmax = {cur};
    } else if (std::abs(s - best) <= 1e-12) {
      argmax.push_back(cur);
    }
    return;
  }
  for (std::size_t j = 0; j < c; ++j) {
    if (used[j]) continue;
    used[j] = true;
    cur.push_back(j);
    enumerate(score, cur, used, best, argmax);
    cur.pop_back();
    used[j] = false;
  }
}

TEST(Pit, AgreesWithIndependentEnumerator) {
  std::mt19937_64 rng(5);
  for (std::size_t c : {2u, 3u}) {
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<Vec> refs, ests;
      for (std::size_t i = 0; i < c; ++i) {
        refs.push_back(random_vec(32, rng));
        ests.push_back(random_vec(32, rng));
      }
      auto got = pit_best(refs, ests, sisnr);
      std::vector<std::vector<double>> score(c, std::vector<double>(c));
      for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < c; ++j) score[i][j] = sisnr(refs[i], ests[j]);
      std::vector<std::size_t> cur;
      std::vector<bool> used(c, false);
      double best = -1e300;
      std::vector<std::vector<std::size_t>> argmax;
      enumerate(score, cur, used, best, argmax);
      EXPECT_NEAR(got.mean, best, 1e-9);
      EXPECT_NE(std::find(argmax.begin(), argmax.end(), got.permutation), argmax.end());
    }
  }
}

TEST(Pit, RecoversSwappedEstimates) {
  Vec a{1, 0, 1, 0}, b{0, 1, 0, -1};
  auto r = pit_best(std::vector<Vec>{a, b}, std::vector<Vec>{b, a}, sisnr);
  EXPECT_EQ(r.permutation, (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(r.mean, kInfiniteDb);
}

TEST(Pit, SingleSourceAndTiesPickFirstPermutation) {
  Vec a{1, 2, 3};
  auto one = pit_best(std::vector<Vec>{a}, std::vector<Vec>{{1, 2, 2}}, sisnr);
  EXPECT_EQ(one.permutation, (std::vector<std::size_t>{0}));
  auto tie = pit_best(std::vector<Vec>{a, a}, std::vector<Vec>{a, a}, sisnr);
  EXPECT_EQ(tie.permutation, (std::vector<std::size_t>{0, 1}));
  EXPECT_THROW(pit_best(std::vector<Vec>{a}, std::vector<Vec>{a, a}, sisnr), ShapeError);
  EXPECT_THROW(pit_best(std::vector<Vec>(5, a), std::vector<Vec>(5, a), sisnr), ShapeError);
}

TEST(Pit, LossEqualsMinimumOverPermutations) {
  std::mt19937_64 rng(6);
  std::vector<Tensor<double>> refs, ests;
  for (int i = 0; i < 3; ++i) {
    refs.emplace_back(Shape{1, 16}, random_vec(16, rng));
    ests.emplace_back(Shape{1, 16}, random_vec(16, rng));
  }
  Tape<double> tape;
  std::vector<Var<double>> ev;
  for (auto& e : ests) ev.push_back(tape.constant(e));
  std::vector<std::size_t> chosen;
  const double loss = pit_si_snr_loss(ev, refs, &chosen).value().item();
  std::vector<std::size_t> perm{0, 1, 2};
  double best = 1e300;
  do {
    double l = 0;
    for (int i = 0; i < 3; ++i) l -= si_snr(refs[i], ests[perm[i]]);
    best = std::min(best, l / 3);
  } while (std::next_permutation(perm.begin(), perm.end()));
  EXPECT_NEAR(loss, best, 1e-9);
  EXPECT_EQ(chosen.size(), 3u);
}

}  // namespace
}  // namespace iianet
