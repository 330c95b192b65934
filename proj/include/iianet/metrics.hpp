// Copyright 2026 The IIANet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Separation metrics in dB, the SI-SNR training loss and permutation search.
//
// SI-SNR uses no mean subtraction: omega = <est, ref> / <ref, ref>,
// SI-SNR = 10 log10(|omega ref|^2 / |est - omega ref|^2).

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "iianet/autodiff.hpp"

namespace iianet {

/// Reported in place of +infinity when the residual is exactly zero.
inline constexpr double kInfiniteDb = 1.0e6;
/// Reports clamp displayed values to this magnitude.
inline constexpr double kDisplayClampDb = 60.0;

inline bool is_infinite_db(double db) { return db >= kInfiniteDb; }
inline double clamp_for_display(double db) {
  return std::clamp(db, -kDisplayClampDb, kDisplayClampDb);
}

namespace detail {

template <typename T>
void require_same_length(std::span<const T> a, std::span<const T> b, const char* what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": length " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  if (a.empty()) throw ShapeError(std::string(what) + ": empty signal");
}

inline double ratio_db(double signal, double noise) {
  if (noise == 0.0) return kInfiniteDb;
  return std::min(10.0 * std::log10(signal / noise), kInfiniteDb);
}

}  // namespace detail

template <typename T>
double si_snr(std::span<const T> ref, std::span<const T> est) {
  detail::require_same_length(ref, est, "si_snr");
  const double rr = dot(ref, ref);
  if (rr == 0.0) throw Error("si_snr: reference is all zeros");
  const double omega = dot(est, ref) / rr;
  double target = 0, noise = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double s = omega * double(ref[i]);
    const double n = double(est[i]) - s;
    target += s * s;
    noise += n * n;
  }
  return detail::ratio_db(target, noise);
}

template <typename T>
double sdr(std::span<const T> ref, std::span<const T> est) {
  detail::require_same_length(ref, est, "sdr");
  const double rr = dot(ref, ref);
  if (rr == 0.0) throw Error("sdr: reference is all zeros");
  double noise = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double n = double(ref[i]) - double(est[i]);
    noise += n * n;
  }
  return detail::ratio_db(rr, noise);
}

template <typename T>
double si_snri(std::span<const T> mix, std::span<const T> ref, std::span<const T> est) {
  return si_snr(ref, est) - si_snr(ref, mix);
}

template <typename T>
double sdri(std::span<const T> mix, std::span<const T> ref, std::span<const T> est) {
  return sdr(ref, est) - sdr(ref, mix);
}

template <typename T>
double si_snr(const Tensor<T>& ref, const Tensor<T>& est) { return si_snr(ref.data(), est.data()); }
template <typename T>
double sdr(const Tensor<T>& ref, const Tensor<T>& est) { return sdr(ref.data(), est.data()); }
template <typename T>
double si_snri(const Tensor<T>& mix, const Tensor<T>& ref, const Tensor<T>& est) {
  return si_snri(mix.data(), ref.data(), est.data());
}
template <typename T>
double sdri(const Tensor<T>& mix, const Tensor<T>& ref, const Tensor<T>& est) {
  return sdri(mix.data(), ref.data(), est.data());
}

struct MetricResult {
  double si_snr_db = 0;
  double si_snri_db = 0;
  double sdr_db = 0;
  double sdri_db = 0;
};

template <typename T>
MetricResult evaluate(const Tensor<T>& mix, const Tensor<T>& ref, const Tensor<T>& est) {
  MetricResult r;
  r.si_snr_db = si_snr(ref, est);
  r.si_snri_db = r.si_snr_db - si_snr(ref, mix);
  r.sdr_db = sdr(ref, est);
  r.sdri_db = r.sdr_db - sdr(ref, mix);
  return r;
}

/// -SI-SNR(ref, est) in dB as a differentiable scalar of `est`.
template <typename T>
Var<T> si_snr_loss(const Var<T>& est, const Tensor<T>& ref) {
  const auto& ev = est.value();
  if (ev.size() != ref.size()) {
    throw ShapeError("si_snr_loss: estimate " + shape_str(ev.shape()) + " vs reference " +
                     shape_str(ref.shape()));
  }
  const double rr = dot(ref.data(), ref.data());
  if (rr == 0.0) throw Error("si_snr_loss: reference is all zeros");
  const double er = dot(ev.data(), ref.data());
  const double omega = er / rr;
  double target = 0, noise = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double s = omega * double(ref[i]);
    const double n = double(ev[i]) - s;
    target += s * s;
    noise += n * n;
  }
  const double loss = -10.0 * std::log10(target / noise);
  auto ie = est.id();
  // d SNR / d est = (10 / ln 10) * (2 ref / <est, ref> - 2 residual / |residual|^2)
  auto fn = [ie, ref, omega, er, noise](const Tensor<T>& g, Tape<T>& tp) {
    const auto& ev = tp.value(ie);
    auto& ge = tp.grad_buffer(ie);
    const double c = -10.0 / std::log(10.0) * double(g[0]);
    for (std::size_t i = 0; i < ge.size(); ++i) {
      const double n = double(ev[i]) - omega * double(ref[i]);
      ge[i] += T(c * (2.0 * double(ref[i]) / er - 2.0 * n / noise));
    }
  };
  return est.tape().record(Tensor<T>::scalar(T(loss)), "si_snr_loss", {est}, fn);
}

struct PitResult {
  std::vector<std::size_t> permutation;  // permutation[i] = estimate assigned to reference i
  double mean = 0;                       // mean metric under that assignment
};

/// Exhaustive permutation search maximising the mean of metric(ref_i, est_perm[i]).
/// Ties resolve to the lexicographically smallest permutation.
template <typename Signal, typename Metric>
PitResult pit_best(const std::vector<Signal>& refs, const std::vector<Signal>& ests, Metric&& metric) {
  const std::size_t c = refs.size();
  if (c != ests.size()) {
    throw ShapeError("pit_best: " + std::to_string(c) + " references vs " + std::to_string(ests.size()) +
                     " estimates");
  }
  if (c == 0 || c > 4) throw ShapeError("pit_best supports 1 to 4 sources");
  std::vector<std::vector<double>> score(c, std::vector<double>(c));
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j) score[i][j] = double(metric(refs[i], ests[j]));

  std::vector<std::size_t> perm(c);
  std::iota(perm.begin(), perm.end(), 0);
  PitResult best;
  bool first = true;
  do {
    double total = 0;
    for (std::size_t i = 0; i < c; ++i) total += score[i][perm[i]];
    const double mean = total / double(c);
    if (first || mean > best.mean) {
      best = {perm, mean};
      first = false;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// Mean -SI-SNR under the best assignment of estimates to references.
template <typename T>
Var<T> pit_si_snr_loss(const std::vector<Var<T>>& ests, const std::vector<Tensor<T>>& refs,
                       std::vector<std::size_t>* chosen = nullptr) {
  std::vector<Tensor<T>> est_values;
  for (const auto& e : ests) est_values.push_back(e.value());
  auto best = pit_best(refs, est_values, [](const Tensor<T>& r, const Tensor<T>& e) { return si_snr(r, e); });
  if (chosen) *chosen = best.permutation;
  Var<T> total;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    Var<T> term = si_snr_loss(ests[best.permutation[i]], refs[i]);
    total = total.valid() ? ew_add(total, term) : term;
  }
  return scale(total, T(1.0 / double(refs.size())));
}

}  // namespace iianet
