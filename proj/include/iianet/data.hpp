// Copyright 2026 The IIANet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Waveform and embedding files, synthetic sources, SNR-controlled mixing and
// dynamic mixing. All randomness comes from explicit seeds.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "iianet/config.hpp"

namespace iianet {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

namespace io {

inline std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw FormatError("short write to '" + path + "'");
}

template <typename U>
void put(std::vector<char>& buf, U v) {
  const auto* p = reinterpret_cast<const char*>(&v);
  buf.insert(buf.end(), p, p + sizeof(U));
}

template <typename U>
U get(const std::vector<char>& buf, std::size_t offset, const std::string& what) {
  if (offset + sizeof(U) > buf.size()) throw FormatError(what + ": truncated");
  U v;
  std::memcpy(&v, buf.data() + offset, sizeof(U));
  return v;
}

}  // namespace io

// --------------------------------------------------------------------------
// WAV (PCM16 mono)

struct Waveform {
  Tensor<float> samples;  // [1 x T]
  int sample_rate = 0;
};

inline Waveform load_wav(const std::string& path) {
  const auto buf = io::read_file(path);
  const std::string what = "wav '" + path + "'";
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw FormatError(what + ": not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (pos + 8 <= buf.size()) {
    const std::string id(buf.data() + pos, 4);
    const auto size = io::get<std::uint32_t>(buf, pos + 4, what);
    const std::size_t body = pos + 8;
    if (body + size > buf.size()) throw FormatError(what + ": chunk '" + id + "' overruns file");
    if (id == "fmt ") {
      if (size < 16) throw FormatError(what + ": malformed fmt chunk");
      const auto format = io::get<std::uint16_t>(buf, body, what);
      channels = io::get<std::uint16_t>(buf, body + 2, what);
      rate = io::get<std::uint32_t>(buf, body + 4, what);
      bits = io::get<std::uint16_t>(buf, body + 14, what);
      if (format != 1) throw FormatError(what + ": unsupported format tag " + std::to_string(format) + " (PCM only)");
      if (channels != 1) throw FormatError(what + ": unsupported channel count " + std::to_string(channels) + " (mono only)");
      if (bits != 16) throw FormatError(what + ": unsupported bit depth " + std::to_string(bits) + " (16-bit only)");
      if (rate == 0) throw FormatError(what + ": zero sample rate");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError(what + ": data chunk before fmt chunk");
      if (size % 2 != 0) throw FormatError(what + ": odd data size");
      const std::size_t n = size / 2;
      if (n == 0) throw FormatError(what + ": no samples");
      std::vector<float> s(n);
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = float(io::get<std::int16_t>(buf, body + 2 * i, what)) / 32768.0f;
      }
      return {Tensor<float>(Shape{1, n}, std::move(s)), int(rate)};
    }
    pos = body + size + (size & 1);
  }
  throw FormatError(what + ": missing " + std::string(have_fmt ? "data" : "fmt") + " chunk");
}

/// Round half away from zero, clipped to the int16 range.
inline std::int16_t quantize_pcm16(float x) {
  const long q = std::lround(double(x) * 32768.0);
  return std::int16_t(std::clamp<long>(q, -32768, 32767));
}

inline void save_wav(const std::string& path, const Tensor<float>& wave, int sample_rate) {
  if (sample_rate <= 0) throw FormatError("save_wav: invalid sample rate");
  const std::uint32_t data_bytes = std::uint32_t(wave.size() * 2);
  std::vector<char> buf;
  buf.reserve(44 + data_bytes);
  buf.insert(buf.end(), {'R', 'I', 'F', 'F'});
  io::put<std::uint32_t>(buf, 36 + data_bytes);
  buf.insert(buf.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  io::put<std::uint32_t>(buf, 16);
  io::put<std::uint16_t>(buf, 1);
  io::put<std::uint16_t>(buf, 1);
  io::put<std::uint32_t>(buf, std::uint32_t(sample_rate));
  io::put<std::uint32_t>(buf, std::uint32_t(sample_rate) * 2);
  io::put<std::uint16_t>(buf, 2);
  io::put<std::uint16_t>(buf, 16);
  buf.insert(buf.end(), {'d', 'a', 't', 'a'});
  io::put<std::uint32_t>(buf, data_bytes);
  for (float x : wave.data()) io::put<std::int16_t>(buf, quantize_pcm16(x));
  io::write_file(path, buf);
}

// --------------------------------------------------------------------------
// IIAV embedding files

inline void save_embedding(const std::string& path, const Tensor<float>& e) {
  if (e.rank() != 2) throw ShapeError("embedding must be [N_v x T_v], got " + shape_str(e.shape()));
  std::vector<char> buf{'I', 'I', 'A', 'V'};
  io::put<std::uint32_t>(buf, std::uint32_t(e.dim(0)));
  io::put<std::uint32_t>(buf, std::uint32_t(e.dim(1)));
  for (float v : e.data()) io::put<float>(buf, v);
  io::write_file(path, buf);
}

inline Tensor<float> load_embedding(const std::string& path) {
  const auto buf = io::read_file(path);
  const std::string what = "embedding '" + path + "'";
  if (buf.size() < 12 || std::memcmp(buf.data(), "IIAV", 4) != 0) throw FormatError(what + ": bad magic");
  const auto nv = io::get<std::uint32_t>(buf, 4, what);
  const auto tv = io::get<std::uint32_t>(buf, 8, what);
  if (nv == 0 || tv == 0) throw FormatError(what + ": zero extent");
  const std::size_t n = std::size_t(nv) * tv;
  if (buf.size() != 12 + 4 * n) {
    throw FormatError(what + ": header declares " + std::to_string(nv) + "x" + std::to_string(tv) +
                      " values but payload holds " + std::to_string((buf.size() - 12) / 4));
  }
  std::vector<float> d(n);
  std::memcpy(d.data(), buf.data() + 12, 4 * n);
  for (float v : d) {
    if (!std::isfinite(v)) throw FormatError(what + ": non-finite value");
  }
  return Tensor<float>(Shape{nv, tv}, std::move(d));
}

// --------------------------------------------------------------------------
// Synthetic sources and mixing

inline double rms(std::span<const float> x) {
  return std::sqrt(dot(x, x) / double(x.size()));
}

/// n sources of `length` samples. Source k sums three sinusoids drawn from
/// its own normalized-frequency band [0.005 + k w, 0.005 + (k+1) w),
/// w = 0.445 / n, plus low-level noise, scaled to RMS 0.1.
inline std::vector<Tensor<float>> synth_sources(std::size_t n, std::size_t length, std::uint64_t seed) {
  if (n == 0) throw Error("synth_sources: n must be >= 1");
  if (length == 0) throw Error("synth_sources: length must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.01);
  const double width = 0.445 / double(n);
  std::vector<Tensor<float>> out;
  for (std::size_t k = 0; k < n; ++k) {
    const double lo = 0.005 + double(k) * width;
    std::vector<double> s(length, 0.0);
    for (int j = 0; j < 3; ++j) {
      const double f = lo + width * (0.05 + 0.9 * unit(rng));
      const double phase = 2 * std::numbers::pi * unit(rng);
      const double amp = 0.5 + 0.5 * unit(rng);
      for (std::size_t t = 0; t < length; ++t) s[t] += amp * std::sin(2 * std::numbers::pi * f * double(t) + phase);
    }
    for (auto& v : s) v += noise(rng);
    double e = 0;
    for (double v : s) e += v * v;
    const double g = 0.1 / std::sqrt(e / double(length));
    std::vector<float> f(length);
    for (std::size_t t = 0; t < length; ++t) f[t] = float(s[t] * g);
    out.emplace_back(Shape{1, length}, std::move(f));
  }
  return out;
}

struct Mixture {
  Tensor<float> mixture;
  Tensor<float> scaled_interference;
  double gain = 1;
};

/// mixture = target + g * sum(interferers), g chosen so the target-to-
/// interference ratio equals snr_db.
inline Mixture mix_at_snr(const Tensor<float>& target, const std::vector<Tensor<float>>& interferers,
                          double snr_db) {
  if (interferers.empty()) throw Error("mix_at_snr: no interferers");
  std::vector<double> sum(target.size(), 0.0);
  for (const auto& i : interferers) {
    if (i.size() != target.size()) throw ShapeError("mix_at_snr: interferer length differs from target");
    for (std::size_t t = 0; t < sum.size(); ++t) sum[t] += i[t];
  }
  std::vector<float> interf(sum.begin(), sum.end());
  const double pt = dot(target.data(), target.data());
  const double pi = dot(std::span<const float>(interf), std::span<const float>(interf));
  if (pt == 0.0) throw Error("mix_at_snr: target has zero power");
  if (pi == 0.0) throw Error("mix_at_snr: interference has zero power");
  const double g = std::sqrt(pt / (pi * std::pow(10.0, snr_db / 10.0)));
  Mixture m;
  m.gain = g;
  std::vector<float> scaled(interf.size()), mix(interf.size());
  for (std::size_t t = 0; t < interf.size(); ++t) {
    scaled[t] = float(g * double(interf[t]));
    mix[t] = target[t] + scaled[t];
  }
  m.scaled_interference = Tensor<float>(target.shape(), std::move(scaled));
  m.mixture = Tensor<float>(target.shape(), std::move(mix));
  return m;
}

struct MixtureSpec {
  std::vector<std::size_t> source_indices;  // into the pool; [0] is the target
  std::vector<Tensor<float>> sources;       // references: target, scaled interferer
  std::vector<double> gains;                // applied to each pool source
  double target_snr_db = 0;
  std::uint64_t seed = 0;
  Tensor<float> mixture;
};

/// Two distinct pool sources per item at an SNR uniform in [-5, 5] dB. No
/// unordered pair repeats within a batch while unused pairs remain.
inline std::vector<MixtureSpec> dynamic_mix_batch(const std::vector<Tensor<float>>& pool, std::size_t batch,
                                                  std::mt19937_64& rng) {
  if (pool.size() < 2) throw Error("dynamic_mix_batch: pool needs at least 2 sources");
  const std::size_t pairs = pool.size() * (pool.size() - 1) / 2;
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::uniform_real_distribution<double> snr(-5.0, 5.0);
  std::set<std::pair<std::size_t, std::size_t>> used;
  std::vector<MixtureSpec> out;
  for (std::size_t b = 0; b < batch; ++b) {
    if (used.size() == pairs) used.clear();
    std::size_t a, c;
    do {
      a = pick(rng);
      c = pick(rng);
    } while (a == c || used.count({std::min(a, c), std::max(a, c)}));
    used.insert({std::min(a, c), std::max(a, c)});
    MixtureSpec spec;
    spec.seed = rng();
    spec.target_snr_db = snr(rng);
    spec.source_indices = {a, c};
    auto m = mix_at_snr(pool[a], {pool[c]}, spec.target_snr_db);
    spec.gains = {1.0, m.gain};
    spec.sources = {pool[a], m.scaled_interference};
    spec.mixture = std::move(m.mixture);
    out.push_back(std::move(spec));
  }
  return out;
}

/// Stand-in visual features [1 x T_v]: framewise RMS of the target divided
/// by its overall RMS.
inline Tensor<float> envelope_embedding(const Tensor<float>& target, int sample_rate) {
  const std::size_t n = target.size();
  const std::size_t tv = video_frames_for(n, sample_rate);
  if (tv == 0) throw ShapeError("target too short for one visual frame");
  const double overall = rms(target.data());
  if (overall == 0.0) throw Error("envelope_embedding: silent target");
  std::vector<float> e(tv);
  for (std::size_t v = 0; v < tv; ++v) {
    const std::size_t b = v * n / tv, end = (v + 1) * n / tv;
    e[v] = float(rms(target.data().subspan(b, end - b)) / overall);
  }
  return Tensor<float>(Shape{1, tv}, std::move(e));
}

}  // namespace iianet
