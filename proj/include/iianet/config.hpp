// Copyright 2026 The IIANet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "iianet/attention.hpp"

namespace iianet {

/// Frame rate of visual embeddings relative to the audio clock.
inline constexpr double kVideoFps = 25.0;

/// Visual frames covering `samples` audio samples (rounded down).
inline std::size_t video_frames_for(std::size_t samples, int sample_rate) {
  return std::size_t(double(samples) * kVideoFps / double(sample_rate));
}

/// Kernel size and grouping of one family of convolutions. Depthwise convs
/// keep the channel count and filter each channel independently.
struct ConvSpec {
  std::size_t kernel = 1;
  bool depthwise = false;

  std::string str() const { return (depthwise ? "dw:" : "full:") + std::to_string(kernel); }

  static ConvSpec parse(const std::string& text) {
    auto colon = text.find(':');
    if (colon == std::string::npos) throw ConfigError("conv spec '" + text + "' is not 'full:K' or 'dw:K'");
    std::string kind = text.substr(0, colon);
    ConvSpec s;
    if (kind == "dw") {
      s.depthwise = true;
    } else if (kind != "full") {
      throw ConfigError("conv spec kind '" + kind + "' must be 'full' or 'dw'");
    }
    try {
      s.kernel = std::stoul(text.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("conv spec '" + text + "' has no kernel size");
    }
    if (s.kernel == 0 || s.kernel % 2 == 0) {
      throw ConfigError("conv spec '" + text + "': kernel must be odd and positive");
    }
    return s;
  }

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

/// Conv layout of every convolution family in the separation network.
struct ConvPlan {
  ConvSpec bottom_up{5, false};
  ConvSpec ffn_mid{5, false};
  ConvSpec global_audio{1, false};
  ConvSpec global_video{1, false};
  ConvSpec local_audio{1, false};
  ConvSpec local_video{1, false};
  ConvSpec inter_t{1, false};
  ConvSpec inter_m{1, false};
  ConvSpec inter_b{1, false};

  template <typename F>
  void for_each(F&& f) {
    f("bottom_up", bottom_up);
    f("ffn_mid", ffn_mid);
    f("global_audio", global_audio);
    f("global_video", global_video);
    f("local_audio", local_audio);
    f("local_video", local_video);
    f("inter_t", inter_t);
    f("inter_m", inter_m);
    f("inter_b", inter_b);
  }
  template <typename F>
  void for_each(F&& f) const {
    const_cast<ConvPlan*>(this)->for_each(
        [&](const char* name, ConvSpec& s) { f(name, static_cast<const ConvSpec&>(s)); });
  }

  friend bool operator==(const ConvPlan&, const ConvPlan&) = default;
};

enum class SeparationMode { kAudioVisual, kAudioOnly };

/// Every architectural hyperparameter of the model.
struct ModelConfig {
  int sample_rate = 8000;
  std::size_t enc_kernel = 4;
  std::size_t enc_stride = 2;
  std::size_t n_audio = 16;   // N_a
  std::size_t n_video = 16;   // N_v
  std::size_t depth = 3;      // D
  std::size_t n_fusion_cycles = 2;  // N_F
  std::size_t n_audio_cycles = 2;   // N_S
  IntraVariant intra_variant = IntraVariant::kPhi;
  bool inter_t_enabled = true;
  bool inter_m_enabled = true;
  bool inter_b_enabled = true;
  double dropout_p = 0.0;
  std::array<std::size_t, 3> ffn_channels{16, 32, 16};
  // Raw visual feature channels fed through a trainable two-conv stub;
  // 0 means embeddings already carry N_v channels.
  std::size_t video_in_channels = 1;
  SeparationMode mode = SeparationMode::kAudioVisual;
  std::size_t n_sources = 2;  // audio-only mode: masks estimated per mixture
  ConvPlan conv;

  /// Small configuration for tests and toy training.
  static ModelConfig desk() { return ModelConfig{}; }

  /// Published model size: 16 kHz, kernel 16 / stride 8, 512 channels, D=4,
  /// N_F=4, N_S=12, FFN (512, 1024, 512), dropout 0.1, with the separable
  /// conv routing that reproduces the reported parameter and MAC budget.
  static ModelConfig paper() {
    ModelConfig c;
    c.sample_rate = 16000;
    c.enc_kernel = 16;
    c.enc_stride = 8;
    c.n_audio = 512;
    c.n_video = 512;
    c.depth = 4;
    c.n_fusion_cycles = 4;
    c.n_audio_cycles = 12;
    c.dropout_p = 0.1;
    c.ffn_channels = {512, 1024, 512};
    c.video_in_channels = 0;
    c.conv.bottom_up = {5, true};
    c.conv.ffn_mid = {5, true};
    c.conv.global_audio = {5, true};
    c.conv.global_video = {5, true};
    c.conv.local_audio = {1, false};
    c.conv.local_video = {5, true};
    c.conv.inter_t = {5, true};
    c.conv.inter_m = {5, true};
    c.conv.inter_b = {5, true};
    return c;
  }

  /// Paper configuration with half the audio-only cycles.
  static ModelConfig paper_fast() {
    auto c = paper();
    c.n_audio_cycles = 6;
    return c;
  }

  bool audio_only() const { return mode == SeparationMode::kAudioOnly; }
  std::size_t frame_multiple() const { return std::size_t{1} << depth; }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (sample_rate <= 0) fail("sample_rate must be positive");
    if (enc_stride == 0 || enc_kernel != 2 * enc_stride) fail("enc_kernel must equal 2 * enc_stride");
    if (n_audio == 0 || n_video == 0) fail("channel counts must be positive");
    if (depth < 1 || depth > 12) fail("depth must lie in [1, 12]");
    if (n_fusion_cycles < 1) fail("n_fusion_cycles must be >= 1");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) fail("dropout_p must lie in [0, 1)");
    if (ffn_channels[0] != n_audio || ffn_channels[2] != n_audio || ffn_channels[1] == 0) {
      fail("ffn_channels must be (N_a, hidden, N_a)");
    }
    if (audio_only() && (n_sources < 1 || n_sources > 4)) fail("n_sources must lie in [1, 4]");
    auto check_dw = [&](const char* name, const ConvSpec& s, bool same_width) {
      if (s.kernel == 0 || s.kernel % 2 == 0) fail(std::string("conv_") + name + " kernel must be odd");
      if (s.depthwise && !same_width) {
        fail(std::string("conv_") + name + " cannot be depthwise when it changes the channel count");
      }
    };
    const bool same = n_audio == n_video;
    conv.for_each([&](const char* name, const ConvSpec& s) {
      std::string n = name;
      bool cross = n == "inter_t" || n == "inter_m" || n == "inter_b";
      check_dw(name, s, cross ? same : true);
    });
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["sample_rate"] = sample_rate;
    j["enc_kernel"] = enc_kernel;
    j["enc_stride"] = enc_stride;
    j["n_audio_channels"] = n_audio;
    j["n_video_channels"] = n_video;
    j["depth"] = depth;
    j["n_fusion_cycles"] = n_fusion_cycles;
    j["n_audio_cycles"] = n_audio_cycles;
    j["intra_variant"] = intra_variant == IntraVariant::kPhi ? "phi" : "phi_prime";
    j["inter_t_enabled"] = inter_t_enabled;
    j["inter_m_enabled"] = inter_m_enabled;
    j["inter_b_enabled"] = inter_b_enabled;
    j["dropout_p"] = dropout_p;
    j["ffn_channels"] = ffn_channels;
    j["video_in_channels"] = video_in_channels;
    j["mode"] = audio_only() ? "audio_only" : "av";
    j["n_sources"] = n_sources;
    conv.for_each([&](const char* name, const ConvSpec& s) { j[std::string("conv_") + name] = s.str(); });
    return j;
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
      c.sample_rate = j.at("sample_rate").get<int>();
      c.enc_kernel = j.at("enc_kernel").get<std::size_t>();
      c.enc_stride = j.at("enc_stride").get<std::size_t>();
      c.n_audio = j.at("n_audio_channels").get<std::size_t>();
      c.n_video = j.at("n_video_channels").get<std::size_t>();
      c.depth = j.at("depth").get<std::size_t>();
      c.n_fusion_cycles = j.at("n_fusion_cycles").get<std::size_t>();
      c.n_audio_cycles = j.at("n_audio_cycles").get<std::size_t>();
      c.intra_variant = parse_variant(j.at("intra_variant").get<std::string>());
      c.inter_t_enabled = j.at("inter_t_enabled").get<bool>();
      c.inter_m_enabled = j.at("inter_m_enabled").get<bool>();
      c.inter_b_enabled = j.at("inter_b_enabled").get<bool>();
      c.dropout_p = j.at("dropout_p").get<double>();
      c.ffn_channels = j.at("ffn_channels").get<std::array<std::size_t, 3>>();
      c.video_in_channels = j.at("video_in_channels").get<std::size_t>();
      c.mode = parse_mode(j.at("mode").get<std::string>());
      c.n_sources = j.at("n_sources").get<std::size_t>();
      c.conv.for_each([&](const char* name, ConvSpec& s) {
        s = ConvSpec::parse(j.at(std::string("conv_") + name).get<std::string>());
      });
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("malformed model config: ") + e.what());
    }
    c.validate();
    return c;
  }

  static IntraVariant parse_variant(const std::string& s) {
    if (s == "phi") return IntraVariant::kPhi;
    if (s == "phi_prime") return IntraVariant::kPhiPrime;
    throw ConfigError("intra_variant must be 'phi' or 'phi_prime', got '" + s + "'");
  }

  static SeparationMode parse_mode(const std::string& s) {
    if (s == "av") return SeparationMode::kAudioVisual;
    if (s == "audio_only") return SeparationMode::kAudioOnly;
    throw ConfigError("mode must be 'av' or 'audio_only', got '" + s + "'");
  }

  FusionOptions fusion_options(bool training = false, std::mt19937_64* rng = nullptr) const {
    FusionOptions o;
    o.variant = intra_variant;
    o.inter_t = inter_t_enabled;
    o.inter_m = inter_m_enabled;
    o.inter_b = inter_b_enabled;
    o.dropout_p = dropout_p;
    o.training = training;
    o.rng = rng;
    return o;
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
  double lr = 0.001;
  std::size_t steps = 500;
  std::size_t steps_per_epoch = 25;
  std::size_t plateau_patience = 15;
  std::size_t early_stop_patience = 30;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
};

struct DataConfig {
  double duration_s = 0.5;
  double snr_db = 0.0;
  bool dynamic_mix = false;
  std::size_t pool_size = 8;
  std::uint64_t seed = 7;
};

/// Flat `key = value` run configuration. Unknown keys are rejected.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;

  struct Key {
    std::string name;
    std::string help;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
  };

  static const std::vector<Key>& schema() {
    static const std::vector<Key> keys = build_schema();
    return keys;
  }

  void set(const std::string& key, const std::string& value) {
    for (const auto& k : schema()) {
      if (k.name == key) {
        k.set(*this, value);
        return;
      }
    }
    throw ConfigError("unknown config key '" + key + "'");
  }

  static RunConfig parse(std::istream& in) {
    RunConfig rc;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
      }
      std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      try {
        rc.set(key, value);
      } catch (const ConfigError& e) {
        throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    rc.model.validate();
    return rc;
  }

  static RunConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open config file " + path);
    return parse(in);
  }

  std::string to_text() const {
    std::ostringstream os;
    for (const auto& k : schema()) os << k.name << " = " << k.get(*this) << "\n";
    return os.str();
  }

 private:
  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  static std::uint64_t to_uint(const std::string& v) {
    std::size_t pos = 0;
    unsigned long long x = 0;
    try {
      x = std::stoull(v, &pos);
    } catch (const std::exception&) {
      throw ConfigError("expected a non-negative integer, got '" + v + "'");
    }
    if (pos != v.size() || v.front() == '-') throw ConfigError("expected a non-negative integer, got '" + v + "'");
    return x;
  }

  static double to_real(const std::string& v) {
    std::size_t pos = 0;
    double x = 0;
    try {
      x = std::stod(v, &pos);
    } catch (const std::exception&) {
      throw ConfigError("expected a number, got '" + v + "'");
    }
    if (pos != v.size()) throw ConfigError("expected a number, got '" + v + "'");
    return x;
  }

  static bool to_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("expected true/false, got '" + v + "'");
  }

  static std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  }

  static std::vector<Key> build_schema() {
    std::vector<Key> k;
#define IIANET_UINT(NAME, FIELD, HELP)                                            \
  k.push_back({NAME, HELP,                                                        \
               [](RunConfig& r, const std::string& v) { r.FIELD = to_uint(v); }, \
               [](const RunConfig& r) { return std::to_string(r.FIELD); }})
#define IIANET_REAL(NAME, FIELD, HELP)                                            \
  k.push_back({NAME, HELP,                                                        \
               [](RunConfig& r, const std::string& v) { r.FIELD = to_real(v); }, \
               [](const RunConfig& r) { return fmt(r.FIELD); }})
#define IIANET_BOOL(NAME, FIELD, HELP)                                            \
  k.push_back({NAME, HELP,                                                        \
               [](RunConfig& r, const std::string& v) { r.FIELD = to_bool(v); }, \
               [](const RunConfig& r) { return std::string(r.FIELD ? "true" : "false"); }})
    k.push_back({"sample_rate", "audio sample rate in Hz",
                 [](RunConfig& r, const std::string& v) { r.model.sample_rate = int(to_uint(v)); },
                 [](const RunConfig& r) { return std::to_string(r.model.sample_rate); }});
    IIANET_UINT("enc_kernel", model.enc_kernel, "audio encoder/decoder kernel");
    IIANET_UINT("enc_stride", model.enc_stride, "audio encoder/decoder stride");
    IIANET_UINT("n_audio_channels", model.n_audio, "audio embedding channels N_a");
    IIANET_UINT("n_video_channels", model.n_video, "video embedding channels N_v");
    IIANET_UINT("depth", model.depth, "number of down-sampling layers D");
    IIANET_UINT("n_fusion_cycles", model.n_fusion_cycles, "audio-visual cycles N_F");
    IIANET_UINT("n_audio_cycles", model.n_audio_cycles, "audio-only refinement cycles N_S");
    k.push_back({"intra_variant", "global IntraA form: phi or phi_prime",
                 [](RunConfig& r, const std::string& v) { r.model.intra_variant = ModelConfig::parse_variant(v); },
                 [](const RunConfig& r) {
                   return std::string(r.model.intra_variant == IntraVariant::kPhi ? "phi" : "phi_prime");
                 }});
    IIANET_BOOL("inter_t_enabled", model.inter_t_enabled, "cross-modal gate in InterA-T");
    IIANET_BOOL("inter_m_enabled", model.inter_m_enabled, "InterA-M blocks");
    IIANET_BOOL("inter_b_enabled", model.inter_b_enabled, "InterA-B block");
    IIANET_REAL("dropout_p", model.dropout_p, "dropout probability");
    k.push_back({"ffn_channels", "FFN widths N_a,hidden,N_a",
                 [](RunConfig& r, const std::string& v) {
                   std::array<std::size_t, 3> a{};
                   std::stringstream ss(v);
                   std::string part;
                   std::size_t n = 0;
                   while (std::getline(ss, part, ',')) {
                     if (n >= 3) throw ConfigError("ffn_channels takes three values");
                     a[n++] = to_uint(trim(part));
                   }
                   if (n != 3) throw ConfigError("ffn_channels takes three values");
                   r.model.ffn_channels = a;
                 },
                 [](const RunConfig& r) {
                   const auto& a = r.model.ffn_channels;
                   return std::to_string(a[0]) + "," + std::to_string(a[1]) + "," + std::to_string(a[2]);
                 }});
    IIANET_UINT("video_in_channels", model.video_in_channels, "raw visual feature channels (0: no stub)");
    k.push_back({"mode", "av or audio_only",
                 [](RunConfig& r, const std::string& v) { r.model.mode = ModelConfig::parse_mode(v); },
                 [](const RunConfig& r) { return std::string(r.model.audio_only() ? "audio_only" : "av"); }});
    IIANET_UINT("n_sources", model.n_sources, "sources estimated in audio_only mode");
    ConvPlan{}.for_each([&](const char* name, const ConvSpec&) {
      std::string n = name;
      k.push_back({"conv_" + n, "conv layout full:K or dw:K",
                   [n](RunConfig& r, const std::string& v) {
                     r.model.conv.for_each([&](const char* nm, ConvSpec& s) {
                       if (n == nm) s = ConvSpec::parse(v);
                     });
                   },
                   [n](const RunConfig& r) {
                     std::string out;
                     r.model.conv.for_each([&](const char* nm, const ConvSpec& s) {
                       if (n == nm) out = s.str();
                     });
                     return out;
                   }});
    });
    IIANET_REAL("lr", train.lr, "Adam learning rate");
    IIANET_UINT("steps", train.steps, "optimisation steps");
    IIANET_UINT("steps_per_epoch", train.steps_per_epoch, "steps between validations");
    IIANET_UINT("plateau_patience", train.plateau_patience, "epochs without improvement before halving lr");
    IIANET_UINT("early_stop_patience", train.early_stop_patience, "epochs without improvement before stopping");
    IIANET_REAL("clip_norm", train.clip_norm, "global gradient L2 clip");
    IIANET_UINT("seed", train.seed, "initialisation / dropout seed");
    IIANET_REAL("duration_s", data.duration_s, "synthetic clip length in seconds");
    IIANET_REAL("snr_db", data.snr_db, "target-to-interferer SNR of the fixed mixture");
    IIANET_BOOL("dynamic_mix", data.dynamic_mix, "resample mixtures every step");
    IIANET_UINT("pool_size", data.pool_size, "synthetic source pool for dynamic mixing");
    IIANET_UINT("data_seed", data.seed, "synthetic data seed");
#undef IIANET_UINT
#undef IIANET_REAL
#undef IIANET_BOOL
    return k;
  }
};

}  // namespace iianet
