// Copyright 2026 The IIANet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// IIAC checkpoint files:
//   "IIAC" | u32 version | u64 manifest length | JSON manifest | f32 payload
// The manifest holds the model config and an ordered tensor list
// {name, shape, dtype}; the payload concatenates tensors in that order.

#pragma once

#include <string>

#include "iianet/data.hpp"
#include "iianet/model.hpp"

namespace iianet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams<float> params;
  ModelConfig config;
};

inline std::vector<char> encode_checkpoint(const ModelParams<float>& params, const ModelConfig& cfg) {
  const auto expected = param_shapes(cfg);
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t scalars = 0;
  for (const auto& [name, t] : params.tensors) {
    auto it = expected.find(name);
    if (it == expected.end()) throw ConfigConflict("parameter '" + name + "' is not part of the configured model");
    if (it->second != t.shape()) {
      throw ConfigConflict("parameter '" + name + "' has shape " + shape_str(t.shape()) + ", config expects " +
                           shape_str(it->second));
    }
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"dtype", "f32"}});
    scalars += t.size();
  }
  if (params.tensors.size() != expected.size()) throw ConfigConflict("parameter set is missing tensors for the config");
  const std::string manifest = nlohmann::json{{"config", cfg.to_json()}, {"tensors", tensors}}.dump();

  std::vector<char> buf{'I', 'I', 'A', 'C'};
  buf.reserve(16 + manifest.size() + 4 * scalars);
  io::put<std::uint32_t>(buf, kCheckpointVersion);
  io::put<std::uint64_t>(buf, manifest.size());
  buf.insert(buf.end(), manifest.begin(), manifest.end());
  for (const auto& [_, t] : params.tensors)
    for (float v : t.data()) io::put<float>(buf, v);
  return buf;
}

inline Checkpoint decode_checkpoint(const std::vector<char>& buf, const std::string& what = "checkpoint") {
  if (buf.size() < 16 || std::memcmp(buf.data(), "IIAC", 4) != 0) throw FormatError(what + ": bad magic");
  const auto version = io::get<std::uint32_t>(buf, 4, what);
  if (version != kCheckpointVersion) {
    throw FormatError(what + ": unsupported version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const auto mlen = io::get<std::uint64_t>(buf, 8, what);
  if (mlen > buf.size() - 16) throw FormatError(what + ": corrupt payload (manifest overruns file)");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(buf.begin() + 16, buf.begin() + 16 + std::ptrdiff_t(mlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": unreadable manifest: " + e.what());
  }
  Checkpoint ck;
  if (!manifest.contains("config") || !manifest.contains("tensors")) throw FormatError(what + ": incomplete manifest");
  ck.config = ModelConfig::from_json(manifest.at("config"));
  const auto expected = param_shapes(ck.config);

  std::size_t offset = 16 + std::size_t(mlen);
  try {
    for (const auto& entry : manifest.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      if (entry.at("dtype").get<std::string>() != "f32") throw FormatError(what + ": tensor '" + name + "' is not f32");
      auto it = expected.find(name);
      if (it == expected.end()) throw FormatError(what + ": unexpected tensor '" + name + "'");
      if (it->second != shape) {
        throw FormatError(what + ": tensor '" + name + "' has shape " + shape_str(shape) + ", config expects " +
                          shape_str(it->second));
      }
      const std::size_t n = shape_numel(shape);
      if (offset + 4 * n > buf.size()) throw FormatError(what + ": corrupt payload (truncated at '" + name + "')");
      std::vector<float> d(n);
      std::memcpy(d.data(), buf.data() + offset, 4 * n);
      offset += 4 * n;
      ck.params.tensors.emplace(name, Tensor<float>(shape, std::move(d)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": malformed tensor entry: " + e.what());
  } catch (const NonFiniteError&) {
    throw FormatError(what + ": non-finite parameter value");
  }
  if (offset != buf.size()) {
    throw FormatError(what + ": corrupt payload (" + std::to_string(buf.size() - offset) +
                      " trailing bytes disagree with manifest)");
  }
  if (ck.params.tensors.size() != expected.size()) throw FormatError(what + ": manifest is missing tensors");
  return ck;
}

inline void save_checkpoint(const std::string& path, const ModelParams<float>& params, const ModelConfig& cfg) {
  io::write_file(path, encode_checkpoint(params, cfg));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(io::read_file(path), "checkpoint '" + path + "'");
}

/// Fails with ConfigConflict when a user-supplied config disagrees with the
/// one stored alongside the weights.
inline void require_matching_config(const ModelConfig& stored, const ModelConfig& supplied) {
  if (stored == supplied) return;
  const auto a = stored.to_json(), b = supplied.to_json();
  std::string diffs;
  for (const auto& [key, value] : a.items()) {
    if (!b.contains(key) || b.at(key) != value) {
      diffs += (diffs.empty() ? "" : ", ") + key + " (checkpoint " + value.dump() + ", given " +
               (b.contains(key) ? b.at(key).dump() : "missing") + ")";
    }
  }
  throw ConfigConflict("config conflicts with checkpoint: " + diffs);
}

}  // namespace iianet
