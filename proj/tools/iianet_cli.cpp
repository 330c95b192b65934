// Copyright 2026 The IIANet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// iianet: separate, train-toy, eval, bench, gradcheck.
//
// Exit codes: 0 success, 1 partial failure or aborted run, 2 usage / I/O /
// format error, 3 config conflict.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "iianet/iianet.hpp"

namespace {

using namespace iianet;

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitUsage = 2;
constexpr int kExitConflict = 3;

// Fast inference preset: fewer audio-only refinement cycles.
constexpr std::size_t kFastAudioCycles = 6;

struct SeparateArgs {
  std::string mixture, checkpoint, out, config;
  std::vector<std::string> embeddings;
  bool fast = false;
};

struct TrainArgs {
  std::string config, out, history, export_dir;
  bool audio_only = false, dynamic_mix = false;
};

struct EvalArgs {
  std::string pairs, checkpoint, out;
  bool fast = false;
};

struct BenchArgs {
  std::string config, preset = "desk";
  double seconds = 1.0;
  bool fast = false;
};

Checkpoint load_for_inference(const std::string& path, const std::string& config_path, bool fast) {
  Checkpoint ck = load_checkpoint(path);
  if (!config_path.empty()) require_matching_config(ck.config, RunConfig::load(config_path).model);
  if (fast) ck.config.n_audio_cycles = kFastAudioCycles;
  return ck;
}

int cmd_separate(const SeparateArgs& a) {
  Checkpoint ck = load_for_inference(a.checkpoint, a.config, a.fast);
  Waveform mix = load_wav(a.mixture);
  if (ck.config.audio_only()) {
    if (!a.embeddings.empty()) std::cerr << "note: audio-only checkpoint ignores --embedding\n";
    auto outs = separate_sources(mix.samples, mix.sample_rate, ck.config, ck.params);
    for (std::size_t k = 0; k < outs.size(); ++k) {
      save_wav(a.out + "." + std::to_string(k) + ".wav", outs[k].waveform, mix.sample_rate);
    }
    std::cout << "wrote " << outs.size() << " source(s)\n";
    return kExitOk;
  }
  if (a.embeddings.empty()) throw FormatError("audio-visual separation needs at least one --embedding");
  for (std::size_t k = 0; k < a.embeddings.size(); ++k) {
    auto out = separate(mix.samples, mix.sample_rate, load_embedding(a.embeddings[k]), ck.config, ck.params);
    save_wav(a.out + "." + std::to_string(k) + ".wav", out.waveform, mix.sample_rate);
  }
  std::cout << "wrote " << a.embeddings.size() << " speaker(s)\n";
  return kExitOk;
}

int cmd_train_toy(const TrainArgs& a) {
  RunConfig rc = a.config.empty() ? RunConfig{} : RunConfig::load(a.config);
  if (a.audio_only) rc.model.mode = SeparationMode::kAudioOnly;
  if (a.dynamic_mix) rc.data.dynamic_mix = true;
  rc.model.validate();

  const TrainExample ex = toy_mixture(rc.model, rc.data);
  const auto t0 = std::chrono::steady_clock::now();
  auto result = train_loop(rc.model, rc.train, init_params<float>(rc.model, rc.train.seed), toy_source(rc.model, rc.data),
                           {ex}, [](const HistoryRow& r) {
                             std::cout << "epoch " << r.epoch << "  loss " << std::fixed << std::setprecision(3)
                                       << r.train_loss << "  val SI-SNRi " << r.val_si_snri << " dB  lr "
                                       << std::defaultfloat << r.lr << "\n";
                           });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save_checkpoint(a.out, result.params, rc.model);
  write_history_csv(a.history.empty() ? a.out + ".history.csv" : a.history, result.history);

  if (!a.export_dir.empty()) {
    std::filesystem::create_directories(a.export_dir);
    const auto dir = std::filesystem::path(a.export_dir);
    save_wav((dir / "mixture.wav").string(), ex.mixture, rc.model.sample_rate);
    for (std::size_t k = 0; k < ex.references.size(); ++k) {
      save_wav((dir / ("reference." + std::to_string(k) + ".wav")).string(), ex.references[k], rc.model.sample_rate);
    }
    if (!rc.model.audio_only()) save_embedding((dir / "embedding.iiav").string(), ex.video);
  }

  const auto score = score_example(rc.model, result.params, ex);
  std::cout << "steps " << result.steps_run << (result.early_stopped ? " (early stop)" : "") << "  time "
            << std::fixed << std::setprecision(1) << secs << " s\n"
            << "final SI-SNRi " << std::setprecision(2) << score.si_snri << " dB\n";
  return kExitOk;
}

std::vector<std::vector<std::string>> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw FormatError("manifest '" + path + "' is empty");
  auto split = [](const std::string& s) {
    std::vector<std::string> cols;
    std::stringstream ss(s);
    std::string c;
    while (std::getline(ss, c, ',')) {
      while (!c.empty() && (c.back() == '\r' || c.back() == ' ')) c.pop_back();
      while (!c.empty() && c.front() == ' ') c.erase(c.begin());
      cols.push_back(c);
    }
    return cols;
  };
  auto header = split(line);
  if (header.size() < 3 || header[0] != "mixture" || header[1] != "reference" || header[2] != "embedding" ||
      (header.size() == 4 && header[3] != "estimate") || header.size() > 4) {
    throw FormatError("manifest header must be 'mixture,reference,embedding[,estimate]'");
  }
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
    auto cols = split(line);
    cols.resize(4);
    rows.push_back(cols);
  }
  if (rows.empty()) throw FormatError("manifest '" + path + "' has no rows");
  return rows;
}

int cmd_eval(const EvalArgs& a) {
  const auto rows = read_manifest(a.pairs);
  std::optional<Checkpoint> ck;
  auto model = [&]() -> Checkpoint& {
    if (!ck) {
      if (a.checkpoint.empty()) throw FormatError("row has no estimate and no --checkpoint was given");
      ck = load_for_inference(a.checkpoint, "", a.fast);
    }
    return *ck;
  };
  if (!a.checkpoint.empty()) model();

  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out);
    if (!file) throw FormatError("cannot write '" + a.out + "'");
  }
  std::ostream& out = a.out.empty() ? std::cout : file;
  out << "path,si_snri,sdri\n" << std::setprecision(17);
  double sum_si = 0, sum_sd = 0;
  std::size_t ok = 0, failed = 0;
  for (const auto& r : rows) {
    try {
      Waveform mix = load_wav(r[0]);
      Waveform ref = load_wav(r[1]);
      Tensor<float> est;
      if (!r[3].empty()) {
        est = load_wav(r[3]).samples;
      } else if (model().config.audio_only()) {
        auto outs = separate_sources(mix.samples, mix.sample_rate, model().config, model().params);
        double best = -kInfiniteDb;
        for (auto& o : outs) {
          const double s = si_snr(ref.samples, o.waveform);
          if (s > best || est.empty()) best = s, est = o.waveform;
        }
      } else {
        est = separate(mix.samples, mix.sample_rate, load_embedding(r[2]), model().config, model().params).waveform;
      }
      if (ref.samples.size() != mix.samples.size() || est.size() != mix.samples.size()) {
        throw ShapeError("mixture, reference and estimate lengths differ");
      }
      const double si = clamp_for_display(si_snri(mix.samples, ref.samples, est));
      const double sd = clamp_for_display(sdri(mix.samples, ref.samples, est));
      out << r[0] << ',' << si << ',' << sd << '\n';
      sum_si += si;
      sum_sd += sd;
      ++ok;
    } catch (const ConfigConflict&) {
      throw;
    } catch (const Error& e) {
      std::cerr << "row '" << r[0] << "': " << e.what() << "\n";
      ++failed;
    }
  }
  if (ok > 0) out << "mean," << sum_si / double(ok) << ',' << sum_sd / double(ok) << '\n';
  return failed ? kExitPartial : kExitOk;
}

int cmd_bench(const BenchArgs& a) {
  ModelConfig cfg;
  if (!a.config.empty()) {
    cfg = RunConfig::load(a.config).model;
  } else if (a.preset == "paper") {
    cfg = ModelConfig::paper();
  } else if (a.preset != "desk") {
    throw ConfigError("unknown preset '" + a.preset + "' (desk or paper)");
  }
  if (a.fast) cfg.n_audio_cycles = kFastAudioCycles;
  const auto r = count_costs(cfg, a.seconds);
  std::cout << "params " << r.params << "\n"
            << "macs " << r.macs << "\n"
            << "audio_seconds " << a.seconds << "\n"
            << "n_fusion_cycles " << cfg.n_fusion_cycles << "\n"
            << "n_audio_cycles " << cfg.n_audio_cycles << "\n"
            << "macs_per_av_cycle " << r.av_cycle_macs << "\n"
            << "macs_per_audio_cycle " << r.audio_cycle_macs << "\n";
  for (const auto& [k, v] : r.blocks) std::cout << "block " << k << " " << v << "\n";
  return kExitOk;
}

int cmd_gradcheck() {
  bool all = true;
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& c : gradcheck_suite()) {
    const auto r = run_gradcheck(c);
    all = all && r.passed;
    std::printf("%-4s %-28s max_rel_err %.3e  (%zu entries, worst %s)\n", r.passed ? "ok" : "FAIL", r.name.c_str(),
                r.max_rel_error, r.entries, r.worst_input.c_str());
  }
  std::printf("%s in %.2f s\n", all ? "all passed" : "FAILURES",
              std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  return all ? kExitOk : kExitPartial;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-visual speech separation with inter- and intra-modal attention"};
  app.require_subcommand(1);

  SeparateArgs sep;
  auto* s = app.add_subcommand("separate", "Extract one speaker per visual embedding");
  s->add_option("--mixture", sep.mixture, "Mixture WAV (PCM16 mono)")->required();
  s->add_option("--embedding", sep.embeddings, "IIAV embedding file, repeatable");
  s->add_option("--checkpoint", sep.checkpoint, "IIAC checkpoint")->required();
  s->add_option("--out", sep.out, "Output prefix; writes PREFIX.k.wav")->required();
  s->add_option("--config", sep.config, "Run config that must agree with the checkpoint");
  s->add_flag("--fast", sep.fast, "Use 6 audio-only refinement cycles");

  TrainArgs tr;
  auto* t = app.add_subcommand("train-toy", "Train on a synthetic mixture");
  t->add_option("--config", tr.config, "Run config file (key = value)");
  t->add_option("--out", tr.out, "Checkpoint to write")->required();
  t->add_option("--history", tr.history, "Loss history CSV (default OUT.history.csv)");
  t->add_option("--export", tr.export_dir, "Directory for the training mixture, references and embedding");
  t->add_flag("--audio-only", tr.audio_only, "Audio-only model trained with PIT");
  t->add_flag("--dynamic-mix", tr.dynamic_mix, "Fresh random mixtures each step");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score a manifest of mixtures");
  e->add_option("--pairs", ev.pairs, "CSV manifest: mixture,reference,embedding[,estimate]")->required();
  e->add_option("--checkpoint", ev.checkpoint, "IIAC checkpoint");
  e->add_option("--out", ev.out, "Report CSV (default stdout)");
  e->add_flag("--fast", ev.fast, "Use 6 audio-only refinement cycles");

  BenchArgs be;
  auto* b = app.add_subcommand("bench", "Report parameter and MAC counts");
  b->add_option("--config", be.config, "Run config file");
  b->add_option("--preset", be.preset, "desk or paper (when no --config)");
  b->add_option("--audio-seconds", be.seconds, "Input duration")->check(CLI::PositiveNumber);
  b->add_flag("--fast", be.fast, "Use 6 audio-only refinement cycles");

  auto* g = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable block");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*s) return cmd_separate(sep);
    if (*t) return cmd_train_toy(tr);
    if (*e) return cmd_eval(ev);
    if (*b) return cmd_bench(be);
    if (*g) return cmd_gradcheck();
  } catch (const ConfigConflict& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitConflict;
  } catch (const NonFiniteError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitPartial;
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
