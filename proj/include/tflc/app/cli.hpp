#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tflc/app/image.hpp"
#include "tflc/app/methods.hpp"
#include "tflc/common/parallel.hpp"
#include "tflc/evaluation/metrics.hpp"
#include "tflc/neural/train.hpp"
#include "tflc/scene/corpus.hpp"
#include "tflc/spectral/stft.hpp"
#include "tflc/spectral/wav.hpp"

namespace tflc::app {

namespace fs = std::filesystem;

/// Default corpus root for gen-corpus --out and the --corpus options.
inline constexpr const char* kCorpusEnv = "TFLC_CORPUS";

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2 };

struct GenArgs {
  std::string out;
  std::size_t count = 10;
  std::vector<int> interferers{2};
  std::uint64_t seed = 0;
  double duration = 6.0;
  std::string source_pool;
  std::string id_prefix = "mix";
};

struct RunArgs {
  std::string corpus, out, method, checkpoint, rtf = "oracle";
  int iters = 5;
  std::vector<double> nulls;
  bool save_weights = false;
};

struct TrainArgs {
  std::string corpus, val_corpus, out, init, precision = "float", entropy_on = "both";
  std::size_t epochs = 20, batch = 4, beams = 2, channels = 32, groups = 4, window = 1024, hop = 256, decay_every = 10;
  double lr = 6e-4, decay = 0.8, lambda = 0.05;
  std::uint64_t seed = 0;
};

struct EvalArgs {
  std::string corpus, outputs, csv, json;
  std::vector<std::string> methods;
};

struct PlotArgs {
  std::string input, out;
  std::size_t beam = 0, channel = 0, window = 1024, hop = 256;
  double floor_db = -60.0;
};

namespace detail {

inline void write_bytes(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
}

inline std::string require_corpus(const std::string& c) {
  if (c.empty()) throw UsageError(std::string("no corpus given (use --corpus or set ") + kCorpusEnv + ")");
  return c;
}

inline int cmd_gen_corpus(const GenArgs& a, unsigned jobs, std::ostream& out) {
  if (a.out.empty()) throw UsageError(std::string("no output directory (use --out or set ") + kCorpusEnv + ")");
  scene::CorpusConfig cfg;
  cfg.count = a.count;
  cfg.split_ratio.clear();
  for (int n : a.interferers) cfg.split_ratio[n] = 1.0;
  cfg.seed = a.seed;
  cfg.duration_s = a.duration;
  if (!a.source_pool.empty()) cfg.source_pool = a.source_pool;
  cfg.id_prefix = a.id_prefix;
  cfg.jobs = jobs;
  out << nlohmann::json{{"command", "gen-corpus"},   {"out", a.out},           {"count", a.count},
                        {"interferers", a.interferers}, {"seed", a.seed},       {"duration_s", a.duration},
                        {"source_pool", a.source_pool}, {"id_prefix", a.id_prefix}, {"jobs", jobs}}
             .dump()
      << "\n";
  const auto m = scene::generate_corpus(cfg, a.out);
  out << "wrote " << m.entries.size() << " mixtures to " << a.out
      << (m.synthetic_sources ? " (synthetic speech-like sources)" : "") << "\n";
  return kOk;
}

inline int cmd_run(const RunArgs& a, unsigned jobs, std::ostream& out, std::ostream& err) {
  const bool nn = a.method == "nn-tflc-mpdr";
  if (nn && a.checkpoint.empty()) throw UsageError("--method nn-tflc-mpdr requires --checkpoint");
  if (a.iters < 1) throw UsageError("--iters must be at least 1");
  const auto m = scene::Manifest::load(require_corpus(a.corpus));
  out << nlohmann::json{{"command", "run"},       {"corpus", a.corpus}, {"method", a.method},
                        {"iters", a.iters},       {"nulls", a.nulls},   {"checkpoint", a.checkpoint},
                        {"rtf", a.rtf},           {"out", a.out},       {"save_weights", a.save_weights},
                        {"jobs", jobs}}
             .dump()
      << "\n";

  std::optional<neural::ModelParams<float>> params;
  if (nn) params = neural::load_checkpoint<float>(a.checkpoint).frozen();
  MethodOptions opt;
  opt.iters = a.iters;
  opt.null_doas = a.nulls;
  opt.steering_rtf = a.rtf == "steering";
  if (params) opt.stft = params->cfg.stft;

  const fs::path dir = fs::path(a.out) / a.method;
  fs::create_directories(dir);
  parallel_for(m.entries.size(), jobs, [&](std::size_t i) {
    const auto& e = m.entries[i];
    const auto b = scene::load_bundle(m, e);
    MethodOutput r;
    if (nn) {
      auto it = neural::prepare_item(b, e.id, opt.stft);
      it.rtf = oracle_rtf(b, opt);
      const auto doas = a.nulls.empty() ? beamforming::default_null_doas(b.scene.interferers.size()) : a.nulls;
      const auto init = beamforming::initial_beamformers(it.rtf, doas, it.geometry);
      const auto f = neural::nn_tflc_forward(*params, it.x, it.rtf, init, it.length);
      r.estimate.assign(f.estimate.values().begin(), f.estimate.values().end());
      r.weights = neural::to_weight_field(f.alpha2);
    } else {
      r = run_classical(b, a.method, opt);
    }
    spectral::write_wav(dir / (e.id + ".wav"), spectral::Waveform::mono(std::move(r.estimate), b.mixture.sample_rate));
    if (a.save_weights && r.weights) combination::save_weights(dir / (e.id + ".weights"), *r.weights);
  });
  err << "processed " << m.entries.size() << " mixtures with " << a.method << "\n";
  return kOk;
}

template <class S>
int train_as(const TrainArgs& a, unsigned jobs, std::ostream& out) {
  neural::ModelParams<S> p;
  if (!a.init.empty()) {
    p = neural::load_checkpoint<float>(a.init).template cast<S>();
  } else {
    neural::ModelConfig mc;
    mc.channels = a.channels;
    mc.groups = a.groups;
    mc.stft.window_len = a.window;
    mc.stft.hop = a.hop;
    mc.lambda = a.lambda;
    mc.entropy_on = neural::entropy_on_from(a.entropy_on);
    p = neural::init_params<S>(mc, a.seed);
  }
  neural::TrainConfig tc;
  tc.epochs = a.epochs;
  tc.lr = a.lr;
  tc.lr_decay = a.decay;
  tc.decay_every = a.decay_every;
  tc.batch = a.batch;
  tc.beams = a.beams;
  tc.seed = a.seed;
  tc.jobs = jobs;
  tc.validate();

  const nlohmann::json echo{{"command", "train"},       {"corpus", a.corpus},   {"val_corpus", a.val_corpus},
                            {"out", a.out},             {"init", a.init},       {"precision", a.precision},
                            {"model", neural::to_json(p.cfg)},
                            {"epochs", a.epochs},       {"lr", a.lr},           {"lr_decay", a.decay},
                            {"decay_every", a.decay_every}, {"batch", a.batch}, {"beams", a.beams},
                            {"seed", a.seed},           {"jobs", jobs}};
  out << echo.dump() << "\n";
  write_bytes(fs::path(a.out) / "config.json", echo.dump(2) + "\n");

  const auto train_m = scene::Manifest::load(require_corpus(a.corpus));
  const auto train_items = neural::prepare_corpus(train_m, p.cfg.stft, jobs);
  std::vector<neural::TrainItem> val_items;
  if (!a.val_corpus.empty()) val_items = neural::prepare_corpus(scene::Manifest::load(a.val_corpus), p.cfg.stft, jobs);
  const auto res = neural::train(p, train_items, val_items, tc, fs::path(a.out), [&](const neural::EpochLog& e) {
    out << e.to_json().dump() << "\n" << std::flush;
  });
  out << "best epoch " << res.best_epoch << " score " << res.best_score << " dB\n";
  return kOk;
}

inline int cmd_train(const TrainArgs& a, unsigned jobs, std::ostream& out) {
  if (a.out.empty()) throw UsageError("train needs --out");
  return a.precision == "double" ? train_as<double>(a, jobs, out) : train_as<float>(a, jobs, out);
}

inline std::vector<std::string> methods_in(const fs::path& outputs) {
  std::vector<std::string> found;
  if (fs::is_directory(outputs))
    for (const auto& d : fs::directory_iterator(outputs))
      if (d.is_directory() && is_known_method(d.path().filename().string())) found.push_back(d.path().filename().string());
  std::sort(found.begin(), found.end());
  return found;
}

inline int cmd_evaluate(const EvalArgs& a, unsigned jobs, std::ostream& out, std::ostream& err) {
  if (a.outputs.empty()) throw UsageError("evaluate needs --outputs");
  const auto m = scene::Manifest::load(require_corpus(a.corpus));
  const auto methods = a.methods.empty() ? methods_in(a.outputs) : a.methods;
  if (methods.empty()) throw UsageError("no method output directories under " + a.outputs + "; pass --methods");
  const fs::path csv = a.csv.empty() ? fs::path(a.outputs) / "metrics.csv" : fs::path(a.csv);
  const fs::path json = a.json.empty() ? fs::path(a.outputs) / "metrics.json" : fs::path(a.json);
  out << nlohmann::json{{"command", "evaluate"}, {"corpus", a.corpus}, {"outputs", a.outputs},
                        {"methods", methods},    {"csv", csv.string()}, {"json", json.string()},
                        {"jobs", jobs}}
             .dump()
      << "\n";
  const auto rep = evaluation::evaluate_corpus(m, a.outputs, methods, jobs);
  write_bytes(csv, evaluation::to_csv(rep.records));
  write_bytes(json, evaluation::to_json(rep).dump(2) + "\n");
  for (const auto& g : rep.aggregates)
    out << g.method << " " << g.split << " n=" << g.count << " SI-SDR " << g.si_sdr_mean << " +- " << g.si_sdr_std
        << " SI-SIR " << g.si_sir_mean << " +- " << g.si_sir_std << "\n";
  if (!rep.ok()) {
    err << rep.missing.size() << " missing outputs:\n";
    for (const auto& id : rep.missing) err << "  " << id << "\n";
    return kFailure;
  }
  return kOk;
}

inline int cmd_plot(const PlotArgs& a, std::ostream& out) {
  if (a.input.empty() || a.out.empty()) throw UsageError("plot needs --input and --out");
  GrayImage img;
  if (fs::path(a.input).extension() == ".wav") {
    spectral::StftConfig cfg;
    cfg.window_len = a.window;
    cfg.hop = a.hop;
    const auto w = spectral::read_wav(a.input);
    cfg.sample_rate = w.sample_rate;
    img = spectrogram_image(spectral::stft(w, cfg), a.channel, a.floor_db);
  } else {
    img = weight_image(combination::load_weights(a.input), a.beam);
  }
  write_image(a.out, img);
  out << "wrote " << img.width << "x" << img.height << " image to " << a.out << "\n";
  return kOk;
}

}  // namespace detail

/// Parses and runs one command. Returns the process exit code.
inline int run_cli(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Beamformer combination for two-microphone speech enhancement", "tflc"};
  app.set_config("--config", "", "TOML config file; flags override it");
  app.require_subcommand(1);
  unsigned jobs = 1;
  app.add_option("--jobs", jobs, "Worker threads; results do not depend on it")->check(CLI::Range(1u, 256u));

  GenArgs g;
  auto* gen = app.add_subcommand("gen-corpus", "Simulate a corpus of reverberant two-microphone mixtures");
  gen->add_option("--out", g.out, "Corpus directory")->envname(kCorpusEnv);
  gen->add_option("--count", g.count, "Number of mixtures")->check(CLI::PositiveNumber);
  gen->add_option("--interferers", g.interferers, "Interferer counts (2, 3, 4), split evenly")
      ->check(CLI::Range(2, 4))
      ->delimiter(',');
  gen->add_option("--seed", g.seed);
  gen->add_option("--duration", g.duration, "Seconds per mixture")->check(CLI::PositiveNumber);
  gen->add_option("--source-pool", g.source_pool, "Directory of clean speech WAVs (default: synthetic)");
  gen->add_option("--id-prefix", g.id_prefix);

  RunArgs r;
  auto* run = app.add_subcommand("run", "Enhance every mixture of a corpus with one method");
  run->add_option("--corpus", r.corpus)->envname(kCorpusEnv);
  std::vector<std::string> all_methods = classical_methods();
  all_methods.push_back("nn-tflc-mpdr");
  run->add_option("--method", r.method)->required()->check(CLI::IsMember(all_methods));
  run->add_option("--iters", r.iters, "Refinement iterations");
  run->add_option("--nulls", r.nulls, "Initial null DOAs in degrees")->delimiter(',');
  run->add_option("--checkpoint", r.checkpoint, "Model checkpoint for nn-tflc-mpdr");
  run->add_option("--rtf", r.rtf, "oracle (from the target image) or steering")
      ->check(CLI::IsMember({"oracle", "steering"}));
  run->add_option("--out", r.out, "Output root; files go to <out>/<method>/<id>.wav")->required();
  run->add_flag("--save-weights", r.save_weights, "Also write <id>.weights combination weights");

  TrainArgs t;
  auto* tr = app.add_subcommand("train", "Train the attention combination network");
  tr->add_option("--corpus", t.corpus)->envname(kCorpusEnv);
  tr->add_option("--val-corpus", t.val_corpus);
  tr->add_option("--out", t.out, "Directory for checkpoints and the training log")->required();
  tr->add_option("--init", t.init, "Continue from this checkpoint (its model config wins)");
  tr->add_option("--epochs", t.epochs)->check(CLI::PositiveNumber);
  tr->add_option("--lr", t.lr)->check(CLI::PositiveNumber);
  tr->add_option("--lr-decay", t.decay)->check(CLI::PositiveNumber);
  tr->add_option("--decay-every", t.decay_every)->check(CLI::PositiveNumber);
  tr->add_option("--batch", t.batch)->check(CLI::PositiveNumber);
  tr->add_option("--beams", t.beams, "Beams per training mixture")->check(CLI::IsMember({2, 4}));
  tr->add_option("--channels", t.channels)->check(CLI::PositiveNumber);
  tr->add_option("--groups", t.groups)->check(CLI::PositiveNumber);
  tr->add_option("--window", t.window);
  tr->add_option("--hop", t.hop);
  tr->add_option("--lambda", t.lambda)->check(CLI::NonNegativeNumber);
  tr->add_option("--entropy-on", t.entropy_on)->check(CLI::IsMember({"both", "final", "first"}));
  tr->add_option("--precision", t.precision)->check(CLI::IsMember({"float", "double"}));
  tr->add_option("--seed", t.seed);

  EvalArgs e;
  auto* ev = app.add_subcommand("evaluate", "Score method outputs against the oracle references");
  ev->add_option("--corpus", e.corpus)->envname(kCorpusEnv);
  ev->add_option("--outputs", e.outputs, "Output root written by run")->required();
  ev->add_option("--methods", e.methods, "Methods to score (default: every method directory)")->delimiter(',');
  ev->add_option("--csv", e.csv);
  ev->add_option("--json", e.json);

  PlotArgs pl;
  auto* plot = app.add_subcommand("plot", "Render a spectrogram (.wav) or weight map (.weights) as PNG or PGM");
  plot->add_option("--input", pl.input)->required();
  plot->add_option("--out", pl.out)->required();
  plot->add_option("--beam", pl.beam);
  plot->add_option("--channel", pl.channel);
  plot->add_option("--floor-db", pl.floor_db)->check(CLI::Range(-300.0, -1e-9));
  plot->add_option("--window", pl.window);
  plot->add_option("--hop", pl.hop);

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& ex) {
    // Prints help for --help, or the error plus a usage hint.
    const int code = app.exit(ex, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return detail::cmd_gen_corpus(g, jobs, out);
    if (*run) return detail::cmd_run(r, jobs, out, err);
    if (*tr) return detail::cmd_train(t, jobs, out);
    if (*ev) return detail::cmd_evaluate(e, jobs, out, err);
    if (*plot) return detail::cmd_plot(pl, out);
  } catch (const UsageError& ex) {
    err << "usage error: " << ex.what() << "\n";
    return kUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

inline int run_cli(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run_cli(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace tflc::app
