#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "tflc/common/parallel.hpp"
#include "tflc/evaluation/metrics.hpp"
#include "tflc/neural/model.hpp"
#include "tflc/scene/corpus.hpp"

namespace tflc::neural {

/// One mixture prepared for the network: STFT, oracle RTF, reference.
struct TrainItem {
  std::string id;
  int n_interferers = 2;
  MultichannelSpectrogram x;
  Rtf rtf;
  std::vector<double> ref;  // target image at the reference mic
  std::size_t length = 0;
  beamforming::ArrayGeometry geometry;
};

inline TrainItem prepare_item(const scene::MixtureBundle& b, const std::string& id, const spectral::StftConfig& stft) {
  TrainItem it;
  it.id = id;
  it.n_interferers = static_cast<int>(b.scene.interferers.size());
  it.geometry = {b.scene.mic_spacing, stft.sample_rate, stft.window_len, scene::kSpeedOfSound};
  it.x = spectral::stft(b.mixture, stft);
  it.rtf = beamforming::estimate_rtf(spectral::stft(b.target_image, stft), 0, b.scene.target.doa_deg, it.geometry);
  it.ref = b.target_image[0];
  it.length = b.mixture.length();
  return it;
}

inline std::vector<TrainItem> prepare_corpus(const scene::Manifest& m, const spectral::StftConfig& stft,
                                             unsigned jobs = 1) {
  std::vector<TrainItem> items(m.entries.size());
  parallel_for(items.size(), jobs, [&](std::size_t i) {
    items[i] = prepare_item(scene::load_bundle(m, m.entries[i]), m.entries[i].id, stft);
  });
  return items;
}

struct TrainConfig {
  std::size_t epochs = 20;
  double lr = 6e-4;
  double lr_decay = 0.8;
  std::size_t decay_every = 10;
  std::size_t batch = 4;
  std::size_t beams = 2;  // J during training: 2 or 4
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  unsigned jobs = 1;

  void validate() const {
    require(epochs >= 1 && batch >= 1, "TrainConfig: epochs and batch must be positive");
    require(lr > 0.0 && lr_decay > 0.0 && decay_every >= 1, "TrainConfig: invalid learning-rate schedule");
    require(beams == 2 || beams == 4, "TrainConfig: training uses 2 or 4 beams");
  }
};

/// Step decay: lr0 * decay^floor((epoch - 1) / every), epochs counted from 1.
inline double learning_rate(const TrainConfig& c, std::size_t epoch) {
  require(epoch >= 1, "learning_rate: epochs are 1-indexed");
  return c.lr * std::pow(c.lr_decay, double((epoch - 1) / c.decay_every));
}

template <class S>
struct Adam {
  std::vector<std::vector<S>> m, v;
  std::size_t step = 0;

  void update(ModelParams<S>& p, const std::vector<std::vector<double>>& grads, double lr, const TrainConfig& c) {
    if (m.empty())
      for (const auto& [_, t] : p.tensors) m.emplace_back(t.size(), S(0)), v.emplace_back(t.size(), S(0));
    ++step;
    const double bc1 = 1.0 - std::pow(c.adam_beta1, double(step)), bc2 = 1.0 - std::pow(c.adam_beta2, double(step));
    for (std::size_t k = 0; k < p.tensors.size(); ++k) {
      auto& vals = p.tensors[k].second.values();
      for (std::size_t i = 0; i < vals.size(); ++i) {
        const double g = grads[k][i];
        m[k][i] = S(c.adam_beta1 * double(m[k][i]) + (1.0 - c.adam_beta1) * g);
        v[k][i] = S(c.adam_beta2 * double(v[k][i]) + (1.0 - c.adam_beta2) * g * g);
        const double mh = double(m[k][i]) / bc1, vh = double(v[k][i]) / bc2;
        vals[i] = S(double(vals[i]) - lr * mh / (std::sqrt(vh) + c.adam_eps));
      }
    }
  }
};

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_si_sdr = 0.0;
  std::optional<double> val_si_sdr;
  double alpha2_entropy = 0.0;  // mean per-bin entropy of the final weights (nats)

  nlohmann::json to_json() const {
    nlohmann::json j{{"epoch", epoch},
                     {"lr", lr},
                     {"train_loss", train_loss},
                     {"train_si_sdr", train_si_sdr},
                     {"alpha2_entropy", alpha2_entropy}};
    j["val_si_sdr"] = val_si_sdr ? nlohmann::json(*val_si_sdr) : nlohmann::json(nullptr);
    return j;
  }
};

struct TrainResult {
  std::vector<EpochLog> log;  // entry 0 is the untrained model
  std::size_t best_epoch = 0;
  double best_score = -1e300;
};

struct EvalResult {
  double si_sdr = 0.0;
  double alpha2_entropy = 0.0;
};

/// Forward-only pass at fixed nulls; means over items.
template <class S>
EvalResult evaluate_items(const ModelParams<S>& params, const std::vector<TrainItem>& items, std::size_t beams,
                          unsigned jobs = 1) {
  const auto p = params.frozen();
  std::vector<double> sdr(items.size()), ent(items.size());
  parallel_for(items.size(), jobs, [&](std::size_t i) {
    const auto& it = items[i];
    const auto init = beamforming::initial_beamformers(it.rtf, beamforming::default_null_doas(beams == 2 ? 2 : 4), it.geometry);
    const auto r = nn_tflc_forward(p, it.x, it.rtf, init, it.length);
    sdr[i] = evaluation::si_sdr(std::vector<double>(r.estimate.values().begin(), r.estimate.values().end()), it.ref);
    ent[i] = mean_bin_entropy(r.alpha2);
  });
  EvalResult e;
  for (std::size_t i = 0; i < items.size(); ++i) e.si_sdr += sdr[i], e.alpha2_entropy += ent[i];
  if (!items.empty()) e.si_sdr /= double(items.size()), e.alpha2_entropy /= double(items.size());
  return e;
}

/// Trains in place. Every batch item runs on its own parameter copy and the
/// gradients are summed in item order, so results do not depend on `jobs`.
/// Writes best.ckpt, last.ckpt and train_log.jsonl into `out_dir` when given.
template <class S>
TrainResult train(ModelParams<S>& params, const std::vector<TrainItem>& train_items,
                  const std::vector<TrainItem>& val_items, const TrainConfig& cfg,
                  const std::optional<fs::path>& out_dir = std::nullopt,
                  const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  require(!train_items.empty(), "train: no training mixtures");
  std::ofstream log_file;
  if (out_dir) {
    fs::create_directories(*out_dir);
    log_file.open(*out_dir / "train_log.jsonl", std::ios::trunc);
    if (!log_file) throw IoError("cannot write training log in " + out_dir->string());
  }
  auto emit = [&](const EpochLog& e) {
    if (log_file) log_file << e.to_json().dump() << "\n" << std::flush;
    if (on_epoch) on_epoch(e);
  };

  TrainResult res;
  {
    const auto e0 = evaluate_items(params, train_items, cfg.beams, cfg.jobs);
    EpochLog l0;
    l0.train_si_sdr = e0.si_sdr;
    l0.alpha2_entropy = e0.alpha2_entropy;
    if (!val_items.empty()) l0.val_si_sdr = evaluate_items(params, val_items, cfg.beams, cfg.jobs).si_sdr;
    res.log.push_back(l0);
    emit(l0);
  }

  Adam<S> adam;
  const std::size_t B = cfg.batch;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = learning_rate(cfg, epoch);
    Rng erng(child_seed(cfg.seed, epoch));
    std::vector<std::size_t> order(train_items.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), erng);

    double loss_sum = 0.0, sdr_sum = 0.0, ent_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += B) {
      const std::size_t nb = std::min(B, order.size() - start);
      std::vector<std::vector<double>> nulls(nb);
      for (auto& n : nulls) n = beamforming::random_null_doas(erng, cfg.beams);

      std::vector<ModelParams<S>> local(nb);
      std::vector<double> loss(nb), sdr(nb), ent(nb);
      parallel_for(nb, cfg.jobs, [&](std::size_t b) {
        const auto& it = train_items[order[start + b]];
        local[b] = params.clone();
        const auto init = beamforming::initial_beamformers(it.rtf, nulls[b], it.geometry);
        const auto r = nn_tflc_forward(local[b], it.x, it.rtf, init, it.length);
        const auto L = model_loss(local[b], r, it.ref);
        backward(L);
        loss[b] = double(L.item());
        sdr[b] = evaluation::si_sdr(std::vector<double>(r.estimate.values().begin(), r.estimate.values().end()), it.ref);
        ent[b] = mean_bin_entropy(r.alpha2);
      });
      for (std::size_t b = 0; b < nb; ++b) {
        if (!std::isfinite(loss[b])) {
          if (out_dir) save_checkpoint(*out_dir / "diverged.ckpt", params, {{"epoch", epoch}});
          throw Error("training diverged (non-finite loss) at epoch " + std::to_string(epoch) +
                      "; parameters saved to diverged.ckpt");
        }
        loss_sum += loss[b], sdr_sum += sdr[b], ent_sum += ent[b];
      }
      std::vector<std::vector<double>> grads;
      for (std::size_t k = 0; k < params.tensors.size(); ++k) {
        std::vector<double> g(params.tensors[k].second.size(), 0.0);
        for (std::size_t b = 0; b < nb; ++b) {
          const auto& gb = local[b].tensors[k].second.grad();
          if (gb.empty()) continue;
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += double(gb[i]);
        }
        for (auto& v : g) v /= double(nb);
        grads.push_back(std::move(g));
      }
      adam.update(params, grads, lr, cfg);
    }

    EpochLog l;
    l.epoch = epoch;
    l.lr = lr;
    const double n = double(train_items.size());
    l.train_loss = loss_sum / n;
    l.train_si_sdr = sdr_sum / n;
    l.alpha2_entropy = ent_sum / n;
    if (!val_items.empty()) l.val_si_sdr = evaluate_items(params, val_items, cfg.beams, cfg.jobs).si_sdr;
    const double score = l.val_si_sdr ? *l.val_si_sdr : l.train_si_sdr;
    if (score > res.best_score) {
      res.best_score = score;
      res.best_epoch = epoch;
      if (out_dir) save_checkpoint(*out_dir / "best.ckpt", params, {{"epoch", epoch}, {"score", score}});
    }
    if (out_dir) save_checkpoint(*out_dir / "last.ckpt", params, {{"epoch", epoch}, {"score", score}});
    res.log.push_back(l);
    emit(l);
  }
  return res;
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;
};

/// Central differences against reverse-mode gradients on `samples` entries
/// spread over every tensor in `leaves`. `loss` rebuilds the graph each call.
inline GradCheckReport grad_check(std::vector<std::pair<std::string, Tensor<double>>>& leaves,
                                  const std::function<Tensor<double>()>& loss, std::size_t samples,
                                  std::uint64_t seed, double h = 1e-4, double floor = 1e-6) {
  for (auto& [_, t] : leaves) t.zero_grad();
  backward(loss());
  Rng rng(seed);
  GradCheckReport rep;
  const std::size_t per = std::max<std::size_t>(1, (samples + leaves.size() - 1) / leaves.size());
  for (auto& [name, t] : leaves) {
    const std::vector<double> analytic = t.grad().empty() ? std::vector<double>(t.size(), 0.0) : t.grad();
    for (std::size_t s = 0; s < per; ++s) {
      const std::size_t i = std::uniform_int_distribution<std::size_t>(0, t.size() - 1)(rng);
      const double orig = t.values()[i];
      t.values()[i] = orig + h;
      const double lp = loss().item();
      t.values()[i] = orig - h;
      const double lm = loss().item();
      t.values()[i] = orig;
      const double fd = (lp - lm) / (2 * h);
      const double err = std::abs(fd - analytic[i]) / std::max({std::abs(fd), std::abs(analytic[i]), floor});
      ++rep.checked;
      if (err > rep.max_rel_error) {
        rep.max_rel_error = err;
        rep.worst = name + "[" + std::to_string(i) + "] fd=" + std::to_string(fd) + " bp=" + std::to_string(analytic[i]);
      }
    }
  }
  return rep;
}

/// Full-model check on one prepared item with the refined beams frozen (the
/// refinement is a constant stage, so finite differences must not see it move).
inline GradCheckReport grad_check_model(ModelParams<double>& p, const TrainItem& it, const BeamformerSet& init,
                                        std::size_t samples, std::uint64_t seed, double h = 1e-4) {
  const auto frozen = nn_tflc_forward(p, it.x, it.rtf, init, it.length).refined;
  return grad_check(
      p.tensors, [&] { return model_loss(p, nn_tflc_forward(p, it.x, it.rtf, init, it.length, &frozen), it.ref); },
      samples, seed, h);
}

}  // namespace tflc::neural
