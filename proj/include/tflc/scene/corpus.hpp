#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tflc/common/parallel.hpp"
#include "tflc/common/random.hpp"
#include "tflc/scene/mixture.hpp"
#include "tflc/scene/scene_spec.hpp"
#include "tflc/scene/speechlike.hpp"
#include "tflc/spectral/wav.hpp"

namespace tflc::scene {

namespace fs = std::filesystem;

struct CorpusConfig {
  std::size_t count = 10;
  /// Relative weights of the 2/3/4-interferer subsets. A single nonzero
  /// entry produces a single-condition corpus.
  std::map<int, double> split_ratio{{2, 1.0}};
  std::uint64_t seed = 0;
  std::optional<fs::path> source_pool;
  double duration_s = 6.0;
  double sample_rate = 16000.0;
  std::string id_prefix = "mix";
  unsigned jobs = 1;
  SceneRanges ranges;
};

inline std::string split_name(int n_interferers) { return std::to_string(n_interferers) + "I"; }

/// Deterministic allocation of `count` entries to subsets by largest remainder.
inline std::vector<std::pair<int, std::size_t>> split_counts(const CorpusConfig& cfg) {
  double total = 0;
  for (auto [n, w] : cfg.split_ratio) {
    require(n >= 2 && n <= 4, "CorpusConfig: interferer counts must be in {2,3,4}");
    require(w >= 0, "CorpusConfig: negative split weight");
    total += w;
  }
  require(total > 0, "CorpusConfig: split ratios sum to zero");
  std::vector<std::pair<int, std::size_t>> out;
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t assigned = 0;
  for (auto [n, w] : cfg.split_ratio) {
    const double exact = double(cfg.count) * w / total;
    const auto base = static_cast<std::size_t>(exact);
    rem.emplace_back(exact - double(base), out.size());
    out.emplace_back(n, base);
    assigned += base;
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto a, auto b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < cfg.count; ++i, ++assigned) out[rem[i % rem.size()].second].second++;
  return out;
}

/// Source utterance provider: WAV files from a pool directory, or the
/// synthetic speech-like generator when no pool is configured.
class SourceProvider {
 public:
  explicit SourceProvider(const CorpusConfig& cfg) : cfg_(cfg) {
    if (!cfg.source_pool) return;
    require(fs::is_directory(*cfg.source_pool), "source pool is not a directory: " + cfg.source_pool->string());
    for (const auto& e : fs::recursive_directory_iterator(*cfg.source_pool))
      if (e.is_regular_file() && e.path().extension() == ".wav") files_.push_back(e.path());
    std::sort(files_.begin(), files_.end());
    require(!files_.empty(), "source pool contains no .wav files");
  }

  bool synthetic() const { return files_.empty(); }
  std::size_t pool_size() const { return files_.size(); }

  /// Draws `k` distinct mono utterances of the configured length.
  std::vector<std::pair<spectral::Waveform, std::string>> draw(Rng& rng, std::size_t k) const {
    const auto len = static_cast<std::size_t>(std::llround(cfg_.duration_s * cfg_.sample_rate));
    std::vector<std::pair<spectral::Waveform, std::string>> out;
    if (synthetic()) {
      for (std::size_t i = 0; i < k; ++i) {
        const auto s = rng();
        Rng child(s);
        auto w = synth_speechlike(child, cfg_.duration_s, cfg_.sample_rate);
        w[0].resize(len, 0.0);
        out.emplace_back(std::move(w), "synthetic:" + std::to_string(s));
      }
      return out;
    }
    if (files_.size() < k)
      throw PreconditionError("source pool has " + std::to_string(files_.size()) +
                              " utterances, need " + std::to_string(k) + " distinct per mixture");
    std::vector<std::size_t> idx(files_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
      const auto j = i + static_cast<std::size_t>(rng() % (idx.size() - i));
      std::swap(idx[i], idx[j]);
      auto w = spectral::read_wav(files_[idx[i]]);
      require(w.sample_rate == cfg_.sample_rate, "source " + files_[idx[i]].string() + " has the wrong sample rate");
      std::vector<double> mono = w[0];
      std::size_t offset = 0;
      if (mono.size() > len) offset = static_cast<std::size_t>(rng() % (mono.size() - len + 1));
      std::vector<double> seg(len, 0.0);
      for (std::size_t t = 0; t < len && offset + t < mono.size(); ++t) seg[t] = mono[offset + t];
      out.emplace_back(spectral::Waveform::mono(std::move(seg), cfg_.sample_rate),
                       fs::relative(files_[idx[i]], *cfg_.source_pool).generic_string());
    }
    return out;
  }

 private:
  CorpusConfig cfg_;
  std::vector<fs::path> files_;
};

struct CorpusEntry {
  std::string id;
  int n_interferers = 2;
  SceneSpec scene;
  std::string mixture;
  std::string target;
  std::vector<std::string> interferers;
  std::string noise;
  std::vector<std::string> sources;
};

inline void to_json(nlohmann::json& j, const CorpusEntry& e) {
  j = {{"id", e.id},
       {"split", split_name(e.n_interferers)},
       {"n_interferers", e.n_interferers},
       {"scene", e.scene},
       {"files", {{"mixture", e.mixture}, {"target", e.target}, {"interferers", e.interferers}, {"noise", e.noise}}},
       {"sources", e.sources}};
}
inline void from_json(const nlohmann::json& j, CorpusEntry& e) {
  j.at("id").get_to(e.id);
  j.at("n_interferers").get_to(e.n_interferers);
  j.at("scene").get_to(e.scene);
  const auto& f = j.at("files");
  f.at("mixture").get_to(e.mixture);
  f.at("target").get_to(e.target);
  f.at("interferers").get_to(e.interferers);
  f.at("noise").get_to(e.noise);
  if (j.contains("sources")) j.at("sources").get_to(e.sources);
}

struct Manifest {
  fs::path root;
  double sample_rate = 16000.0;
  double duration_s = 6.0;
  std::uint64_t seed = 0;
  bool synthetic_sources = true;
  std::vector<CorpusEntry> entries;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format"] = "tflc-corpus";
    j["version"] = 1;
    j["sample_rate"] = sample_rate;
    j["duration_s"] = duration_s;
    j["seed"] = seed;
    j["synthetic_sources"] = synthetic_sources;
    j["entries"] = entries;
    return j;
  }

  static Manifest load(const fs::path& root) {
    const auto path = root / "manifest.json";
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("manifest: " + std::string(e.what()));
    }
    if (j.value("format", "") != "tflc-corpus") throw ParseError("manifest: not a tflc corpus");
    Manifest m;
    m.root = root;
    try {
      j.at("sample_rate").get_to(m.sample_rate);
      j.at("duration_s").get_to(m.duration_s);
      j.at("seed").get_to(m.seed);
      j.at("synthetic_sources").get_to(m.synthetic_sources);
      j.at("entries").get_to(m.entries);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("manifest: " + std::string(e.what()));
    }
    return m;
  }
};

/// Loads the mixture and oracle components of one manifest entry.
inline MixtureBundle load_bundle(const Manifest& m, const CorpusEntry& e) {
  MixtureBundle b;
  b.scene = e.scene;
  b.mixture = spectral::read_wav(m.root / e.mixture);
  b.target_image = spectral::read_wav(m.root / e.target);
  for (const auto& p : e.interferers) b.interferer_images.push_back(spectral::read_wav(m.root / p));
  b.noise = spectral::read_wav(m.root / e.noise);
  return b;
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

/// Renders one corpus entry; depends only on (cfg.seed, index).
inline CorpusEntry render_entry(const CorpusConfig& cfg, const SourceProvider& sources, const fs::path& root,
                                std::size_t index, int n_interferers) {
  Rng rng(child_seed(cfg.seed, index));
  CorpusEntry e;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu", index);
  e.id = cfg.id_prefix + buf;
  e.n_interferers = n_interferers;
  e.scene = sample_scene(rng, n_interferers, cfg.ranges);
  auto drawn = sources.draw(rng, static_cast<std::size_t>(n_interferers) + 1);
  std::vector<spectral::Waveform> intf;
  for (std::size_t i = 1; i < drawn.size(); ++i) intf.push_back(drawn[i].first);
  for (const auto& d : drawn) e.sources.push_back(d.second);
  Rng noise_rng(e.scene.seed);
  const auto b = synthesize_mixture(e.scene, drawn[0].first, intf, noise_rng);

  e.mixture = "mix/" + e.id + ".wav";
  e.target = "ref/" + e.id + "_target.wav";
  e.noise = "ref/" + e.id + "_noise.wav";
  spectral::write_wav(root / e.mixture, b.mixture);
  spectral::write_wav(root / e.target, b.target_image);
  spectral::write_wav(root / e.noise, b.noise);
  for (std::size_t i = 0; i < b.interferer_images.size(); ++i) {
    e.interferers.push_back("ref/" + e.id + "_intf" + std::to_string(i + 1) + ".wav");
    spectral::write_wav(root / e.interferers.back(), b.interferer_images[i]);
  }
  return e;
}

/// Writes a corpus directory (mix/, ref/, manifest.json). Output is a pure
/// function of the config; scenes may be rendered on several threads.
inline Manifest generate_corpus(const CorpusConfig& cfg, const fs::path& root) {
  require(cfg.duration_s > 0, "CorpusConfig: duration must be positive");
  SourceProvider sources(cfg);
  std::vector<int> plan;
  for (auto [n, c] : split_counts(cfg)) plan.insert(plan.end(), c, n);

  Manifest m;
  m.root = root;
  m.sample_rate = cfg.sample_rate;
  m.duration_s = cfg.duration_s;
  m.seed = cfg.seed;
  m.synthetic_sources = sources.synthetic();
  m.entries.resize(plan.size());
  fs::create_directories(root / "mix");
  fs::create_directories(root / "ref");

  parallel_for(plan.size(), cfg.jobs, [&](std::size_t i) { m.entries[i] = render_entry(cfg, sources, root, i, plan[i]); });

  write_text_file(root / "manifest.json", m.to_json().dump(2) + "\n");
  return m;
}

}  // namespace tflc::scene
