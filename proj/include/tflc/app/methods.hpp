#pragma once

#include <string>
#include <vector>

#include "tflc/beamforming/beamforming.hpp"
#include "tflc/combination/combination.hpp"
#include "tflc/scene/mixture.hpp"
#include "tflc/spectral/stft.hpp"

namespace tflc::app {

inline const std::vector<std::string>& classical_methods() {
  static const std::vector<std::string> m{"unprocessed", "mvdr", "tfs-mvdr", "tflc-mvdr", "tfs-mpdr", "tflc-mpdr"};
  return m;
}

inline bool is_known_method(const std::string& m) {
  const auto& c = classical_methods();
  return m == "nn-tflc-mpdr" || std::find(c.begin(), c.end(), m) != c.end();
}

struct MethodOptions {
  int iters = 5;
  std::vector<double> null_doas;  // empty: defaults for the interferer count
  bool steering_rtf = false;      // free-field RTF at the scene's target DOA
  spectral::StftConfig stft;
};

struct MethodOutput {
  std::vector<double> estimate;  // time domain, mixture length
  std::optional<combination::WeightField> weights;
  beamforming::BeamformerSet beams;
  beamforming::Rtf rtf;
};

inline beamforming::ArrayGeometry geometry_of(const scene::SceneSpec& s, const spectral::StftConfig& cfg) {
  return {s.mic_spacing, cfg.sample_rate, cfg.window_len, scene::kSpeedOfSound};
}

inline beamforming::Rtf oracle_rtf(const scene::MixtureBundle& b, const MethodOptions& opt) {
  const auto g = geometry_of(b.scene, opt.stft);
  if (opt.steering_rtf)
    return beamforming::steering_rtf(b.scene.target.doa_deg, b.mixture.num_channels(), opt.stft.num_bins(), g);
  return beamforming::estimate_rtf(spectral::stft(b.target_image, opt.stft), 0, b.scene.target.doa_deg, g);
}

inline std::vector<double> resynthesize(const spectral::MultichannelSpectrogram& s, const spectral::StftConfig& cfg,
                                        std::size_t len) {
  return spectral::istft(s, cfg, len)[0];
}

/// Runs one classical method on a loaded corpus entry.
inline MethodOutput run_classical(const scene::MixtureBundle& b, const std::string& method,
                                  const MethodOptions& opt = {}) {
  MethodOutput out;
  const std::size_t len = b.mixture.length();
  if (method == "unprocessed") {
    out.estimate = b.mixture[0];
    return out;
  }
  const auto x = spectral::stft(b.mixture, opt.stft);
  out.rtf = oracle_rtf(b, opt);
  const bool mvdr = method.find("mvdr") != std::string::npos;
  spectral::MultichannelSpectrogram noise;
  if (mvdr) {
    require(!b.interferer_images.empty() || !b.noise.empty(), "MVDR methods need oracle interference references");
    noise = spectral::stft(b.noise_only(), opt.stft);
  }

  if (method == "mvdr") {
    auto bf = beamforming::mpdr_update(beamforming::sample_covariance(noise), out.rtf, beamforming::BeamformerKind::mvdr);
    out.estimate = resynthesize(beamforming::apply_beamformer(bf, x), opt.stft, len);
    out.beams = {std::move(bf)};
    return out;
  }

  combination::CombineMode mode;
  if (method == "tfs-mvdr" || method == "tfs-mpdr")
    mode = combination::CombineMode::tfs;
  else if (method == "tflc-mvdr" || method == "tflc-mpdr")
    mode = combination::CombineMode::tflc;
  else
    throw UsageError("unknown classical method: " + method);

  const auto doas = opt.null_doas.empty()
                        ? beamforming::default_null_doas(b.scene.interferers.size())
                        : opt.null_doas;
  const auto init = beamforming::initial_beamformers(out.rtf, doas, geometry_of(b.scene, opt.stft));
  auto r = combination::iterative_refine(x, mvdr ? &noise : nullptr, out.rtf, init, mode,
                                         mvdr ? combination::CovarianceSource::mvdr : combination::CovarianceSource::mpdr,
                                         opt.iters);
  out.estimate = resynthesize(r.estimate, opt.stft, len);
  out.weights = std::move(r.weights);
  out.beams = std::move(r.beams);
  return out;
}

}  // namespace tflc::app
