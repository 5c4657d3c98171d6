#pragma once

#include <cmath>
#include <vector>

#include "tflc/common/random.hpp"
#include "tflc/scene/diffuse_noise.hpp"
#include "tflc/scene/rir.hpp"
#include "tflc/scene/scene_spec.hpp"
#include "tflc/spectral/fft.hpp"
#include "tflc/spectral/types.hpp"

namespace tflc::scene {

/// A rendered mixture together with its oracle components.
struct MixtureBundle {
  spectral::Waveform mixture;
  spectral::Waveform target_image;
  std::vector<spectral::Waveform> interferer_images;
  spectral::Waveform noise;
  SceneSpec scene;
  /// Wall reflection coefficient the RIRs were rendered with.
  double wall_reflection = 0.0;

  /// Sum of all interferer images and noise (the MVDR oracle input).
  spectral::Waveform noise_only() const {
    spectral::Waveform out = noise;
    for (const auto& img : interferer_images)
      for (std::size_t m = 0; m < out.num_channels(); ++m)
        for (std::size_t i = 0; i < out.length(); ++i) out[m][i] += img[m][i];
    return out;
  }
};

inline double mean_power(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc / double(x.size());
}

inline double power_ratio_db(const std::vector<double>& num, const std::vector<double>& den) {
  return 10.0 * std::log10(mean_power(num) / mean_power(den));
}

/// Reverberant image of a dry mono source at every microphone of the array.
inline spectral::Waveform render_image(const SceneSpec& spec, const SourcePlacement& src,
                                       const std::vector<double>& dry, double fs,
                                       const RirOptions& base = {}) {
  RirOptions opt = base;
  opt.sample_rate = fs;
  spectral::Waveform img(static_cast<std::size_t>(spec.num_mics), dry.size(), fs);
  const auto pos = spec.source_position(src);
  for (int k = 0; k < spec.num_mics; ++k) {
    const auto rir = simulate_rir(spec.room_dims, spec.t60, pos, spec.mic_position(k), opt);
    auto wet = spectral::fft_convolve(dry, rir.taps);
    std::copy(wet.begin(), wet.begin() + static_cast<long>(dry.size()), img[static_cast<std::size_t>(k)].begin());
  }
  return img;
}

/// Renders the scene: reverberant images, per-interferer SIR calibration
/// against the target at the reference microphone, diffuse plus white noise
/// at the requested ratio, and SNR calibration against the reverberant target.
inline MixtureBundle synthesize_mixture(const SceneSpec& spec, const spectral::Waveform& target_dry,
                                        const std::vector<spectral::Waveform>& interferer_dry, Rng& rng,
                                        const RirOptions& rir_opt = {}) {
  require(target_dry.num_channels() == 1, "synthesize_mixture: target must be mono");
  require(interferer_dry.size() == spec.interferers.size(),
          "synthesize_mixture: one dry signal per interferer required");
  const double fs = target_dry.sample_rate;
  const std::size_t len = target_dry.length();
  require(len > 0, "synthesize_mixture: empty target");
  require(mean_power(target_dry[0]) > 0, "synthesize_mixture: silent target (SIR undefined)");
  for (const auto& d : interferer_dry) {
    require(d.num_channels() == 1 && d.length() == len && d.sample_rate == fs,
            "synthesize_mixture: interferers must be mono with the target's length and rate");
    require(mean_power(d[0]) > 0, "synthesize_mixture: silent interferer (SIR undefined)");
  }
  constexpr std::size_t ref = 0;

  MixtureBundle b;
  b.scene = spec;
  RirOptions opt = rir_opt;
  opt.sample_rate = fs;
  if (!opt.beta && opt.max_order != 0)
    opt.beta = calibrated_reflection_coefficient(spec.room_dims, spec.t60, spec.source_position(spec.target),
                                                 spec.mic_position(0), opt);
  b.wall_reflection = opt.beta.value_or(0.0);
  b.target_image = render_image(spec, spec.target, target_dry[0], fs, opt);
  const double p_target = mean_power(b.target_image[ref]);
  require(p_target > 0, "synthesize_mixture: target image is silent");

  for (std::size_t i = 0; i < spec.interferers.size(); ++i) {
    auto img = render_image(spec, spec.interferers[i], interferer_dry[i][0], fs, opt);
    const double p = mean_power(img[ref]);
    require(p > 0, "synthesize_mixture: interferer image is silent");
    const double scale = std::sqrt(p_target / (p * std::pow(10.0, spec.sir_db[i] / 10.0)));
    for (auto& ch : img.channels)
      for (auto& v : ch) v *= scale;
    b.interferer_images.push_back(std::move(img));
  }

  auto diffuse = render_diffuse_noise(spec.num_mics, spec.mic_spacing, len, fs, rng);
  spectral::Waveform white(static_cast<std::size_t>(spec.num_mics), len, fs);
  for (auto& ch : white.channels)
    for (auto& v : ch) v = gaussian(rng);
  const double white_scale = std::sqrt(mean_power(diffuse[ref]) /
                                       (mean_power(white[ref]) * std::pow(10.0, spec.diffuse_to_white_db / 10.0)));
  b.noise = spectral::Waveform(static_cast<std::size_t>(spec.num_mics), len, fs);
  for (std::size_t m = 0; m < b.noise.num_channels(); ++m)
    for (std::size_t i = 0; i < len; ++i) b.noise[m][i] = diffuse[m][i] + white_scale * white[m][i];
  const double noise_scale =
      std::sqrt(p_target / (mean_power(b.noise[ref]) * std::pow(10.0, spec.snr_db / 10.0)));
  for (auto& ch : b.noise.channels)
    for (auto& v : ch) v *= noise_scale;

  b.mixture = b.target_image;
  for (std::size_t m = 0; m < b.mixture.num_channels(); ++m) {
    for (std::size_t i = 0; i < len; ++i) {
      double acc = b.target_image[m][i];
      for (const auto& img : b.interferer_images) acc += img[m][i];
      acc += b.noise[m][i];
      b.mixture[m][i] = acc;
    }
  }
  return b;
}

}  // namespace tflc::scene
