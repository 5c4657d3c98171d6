#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "tflc/common/random.hpp"
#include "tflc/scene/scene_spec.hpp"
#include "tflc/spectral/stft.hpp"

namespace tflc::scene {

/// Spherically isotropic coherence sin(x)/x with x = 2 pi f d / c.
inline double diffuse_coherence(double f, double distance, double c = kSpeedOfSound) {
  const double x = 2.0 * std::numbers::pi * f * distance / c;
  return std::abs(x) < 1e-12 ? 1.0 : std::sin(x) / x;
}

/// Multichannel noise for a uniform linear array in a spherically isotropic
/// field. Independent white Gaussian channels are mixed per STFT bin by the
/// Cholesky factor of the target coherence matrix, so every channel keeps
/// unit variance.
inline spectral::Waveform render_diffuse_noise(int channels, double spacing, std::size_t length, double fs,
                                               Rng& rng) {
  require(channels >= 1, "render_diffuse_noise: need at least one channel");
  spectral::Waveform white(static_cast<std::size_t>(channels), length, fs);
  for (auto& ch : white.channels)
    for (auto& v : ch) v = gaussian(rng);
  if (channels == 1 || length == 0) return white;

  spectral::StftConfig cfg{512, 128, spectral::WindowKind::hann, fs};
  auto spec = spectral::stft(white, cfg);
  const std::size_t M = static_cast<std::size_t>(channels);
  Eigen::MatrixXd gamma(M, M);
  Eigen::VectorXcd in(M), out(M);
  for (std::size_t f = 0; f < spec.bins(); ++f) {
    const double hz = double(f) * fs / double(cfg.window_len);
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t k = 0; k < M; ++k)
        gamma(i, k) = diffuse_coherence(hz, spacing * std::abs(double(i) - double(k)));
    // Small jitter keeps the factorization defined where the matrix is
    // numerically rank one (low frequencies).
    gamma.diagonal().array() += 1e-10;
    const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(gamma).matrixL();
    for (std::size_t t = 0; t < spec.frames(); ++t) {
      for (std::size_t m = 0; m < M; ++m) in(m) = spec(m, f, t);
      out = chol.cast<std::complex<double>>() * in;
      for (std::size_t m = 0; m < M; ++m) spec(m, f, t) = out(m);
    }
  }
  return spectral::istft(spec, cfg, length);
}

}  // namespace tflc::scene
