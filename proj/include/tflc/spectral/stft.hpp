#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "tflc/spectral/fft.hpp"
#include "tflc/spectral/types.hpp"

namespace tflc::spectral {

/// Periodic (DFT-even) Hann window.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

inline std::vector<double> analysis_window(const StftConfig& cfg) {
  return hann_window(cfg.window_len);
}

/// Squared-window overlap envelope at each output sample; 1.5 in the
/// interior for Hann at hop = len/4, smaller near the edges.
inline std::vector<double> synthesis_envelope(const StftConfig& cfg, std::size_t frames,
                                              std::size_t out_len) {
  const auto w = analysis_window(cfg);
  const long half = static_cast<long>(cfg.window_len / 2);
  std::vector<double> env(out_len, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    const long start = static_cast<long>(t * cfg.hop) - half;
    for (std::size_t n = 0; n < cfg.window_len; ++n) {
      const long idx = start + static_cast<long>(n);
      if (idx >= 0 && idx < static_cast<long>(out_len)) env[idx] += w[n] * w[n];
    }
  }
  return env;
}

/// Forward STFT. Frames are centred at t * hop (the signal is padded with
/// window_len/2 zeros on both sides), giving ceil(len/hop) + 1 frames.
inline MultichannelSpectrogram stft(const Waveform& wave, const StftConfig& cfg) {
  cfg.validate();
  require(!wave.empty(), "stft: empty waveform");
  require(wave.sample_rate == cfg.sample_rate, "stft: sample-rate mismatch");
  const std::size_t len = wave.length();
  const std::size_t frames = cfg.num_frames(len);
  const std::size_t bins = cfg.num_bins();
  const long half = static_cast<long>(cfg.window_len / 2);
  const auto w = analysis_window(cfg);

  MultichannelSpectrogram out(wave.num_channels(), bins, frames);
  std::vector<double> frame(cfg.window_len);
  for (std::size_t m = 0; m < wave.num_channels(); ++m) {
    const auto& x = wave[m];
    require_dims(x.size() == len, "stft: channel lengths differ");
    for (std::size_t t = 0; t < frames; ++t) {
      const long start = static_cast<long>(t * cfg.hop) - half;
      for (std::size_t n = 0; n < cfg.window_len; ++n) {
        const long idx = start + static_cast<long>(n);
        frame[n] = (idx >= 0 && idx < static_cast<long>(len)) ? x[idx] * w[n] : 0.0;
      }
      const auto spec = rfft(frame);
      for (std::size_t f = 0; f < bins; ++f) out(m, f, t) = spec[f];
    }
  }
  return out;
}

/// Weighted overlap-add inverse of stft(), truncated or zero-padded to out_len.
inline Waveform istft(const MultichannelSpectrogram& spec, const StftConfig& cfg, std::size_t out_len) {
  cfg.validate();
  require_dims(spec.bins() == cfg.num_bins(), "istft: bin count does not match window length");
  const std::size_t frames = spec.frames();
  const long half = static_cast<long>(cfg.window_len / 2);
  const auto w = analysis_window(cfg);
  const auto env = synthesis_envelope(cfg, frames, out_len);

  Waveform out(spec.channels(), out_len, cfg.sample_rate);
  std::vector<cplx> col(spec.bins());
  for (std::size_t m = 0; m < spec.channels(); ++m) {
    auto& y = out[m];
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t f = 0; f < spec.bins(); ++f) col[f] = spec(m, f, t);
      col.front() = cplx(col.front().real(), 0.0);
      col.back() = cplx(col.back().real(), 0.0);
      const auto frame = irfft(col, cfg.window_len);
      const long start = static_cast<long>(t * cfg.hop) - half;
      for (std::size_t n = 0; n < cfg.window_len; ++n) {
        const long idx = start + static_cast<long>(n);
        if (idx >= 0 && idx < static_cast<long>(out_len)) y[idx] += frame[n] * w[n];
      }
    }
    for (std::size_t i = 0; i < out_len; ++i)
      if (env[i] > 1e-12) y[i] /= env[i];
  }
  return out;
}

}  // namespace tflc::spectral
