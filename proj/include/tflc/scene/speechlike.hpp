#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "tflc/common/random.hpp"
#include "tflc/spectral/types.hpp"

namespace tflc::scene {

namespace detail {

/// Two-pole resonator normalized to unit gain at its centre frequency.
struct Resonator {
  double a1 = 0, a2 = 0, g = 0, y1 = 0, y2 = 0;
  void tune(double freq, double bw, double fs) {
    const double r = std::exp(-std::numbers::pi * bw / fs);
    const double th = 2.0 * std::numbers::pi * freq / fs;
    a1 = 2.0 * r * std::cos(th);
    a2 = -r * r;
    g = (1.0 - r) * std::sqrt(1.0 - 2.0 * r * std::cos(2.0 * th) + r * r);
  }
  double step(double x) {
    const double y = g * x + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

}  // namespace detail

/// Speech-like stand-in for clean utterances: glottal pulse trains and
/// fricative noise shaped by a -6 dB/octave tilt and moving formant
/// resonances, gated into syllables, words and pauses. Active samples are
/// normalized to unit RMS.
inline spectral::Waveform synth_speechlike(Rng& rng, double duration, double fs = 16000.0) {
  require(duration > 0, "synth_speechlike: duration must be positive");
  const std::size_t n = static_cast<std::size_t>(std::llround(duration * fs));
  std::vector<double> out(n, 0.0);
  std::vector<char> active(n, 0);

  const double base_f0 = uniform(rng, 90.0, 220.0);
  detail::Resonator formants[3];
  double tilt_state = 0.0;
  const double tilt_pole = std::exp(-2.0 * std::numbers::pi * 300.0 / fs);
  double phase = 0.0;

  std::size_t pos = static_cast<std::size_t>(uniform(rng, 0.0, 0.3) * fs);
  while (pos < n) {
    // One word: a run of syllables followed by a pause.
    const int syllables = 1 + static_cast<int>(uniform(rng, 0.0, 4.0));
    for (int s = 0; s < syllables && pos < n; ++s) {
      const std::size_t len = static_cast<std::size_t>(uniform(rng, 0.12, 0.3) * fs);
      const bool voiced = uniform(rng, 0.0, 1.0) < 0.8;
      const double gain = uniform(rng, 0.4, 1.0);
      const double f0_start = base_f0 * uniform(rng, 0.8, 1.2);
      const double f0_end = f0_start * uniform(rng, 0.85, 1.15);
      const double f1 = uniform(rng, 300.0, 800.0), f2 = uniform(rng, 900.0, 2300.0),
                   f3 = uniform(rng, 2400.0, 3200.0);
      formants[0].tune(f1, uniform(rng, 60.0, 120.0), fs);
      formants[1].tune(f2, uniform(rng, 80.0, 150.0), fs);
      formants[2].tune(f3, uniform(rng, 100.0, 200.0), fs);
      for (std::size_t i = 0; i < len && pos + i < n; ++i) {
        const double frac = double(i) / double(len);
        double exc;
        if (voiced) {
          const double f0 = f0_start + (f0_end - f0_start) * frac;
          phase += f0 / fs;
          exc = 0.05 * gaussian(rng);
          if (phase >= 1.0) {
            phase -= 1.0;
            exc += std::sqrt(fs / f0);
          }
        } else {
          exc = gaussian(rng);
        }
        tilt_state = (1.0 - tilt_pole) * exc + tilt_pole * tilt_state;
        const double shaped = voiced ? tilt_state : 0.5 * tilt_state;
        double y = shaped;
        for (auto& r : formants) y += 1.5 * r.step(shaped);
        const double env = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * frac);
        out[pos + i] = gain * std::sqrt(env) * y;
        active[pos + i] = 1;
      }
      pos += len;
    }
    pos += static_cast<std::size_t>(uniform(rng, 0.08, 0.4) * fs);
  }

  double energy = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (active[i]) {
      energy += out[i] * out[i];
      ++count;
    }
  if (count > 0 && energy > 0) {
    const double scale = 1.0 / std::sqrt(energy / double(count));
    for (auto& v : out) v *= scale;
  }
  return spectral::Waveform::mono(std::move(out), fs);
}

}  // namespace tflc::scene
