#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "tflc/common/error.hpp"
#include "tflc/scene/scene_spec.hpp"

namespace tflc::scene {

struct Rir {
  std::vector<double> taps;
  double sample_rate = 16000.0;
};

struct RirOptions {
  double sample_rate = 16000.0;
  double speed_of_sound = kSpeedOfSound;
  /// Maximum image order; negative means "everything that fits in the RIR".
  int max_order = -1;
  /// RIR length as a multiple of t60 * fs.
  double length_factor = 1.2;
  /// Width of the windowed-sinc fractional-delay kernel, in taps.
  int sinc_taps = 8;
  /// Wall reflection coefficient; when unset the closed-form value from
  /// reflection_coefficient() is used.
  std::optional<double> beta;
  /// Allen-Berkley 100 Hz high-pass; removes the DC build-up of the
  /// all-positive image pulses. Skipped for anechoic (order 0) responses.
  bool high_pass = true;
};

/// Sabine estimate of the uniform wall reflection coefficient:
/// a = 24 ln(10) V / (c S T60), beta = sqrt(1 - a).
inline double reflection_coefficient(const Vec3& room, double t60, double c = kSpeedOfSound) {
  require(t60 > 0, "reflection_coefficient: t60 must be positive");
  const double volume = room[0] * room[1] * room[2];
  const double surface = 2.0 * (room[0] * room[1] + room[0] * room[2] + room[1] * room[2]);
  const double alpha = 24.0 * std::log(10.0) * volume / (c * surface * t60);
  require(alpha < 1.0, "reflection_coefficient: t60 too short for this room");
  return std::sqrt(1.0 - alpha);
}

inline std::size_t rir_length(double t60, const RirOptions& opt) {
  return static_cast<std::size_t>(std::ceil(opt.length_factor * t60 * opt.sample_rate));
}

/// Image-method room impulse response between a point source and an
/// omnidirectional microphone in a shoebox room.
inline Rir simulate_rir(const Vec3& room, double t60, const Vec3& source, const Vec3& mic,
                        const RirOptions& opt = {}) {
  for (int i = 0; i < 3; ++i) {
    require(source[i] > 0 && source[i] < room[i], "simulate_rir: source outside room");
    require(mic[i] > 0 && mic[i] < room[i], "simulate_rir: microphone outside room");
  }
  const double fs = opt.sample_rate;
  const double c = opt.speed_of_sound;
  const std::size_t n_taps = std::max<std::size_t>(rir_length(t60, opt), 1);
  const double beta = opt.max_order == 0 ? 0.0 : opt.beta.value_or(reflection_coefficient(room, t60, c));
  const int half = opt.sinc_taps / 2;

  Rir rir;
  rir.sample_rate = fs;
  rir.taps.assign(n_taps, 0.0);

  // Distances in samples.
  const double cts = c / fs;
  const Vec3 L{room[0] / cts, room[1] / cts, room[2] / cts};
  const Vec3 s{source[0] / cts, source[1] / cts, source[2] / cts};
  const Vec3 r{mic[0] / cts, mic[1] / cts, mic[2] / cts};
  int n[3];
  for (int d = 0; d < 3; ++d) n[d] = static_cast<int>(std::ceil(double(n_taps) / (2.0 * L[d])));
  if (opt.max_order >= 0)
    for (int d = 0; d < 3; ++d) n[d] = std::min(n[d], opt.max_order);

  std::vector<double> bpow(static_cast<std::size_t>(2 * (n[0] + n[1] + n[2]) + 4), 1.0);
  for (std::size_t i = 1; i < bpow.size(); ++i) bpow[i] = bpow[i - 1] * beta;

  const double limit = double(n_taps) + half;
  for (int mx = -n[0]; mx <= n[0]; ++mx) {
    for (int my = -n[1]; my <= n[1]; ++my) {
      for (int mz = -n[2]; mz <= n[2]; ++mz) {
        for (int q = 0; q <= 1; ++q) {
          const double dx = (1 - 2 * q) * s[0] - r[0] + 2 * mx * L[0];
          const int ox = std::abs(mx - q) + std::abs(mx);
          for (int j = 0; j <= 1; ++j) {
            const double dy = (1 - 2 * j) * s[1] - r[1] + 2 * my * L[1];
            const int oy = std::abs(my - j) + std::abs(my);
            for (int k = 0; k <= 1; ++k) {
              const double dz = (1 - 2 * k) * s[2] - r[2] + 2 * mz * L[2];
              const int oz = std::abs(mz - k) + std::abs(mz);
              const int order = ox + oy + oz;
              if (opt.max_order >= 0 && order > opt.max_order) continue;
              const double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
              if (dist >= limit) continue;
              const double gain = bpow[static_cast<std::size_t>(order)] / (4.0 * std::numbers::pi * dist * cts);
              const long centre = std::lround(dist);
              if (std::abs(dist - double(centre)) < 1e-12) {
                if (centre >= 0 && centre < long(n_taps)) rir.taps[centre] += gain;
                continue;
              }
              const long first = static_cast<long>(std::floor(dist)) - half + 1;
              for (long t = first; t < first + 2 * half; ++t) {
                if (t < 0 || t >= long(n_taps)) continue;
                const double x = double(t) - dist;
                const double win = 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * x / opt.sinc_taps));
                const double px = std::numbers::pi * x;
                rir.taps[t] += gain * win * std::sin(px) / px;
              }
            }
          }
        }
      }
    }
  }
  if (opt.high_pass && opt.max_order != 0) {
    const double w = 2.0 * std::numbers::pi * 100.0 / fs;
    const double r1 = std::exp(-w), b1 = 2.0 * r1 * std::cos(w), b2 = -r1 * r1, a1 = -(1.0 + r1);
    double y0 = 0, y1 = 0, y2 = 0;
    for (auto& v : rir.taps) {
      y2 = y1;
      y1 = y0;
      y0 = b1 * y1 + b2 * y2 + v;
      v = y0 + a1 * y1 + r1 * y2;
    }
  }
  return rir;
}

namespace detail {

inline double fit_decay_t60(const std::vector<double>& energy, double dt) {
  std::vector<double> edc(energy.size());
  double acc = 0.0;
  for (std::size_t i = energy.size(); i-- > 0;) {
    acc += energy[i];
    edc[i] = acc;
  }
  if (!(acc > 0)) return 0.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t cnt = 0;
  for (std::size_t i = 0; i < energy.size(); ++i) {
    const double db = 10.0 * std::log10(edc[i] / acc);
    if (db <= -5.0 && db >= -25.0) {
      const double t = double(i) * dt;
      sx += t;
      sy += db;
      sxx += t * t;
      sxy += t * db;
      ++cnt;
    }
  }
  if (cnt < 3) return 0.0;
  const double slope = (double(cnt) * sxy - sx * sy) / (double(cnt) * sxx - sx * sx);
  return slope < 0 ? -60.0 / slope : 0.0;
}

}  // namespace detail

/// Reflection coefficient that makes the Schroeder decay of the simulated
/// response match `t60` for this source/microphone pair.
///
/// Shoebox image sources with uniform absorption decay more slowly than the
/// diffuse-field formulas predict (paths grazing the floor and ceiling reflect
/// rarely), so the closed-form coefficient overshoots the requested T60. The
/// image energies are binned once by arrival time and reflection order; the
/// decay for any beta is then a polynomial per bin, and beta is found by
/// bisection.
inline double calibrated_reflection_coefficient(const Vec3& room, double t60, const Vec3& source, const Vec3& mic,
                                                const RirOptions& opt = {}) {
  const double fs = opt.sample_rate;
  const double cts = opt.speed_of_sound / fs;
  const std::size_t n_taps = std::max<std::size_t>(rir_length(t60, opt), 1);
  constexpr std::size_t bin_len = 16;
  const std::size_t n_bins = (n_taps + bin_len - 1) / bin_len;
  const Vec3 L{room[0] / cts, room[1] / cts, room[2] / cts};
  const Vec3 s{source[0] / cts, source[1] / cts, source[2] / cts};
  const Vec3 r{mic[0] / cts, mic[1] / cts, mic[2] / cts};
  int n[3];
  for (int d = 0; d < 3; ++d) n[d] = static_cast<int>(std::ceil(double(n_taps) / (2.0 * L[d])));
  const std::size_t max_order = static_cast<std::size_t>(2 * (n[0] + n[1] + n[2]) + 2);

  // energy[bin * (max_order + 1) + order] = sum of 1/d^2 over images.
  std::vector<double> table(n_bins * (max_order + 1), 0.0);
  for (int mx = -n[0]; mx <= n[0]; ++mx)
    for (int my = -n[1]; my <= n[1]; ++my)
      for (int mz = -n[2]; mz <= n[2]; ++mz)
        for (int q = 0; q <= 1; ++q)
          for (int j = 0; j <= 1; ++j)
            for (int k = 0; k <= 1; ++k) {
              const double dx = (1 - 2 * q) * s[0] - r[0] + 2 * mx * L[0];
              const double dy = (1 - 2 * j) * s[1] - r[1] + 2 * my * L[1];
              const double dz = (1 - 2 * k) * s[2] - r[2] + 2 * mz * L[2];
              const double d2 = dx * dx + dy * dy + dz * dz;
              const double dist = std::sqrt(d2);
              if (dist >= double(n_taps)) continue;
              const auto order = static_cast<std::size_t>(std::abs(mx - q) + std::abs(mx) + std::abs(my - j) +
                                                          std::abs(my) + std::abs(mz - k) + std::abs(mz));
              table[static_cast<std::size_t>(dist) / bin_len * (max_order + 1) + order] += 1.0 / d2;
            }

  std::vector<double> energy(n_bins);
  auto decay_for = [&](double beta) {
    const double b2 = beta * beta;
    for (std::size_t b = 0; b < n_bins; ++b) {
      double acc = 0.0, p = 1.0;
      const double* row = table.data() + b * (max_order + 1);
      for (std::size_t o = 0; o <= max_order; ++o, p *= b2) acc += row[o] * p;
      energy[b] = acc;
    }
    return detail::fit_decay_t60(energy, double(bin_len) / fs);
  };

  double lo = 0.0, hi = 0.9999;
  for (int it = 0; it < 50; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (decay_for(mid) < t60)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

/// Reverberation time from a Schroeder backward integral, fitted by least
/// squares over the -5 dB to -25 dB range and extrapolated to 60 dB.
inline double schroeder_t60(const std::vector<double>& h, double fs) {
  std::vector<double> edc(h.size());
  double acc = 0.0;
  for (std::size_t i = h.size(); i-- > 0;) {
    acc += h[i] * h[i];
    edc[i] = acc;
  }
  require(acc > 0, "schroeder_t60: silent response");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t cnt = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double db = 10.0 * std::log10(edc[i] / acc);
    if (db <= -5.0 && db >= -25.0) {
      const double t = double(i) / fs;
      sx += t;
      sy += db;
      sxx += t * t;
      sxy += t * db;
      ++cnt;
    }
  }
  require(cnt > 2, "schroeder_t60: decay range not covered");
  const double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  return -60.0 / slope;
}

}  // namespace tflc::scene
