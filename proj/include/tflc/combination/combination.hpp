#pragma once

#include <algorithm>
#include <array>
#include <complex>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <vector>

#include "tflc/beamforming/beamforming.hpp"
#include "tflc/common/error.hpp"
#include "tflc/spectral/types.hpp"

namespace tflc::combination {

using cplx = std::complex<double>;
using spectral::MultichannelSpectrogram;

/// Combination weights alpha(j, f, t); every bin lies on the simplex.
struct WeightField {
  std::size_t J = 0, F = 0, T = 0;
  std::vector<double> alpha;  // (j * F + f) * T + t

  WeightField() = default;
  WeightField(std::size_t j, std::size_t f, std::size_t t) : J(j), F(f), T(t), alpha(j * f * t, 0.0) {}

  double& operator()(std::size_t j, std::size_t f, std::size_t t) { return alpha[(j * F + f) * T + t]; }
  double operator()(std::size_t j, std::size_t f, std::size_t t) const { return alpha[(j * F + f) * T + t]; }

  /// F x T weights of beam j, the layout masked_covariance expects.
  std::vector<double> slice(std::size_t j) const {
    return {alpha.begin() + static_cast<std::ptrdiff_t>(j * F * T),
            alpha.begin() + static_cast<std::ptrdiff_t>((j + 1) * F * T)};
  }

  void validate(bool one_hot = false) const {
    require_dims(alpha.size() == J * F * T && J >= 1, "WeightField: shape mismatch");
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t t = 0; t < T; ++t) {
        double sum = 0.0;
        for (std::size_t j = 0; j < J; ++j) {
          const double a = (*this)(j, f, t);
          require(a >= 0.0 && a <= 1.0, "WeightField: weight outside [0, 1]");
          if (one_hot) require(a == 0.0 || a == 1.0, "WeightField: selection weights must be one-hot");
          sum += a;
        }
        require(std::abs(sum - 1.0) <= 1e-6, "WeightField: weights do not sum to one");
      }
  }
};

/// Outputs of J candidate beamformers, y(j, f, t).
struct BeamOutputs {
  std::size_t J = 0, F = 0, T = 0;
  std::vector<cplx> y;

  BeamOutputs() = default;
  BeamOutputs(std::size_t j, std::size_t f, std::size_t t) : J(j), F(f), T(t), y(j * f * t) {}

  cplx& operator()(std::size_t j, std::size_t f, std::size_t t) { return y[(j * F + f) * T + t]; }
  const cplx& operator()(std::size_t j, std::size_t f, std::size_t t) const { return y[(j * F + f) * T + t]; }
};

inline BeamOutputs beam_outputs(const beamforming::BeamformerSet& beams, const MultichannelSpectrogram& x) {
  require(!beams.empty(), "beam_outputs: no beamformers");
  BeamOutputs out(beams.size(), x.bins(), x.frames());
  const std::size_t plane = x.bins() * x.frames();
  for (std::size_t j = 0; j < beams.size(); ++j) {
    auto yj = beamforming::apply_beamformer(beams[j], x);
    std::copy(yj.data().begin(), yj.data().end(), out.y.begin() + static_cast<std::ptrdiff_t>(j * plane));
  }
  return out;
}

inline WeightField tfs_select(const BeamOutputs& y) {
  require(y.J >= 1, "tfs_select: need at least one beam");
  WeightField w(y.J, y.F, y.T);
  for (std::size_t f = 0; f < y.F; ++f)
    for (std::size_t t = 0; t < y.T; ++t) {
      std::size_t best = 0;
      double best_p = std::norm(y(0, f, t));
      for (std::size_t j = 1; j < y.J; ++j) {
        const double p = std::norm(y(j, f, t));
        if (p < best_p) best = j, best_p = p;
      }
      w(best, f, t) = 1.0;
    }
  return w;
}

namespace detail {

constexpr std::size_t kMaxBeams = 8;

// Same accumulation order as combine(), so comparisons are exact.
inline double combined_power(const cplx* y, const double* a, std::size_t J) {
  cplx s = 0.0;
  for (std::size_t j = 0; j < J; ++j) s += a[j] * y[j];
  return std::norm(s);
}

// Weight on y_i when minimizing |a y_i + (1 - a) y_k| over a in [0, 1].
inline double segment_weight(cplx yi, cplx yk) {
  const double d = std::norm(yi - yk);
  if (d == 0.0) return 0.5;
  return std::clamp((std::conj(yk) * (yk - yi)).real() / d, 0.0, 1.0);
}

}  // namespace detail

/// Minimizes |sum_j a_j y_j|^2 over the probability simplex for one bin.
/// In the complex plane the minimum-norm point of the convex hull sits on a
/// vertex, on an edge, or at the origin inside a triangle, so supports of
/// size three or less cover every case.
inline void tflc_bin(const cplx* y, std::size_t J, double* a) {
  std::fill(a, a + J, 0.0);
  if (J == 1) {
    a[0] = 1.0;
    return;
  }
  bool all_equal = true;
  for (std::size_t j = 1; j < J; ++j) all_equal = all_equal && y[j] == y[0];
  if (all_equal) {
    std::fill(a, a + J, 1.0 / double(J));
    return;
  }

  std::size_t v = 0;
  for (std::size_t j = 1; j < J; ++j)
    if (std::norm(y[j]) < std::norm(y[v])) v = j;
  a[v] = 1.0;
  double best = std::norm(y[v]);
  if (best == 0.0) return;

  std::array<double, detail::kMaxBeams> cand{};
  auto consider = [&] {
    const double p = detail::combined_power(y, cand.data(), J);
    if (p < best) {
      best = p;
      std::copy(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(J), a);
    }
  };

  for (std::size_t i = 0; i < J; ++i)
    for (std::size_t k = i + 1; k < J; ++k) {
      cand.fill(0.0);
      cand[i] = detail::segment_weight(y[i], y[k]);
      cand[k] = 1.0 - cand[i];
      consider();
    }

  // Origin strictly inside a triangle: barycentric coordinates of 0.
  for (std::size_t i = 0; i < J; ++i)
    for (std::size_t k = i + 1; k < J; ++k)
      for (std::size_t l = k + 1; l < J; ++l) {
        const cplx e1 = y[k] - y[i], e2 = y[l] - y[i];
        const double det = e1.real() * e2.imag() - e1.imag() * e2.real();
        if (det == 0.0) continue;
        const cplx r = -y[i];
        const double b1 = (r.real() * e2.imag() - r.imag() * e2.real()) / det;
        const double b2 = (e1.real() * r.imag() - e1.imag() * r.real()) / det;
        const double b0 = 1.0 - b1 - b2;
        if (b0 < 0.0 || b1 < 0.0 || b2 < 0.0) continue;
        cand.fill(0.0);
        cand[i] = b0, cand[k] = b1, cand[l] = b2;
        consider();
      }
}

inline WeightField tflc_weights(const BeamOutputs& y) {
  require(y.J >= 1 && y.J <= detail::kMaxBeams, "tflc_weights: beam count must be in [1, 8]");
  WeightField w(y.J, y.F, y.T);
  std::array<cplx, detail::kMaxBeams> yb{};
  std::array<double, detail::kMaxBeams> ab{};
  for (std::size_t f = 0; f < y.F; ++f)
    for (std::size_t t = 0; t < y.T; ++t) {
      for (std::size_t j = 0; j < y.J; ++j) yb[j] = y(j, f, t);
      tflc_bin(yb.data(), y.J, ab.data());
      for (std::size_t j = 0; j < y.J; ++j) w(j, f, t) = ab[j];
    }
  return w;
}

/// S(f, t) = sum_j alpha(j, f, t) y(j, f, t) as a one-channel spectrogram.
inline MultichannelSpectrogram combine(const WeightField& alpha, const BeamOutputs& y) {
  require_dims(alpha.J == y.J && alpha.F == y.F && alpha.T == y.T, "combine: dimension mismatch");
  MultichannelSpectrogram out(1, y.F, y.T);
  for (std::size_t f = 0; f < y.F; ++f)
    for (std::size_t t = 0; t < y.T; ++t) {
      cplx s = 0.0;
      for (std::size_t j = 0; j < y.J; ++j) s += alpha(j, f, t) * y(j, f, t);
      out(0, f, t) = s;
    }
  return out;
}

enum class CombineMode { tfs, tflc };
enum class CovarianceSource { mpdr, mvdr };

inline WeightField select_weights(const BeamOutputs& y, CombineMode mode) {
  return mode == CombineMode::tfs ? tfs_select(y) : tflc_weights(y);
}

struct RefineResult {
  MultichannelSpectrogram estimate;
  WeightField weights;
  beamforming::BeamformerSet beams;
};

/// Alternates weight selection and masked-covariance beamformer updates.
/// MVDR mode reads the oracle noise-only spectrogram for both the weights
/// and the covariances; the final estimate always combines beams applied to x.
inline RefineResult iterative_refine(const MultichannelSpectrogram& x, const MultichannelSpectrogram* noise_only,
                                     const beamforming::Rtf& rtf, const beamforming::BeamformerSet& init,
                                     CombineMode mode, CovarianceSource cov, int iters = 5,
                                     const beamforming::LoadingConfig& load = {}) {
  require(iters >= 1, "iterative_refine: need at least one iteration");
  require(!init.empty(), "iterative_refine: no initial beamformers");
  if (cov == CovarianceSource::mvdr) {
    require(noise_only != nullptr, "iterative_refine: MVDR mode needs the noise-only spectrogram");
    require_dims(noise_only->channels() == x.channels() && noise_only->bins() == x.bins() &&
                     noise_only->frames() == x.frames(),
                 "iterative_refine: noise-only shape differs from mixture");
  }
  const MultichannelSpectrogram& src = cov == CovarianceSource::mvdr ? *noise_only : x;
  const auto kind = cov == CovarianceSource::mvdr ? beamforming::BeamformerKind::mvdr : beamforming::BeamformerKind::mpdr;

  RefineResult r;
  r.beams = init;
  for (int it = 0; it < iters; ++it) {
    const WeightField alpha = select_weights(beam_outputs(r.beams, src), mode);
    for (std::size_t j = 0; j < r.beams.size(); ++j) {
      auto updated = beamforming::mpdr_update(beamforming::masked_covariance(src, alpha.slice(j)), rtf, kind, load);
      updated.null_doa = r.beams[j].null_doa;
      r.beams[j] = std::move(updated);
    }
  }
  r.weights = select_weights(beam_outputs(r.beams, src), mode);
  r.estimate = combine(r.weights, beam_outputs(r.beams, x));
  return r;
}

// Dense float32 export: eight u32 header words, then alpha in (j, f, t) order.
constexpr std::uint32_t kWeightMagic = 0x574C4654;  // "TFLW"
constexpr std::uint32_t kWeightVersion = 1;

inline std::vector<unsigned char> encode_weights(const WeightField& w) {
  const std::array<std::uint32_t, 8> head{kWeightMagic, kWeightVersion, static_cast<std::uint32_t>(w.J),
                                          static_cast<std::uint32_t>(w.F), static_cast<std::uint32_t>(w.T), 0, 0, 0};
  std::vector<unsigned char> out(sizeof(head) + w.alpha.size() * sizeof(float));
  std::memcpy(out.data(), head.data(), sizeof(head));
  unsigned char* p = out.data() + sizeof(head);
  for (double a : w.alpha) {
    const float v = static_cast<float>(a);
    std::memcpy(p, &v, sizeof v);
    p += sizeof v;
  }
  return out;
}

inline WeightField decode_weights(const std::vector<unsigned char>& bytes) {
  std::array<std::uint32_t, 8> head{};
  if (bytes.size() < sizeof(head)) throw ParseError("weight file: truncated header");
  std::memcpy(head.data(), bytes.data(), sizeof(head));
  if (head[0] != kWeightMagic) throw ParseError("weight file: bad magic");
  if (head[1] != kWeightVersion) throw ParseError("weight file: unsupported version");
  const std::size_t n = std::size_t(head[2]) * head[3] * head[4];
  if (bytes.size() != sizeof(head) + n * sizeof(float)) throw ParseError("weight file: size does not match header");
  WeightField w(head[2], head[3], head[4]);
  const unsigned char* p = bytes.data() + sizeof(head);
  for (std::size_t i = 0; i < n; ++i) {
    float v;
    std::memcpy(&v, p + i * sizeof v, sizeof v);
    w.alpha[i] = v;
  }
  return w;
}

inline void save_weights(const std::filesystem::path& path, const WeightField& w) {
  const auto bytes = encode_weights(w);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

inline WeightField load_weights(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_weights(bytes);
}

}  // namespace tflc::combination
